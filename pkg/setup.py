from setuptools import setup

setup(
    name='blistr',
    version='0.1',
    packages=['blistr', 'blistr.lib'],
    install_requires=[
        'setuptools',
        'pandas',
        'numpy',
        'tqdm',
        'psutil',
        'seaborn',
        'matplotlib',
    ],
    extras_require={
        'test': ['pytest'],
    },
)
