import json
import logging
import sys
from os.path import abspath, dirname, join

import pytest

ROOT = dirname(dirname(abspath(__file__)))
sys.path.insert(0, ROOT)
sys.path.insert(0, join(ROOT, 'cli'))

from blistr.backend import BackendConfig, ProblemInstance, Runner, parse_landscape  # noqa: E402
from blistr.space import make_strategy, parse_space  # noqa: E402

DATA = join(ROOT, 'data')

TOY_PARAMS = ['x0', 'x1', 'x2', 'x3', 'x4', 'x5']
TARGETS = {'a': '000000', 'b': '111111'}
SEEDS = {'a': '100000', 'b': '011111'}


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long acceptance experiments')


def bits(pattern):
    return dict(zip(TOY_PARAMS, pattern))


def toy_space_text():
    return ''.join('{} {{ 0, 1 }} [0]\n'.format(name) for name in TOY_PARAMS)


def toy_landscape_text():
    """
    Two clusters over six binary parameters. Per cluster 16 easy problems, solved within
    distance 3 of the cluster target, and 4 hard ones solved only by the target itself.
    """
    lines = ['rate: 100000']
    for cluster, target in sorted(TARGETS.items()):
        t = ';'.join('{}={}'.format(n, v) for n, v in zip(TOY_PARAMS, target))
        for i in range(16):
            h = 300 + 40 * i
            lines.append('{}_e{:02d} {} {} {}'.format(cluster, i, h, 4 * h, t))
        for i in range(4):
            h = 1000 + 100 * i
            lines.append('{}_h{:02d} {} {} {}'.format(cluster, i, h, h, t))
    return '\n'.join(lines) + '\n'


def toy_problem_ids():
    return ['{}_{}{:02d}'.format(c, kind, i) for c in sorted(TARGETS) for kind, n in (('e', 16), ('h', 4))
            for i in range(n)]


@pytest.fixture
def toy_space():
    return parse_space(toy_space_text(), 'toy')


@pytest.fixture
def toy_backend():
    return BackendConfig('synthetic', landscape=parse_landscape(toy_landscape_text()))


@pytest.fixture
def toy_corpus():
    return [ProblemInstance(pid) for pid in toy_problem_ids()]


@pytest.fixture
def toy_seeds(toy_space):
    return [make_strategy(toy_space, bits(SEEDS[c])) for c in sorted(SEEDS)]


@pytest.fixture
def toy_targets(toy_space):
    return {c: make_strategy(toy_space, bits(TARGETS[c])) for c in sorted(TARGETS)}


@pytest.fixture
def toy_runner(toy_backend):
    return Runner(toy_backend)


@pytest.fixture
def toy_files(tmp_path):
    """
    The toy problem written out as input files: space, landscape, corpus, backend JSON and seed strategies.
    """
    files = tmp_path / 'inputs'
    files.mkdir()
    (files / 'space.txt').write_text(toy_space_text())
    (files / 'landscape.txt').write_text(toy_landscape_text())
    (files / 'corpus.txt').write_text('# toy corpus\n' + ''.join(p + '\n' for p in toy_problem_ids()))
    (files / 'backend.json').write_text(json.dumps({'kind': 'synthetic', 'landscape': 'landscape.txt'}))
    seeds = []
    for c in sorted(SEEDS):
        path = files / 'seed_{}.strat'.format(c)
        path.write_text(''.join('{}={}\n'.format(n, v) for n, v in bits(SEEDS[c]).items()))
        seeds.append(str(path))
    target = files / 'target_a.strat'
    target.write_text(''.join('{}={}\n'.format(n, v) for n, v in bits(TARGETS['a']).items()))
    return {'space': str(files / 'space.txt'), 'corpus': str(files / 'corpus.txt'),
            'backend': str(files / 'backend.json'), 'seeds': seeds, 'target_a': str(target),
            'landscape': str(files / 'landscape.txt')}


@pytest.fixture(autouse=True)
def no_command_override(monkeypatch):
    monkeypatch.delenv("BLISTR_COMMAND", raising=False)


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    for handler in logging.root.handlers[:]:
        logging.root.removeHandler(handler)
        handler.close()
