import logging
import warnings

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns

sns.set(context='paper', style='whitegrid')
warnings.filterwarnings("ignore")


def coverage_dynamics(events, path, title=None):
    """
    Function to vizualize union coverage and the number of known strategies over the loop iterations.
    :param events: list of event records (as read from events.jsonl).
    :param path: PNG file to write.
    :param title: figure title.
    :return: path.
    """
    df = pd.DataFrame(events, columns=['iteration', 'coverage_before', 'coverage_after', 'new_strategy_id'])
    fig, host = plt.subplots(figsize=[8, 4])
    if len(df):
        iterations = [0] + list(df.iteration)
        coverage = [df.coverage_before.iloc[0]] + list(df.coverage_after)
        known = [0] + list(df.new_strategy_id.notna().cumsum())
        p1, = host.step(iterations, coverage, where='post', label='union coverage')
        par = host.twinx()
        p2, = par.step(iterations, known, where='post', color=sns.color_palette()[1], label='new strategies')
        par.set_ylabel('New strategies')
        par.grid(False)
        host.legend(handles=[p1, p2], loc='lower right')
    host.set_xlabel('Iteration')
    host.set_ylabel('Solved problems')
    host.set_title(title or 'Coverage per iteration')
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    logging.info("PLOT|COVERAGE_DYNAMICS| saved {}".format(path))
    return path


def ils_traces(traces, path, title=None):
    """
    Function to vizualize the incumbent score of every ILS run against the solver time it had used.
    :param traces: dataframe with columns offset, score, iteration (see loader.read_traces).
    :param path: PNG file to write.
    :return: path.
    """
    fig, ax = plt.subplots(figsize=[8, 4])
    if len(traces):
        n = traces.iteration.nunique()
        colors = sns.color_palette('rainbow', n)
        for color, (it, df) in zip(colors, traces.groupby('iteration')):
            ax.step(df.offset, df.score, where='post', color=color, alpha=0.8, label=str(it))
        if n <= 20:
            ax.legend(title='Iteration', fontsize='x-small', ncol=2)
    ax.set_xlabel('Solver time, s')
    ax.set_ylabel('Mean penalized metric')
    ax.set_yscale('log')
    ax.set_title(title or 'ILS incumbents')
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    logging.info("PLOT|ILS_TRACES| saved {}".format(path))
    return path
