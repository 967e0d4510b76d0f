import datetime
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from os import listdir, makedirs
from os.path import abspath, dirname, exists, isdir, join, normpath

import pandas as pd

from blistr import loader
from blistr.backend import Ledger, Runner
from blistr.lib.utils import format_duration
from blistr.loop import restore_state, run_loop
from blistr.matrix import load_matrix, load_timings, read_ledger, refine, save_matrix, solved_by, solved_set
from blistr.plot import coverage_dynamics, ils_traces
from blistr.portfolio import EXACT_LIMIT, exact_min_cover, greedy_cover, schedule_eval, select_seeds
from blistr.space import canonical_serialize, serialize_space

DATA_PATH = normpath(join(dirname(abspath(__file__)), '..', 'data'))
DEFAULTS_PATH = join(DATA_PATH, 'loop_defaults.json')
EVALUATED_DIR = 'evaluated'
PORTFOLIO_FILE = 'portfolio.json'


@dataclass
class RunManifest:
    space: str
    corpus: str
    backend: str
    seed: int = 0
    seeds: list = field(default_factory=list)
    merged: list = field(default_factory=list)
    created: str = None

    @classmethod
    def read(cls, rundir):
        path = join(rundir, loader.MANIFEST_FILE)
        if not exists(path):
            raise FileNotFoundError('{} is not an initialized run directory (no {})'.format(rundir, loader.MANIFEST_FILE))
        return cls(**loader.read_json(path))

    def write(self, rundir):
        loader.write_json(join(rundir, loader.MANIFEST_FILE), asdict(self))


def setup_logging(rundir):
    for handler in logging.root.handlers[:]:
        logging.root.removeHandler(handler)
    logging.basicConfig(filename=join(abspath(normpath(rundir)), loader.LOG_FILE), filemode='a',
                        format='%(asctime)s,%(msecs)d %(name)s %(levelname)s %(message)s',
                        datefmt='%Y-%m-%d %H:%M:%S', level=logging.DEBUG)
    logging.getLogger().addHandler(logging.StreamHandler(sys.stdout))


def read_config(rundir, overrides=None):
    """
    Loop configuration of a run directory with per-invocation overrides applied.
    :param overrides: dict of config keys to values; None values are ignored.
    :return: dict.
    """
    config = loader.read_json(join(rundir, loader.CONFIG_FILE))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in config:
            raise ValueError('unknown configuration key "{}"'.format(key))
        config[key] = value
    return config


def _open_run(rundir, overrides=None, progress=False):
    manifest = RunManifest.read(rundir)
    config = read_config(rundir, overrides)
    space = loader.load_space(loader.space_path(rundir))
    corpus = loader.load_corpus(manifest.corpus)
    backend = loader.load_backend_config(manifest.backend)
    runner = Runner(backend, Ledger(loader.ledger_path(rundir)), jobs=config['jobs'], progress=progress)
    return manifest, config, space, corpus, runner


def _known_ids(rundir, space):
    return set(loader.read_strategies(rundir, space))


def cmd_init(rundir, space_file, corpus_file, backend_config, seeds=(), seed=0, defaults=DEFAULTS_PATH):
    """
    Function to create a run directory: copy of the space, default loop configuration, manifest and seed strategies.
    :param rundir: directory to create; it must be absent or empty.
    :param space_file: parameter space file.
    :param corpus_file: corpus listing.
    :param backend_config: backend JSON file.
    :param seeds: strategy files of the seed strategies.
    :param seed: rng seed of the run.
    :return: RunManifest.
    """
    if exists(rundir) and (not isdir(rundir) or listdir(rundir)):
        raise FileExistsError('run directory {} exists and is not empty'.format(rundir))
    for path in [space_file, corpus_file, backend_config] + list(seeds):
        if not exists(path):
            raise FileNotFoundError('no such file: {}'.format(path))

    space = loader.load_space(space_file)
    loader.load_corpus(corpus_file)
    loader.load_backend_config(backend_config)
    strategies = [loader.load_strategy(path, space) for path in seeds]

    config = loader.read_json(defaults)
    config['seed'] = int(seed)
    loader.loop_config_from_dict(config)

    makedirs(rundir, exist_ok=True)
    with open(loader.space_path(rundir), 'w') as f:
        f.write(serialize_space(space))
    loader.write_json(join(rundir, loader.CONFIG_FILE), config)
    ids = []
    for s in strategies:
        loader.save_strategy(rundir, s)
        if s.id not in ids:
            ids.append(s.id)
    manifest = RunManifest(space=abspath(space_file), corpus=abspath(corpus_file), backend=abspath(backend_config),
                           seed=int(seed), seeds=ids,
                           created=datetime.datetime.now().isoformat(timespec='seconds'))
    manifest.write(rundir)
    logging.info("CMD_INIT| run directory {} with {} seeds over a space of {} strategies".format(
        rundir, len(ids), space.size))
    return manifest


def cmd_run(rundir, overrides=None, progress=True):
    """
    Function to run (or resume) the loop of a run directory. Ledger and event log are replayed, so tasks
    attempted by earlier invocations are skipped and known runs are not repeated.
    :param overrides: dict of configuration overrides for this invocation.
    :return: exit status 0 on a clean stop.
    """
    setup_logging(rundir)
    in_time = time.time()
    started = datetime.datetime.now().isoformat(timespec='seconds')
    manifest, config, space, corpus, runner = _open_run(rundir, overrides, progress)
    cfg = loader.loop_config_from_dict(config)
    logging.info("CMD_RUN| running loop in {}\nparameters:\n{}".format(
        rundir, '\n'.join('{}: {}'.format(k, v) for k, v in sorted(config.items()))))
    applied = {k: v for k, v in (overrides or {}).items() if v is not None}
    if applied:
        logging.info("CMD_RUN| overrides for this invocation: {}".format(applied))

    state = restore_state(rundir, space, corpus, cfg, runner, manifest.seeds)
    if not state.strategies:
        raise ValueError('no strategies in {}: give seeds to init or run the seeds command'.format(rundir))
    iterations_before = state.iteration
    state = run_loop(space, None, corpus, cfg, runner, rundir=rundir, state=state)

    save_matrix(state.matrix, join(rundir, 'matrix.tsv'))
    save_matrix(state.matrix, join(rundir, 'refined.tsv'), refine(state.matrix, cfg.c_min, cfg.c_max))
    wall = time.time() - in_time
    loader.append_session(rundir, {'started': started, 'wall': round(wall, 3), 'overrides': applied,
                                   'iterations_before': iterations_before, 'iterations_after': state.iteration,
                                   'coverage': state.coverage(), 'elapsed': round(state.elapsed, 6)})
    logging.info("CMD_RUN| done: {} iterations ({} new), coverage {} of {}, in {}".format(
        state.iteration, state.iteration - iterations_before, state.coverage(), len(corpus), format_duration(wall)))
    return 0


def cmd_eval(rundir, strategy_file, cutoff, progress=False):
    """
    Function to evaluate one strategy on the whole corpus at a cutoff. Runs go to the ledger; the strategy is
    kept under evaluated/ and does not join the loop.
    :return: dataframe with one row per problem.
    """
    cutoff = float(cutoff)
    if not cutoff > 0:
        raise ValueError('cutoff must be positive')
    setup_logging(rundir)
    manifest, config, space, corpus, runner = _open_run(rundir, progress=progress)
    strategy = loader.load_strategy(strategy_file, space)
    runner.preload(read_ledger(loader.ledger_path(rundir)))
    path = join(rundir, EVALUATED_DIR, '{}.strat'.format(strategy.id))
    if not exists(path):
        makedirs(dirname(path), exist_ok=True)
        with open(path, 'w') as f:
            f.write(canonical_serialize(strategy))

    results = runner.run(strategy, corpus, cutoff, desc='eval {}'.format(strategy.id[:8]))
    df = pd.DataFrame([(r.problem_id, r.status, r.metric, r.cpu_time) for r in results],
                      columns=['problem_id', 'status', 'metric', 'cpu_time'])
    logging.info("CMD_EVAL| strategy {} at {}s: {} of {} solved ({} fresh runs)".format(
        strategy.id, cutoff, int((df.status == 'solved').sum()), len(df), runner.fresh_runs))
    return df


def _corpus_ids(rundir):
    return {p.id for p in loader.load_corpus(RunManifest.read(rundir).corpus)}


def _run_matrix(rundir, config, space):
    # ledgers merged from other runs may hold problems outside this corpus
    return load_matrix(loader.ledger_path(rundir), config['t_high'], config['penalty'],
                       strategies=_known_ids(rundir, space), problems=_corpus_ids(rundir))


def cmd_cover(rundir, method='greedy', total_time=None, max_size=None, limit=EXACT_LIMIT):
    """
    Function to extract a portfolio from the t_high matrix of a run and optionally simulate its even time split.
    Writes portfolio.json to the run directory.
    :param method: greedy or exact.
    :param total_time: schedule length in seconds, or None.
    :param max_size: greedy only, keep the greedily best k strategies.
    :return: the portfolio as a dict.
    """
    setup_logging(rundir)
    config = read_config(rundir)
    space = loader.load_space(loader.space_path(rundir))
    matrix = _run_matrix(rundir, config, space)
    if method == 'greedy':
        portfolio = greedy_cover(matrix, max_size=max_size)
    elif method == 'exact':
        if max_size is not None:
            raise ValueError('max_size applies to the greedy cover only')
        portfolio = exact_min_cover(matrix, limit=limit)
    else:
        raise ValueError('unknown cover method "{}"'.format(method))

    result = portfolio.to_dict()
    result['method'] = method
    result['solved_total'] = len(solved_set(matrix))
    if total_time is not None:
        portfolio = portfolio.with_time(float(total_time))
        result['time_per_member'] = portfolio.time_per_member
        result['schedule_solved'] = schedule_eval(portfolio, float(total_time),
                                                  timings=load_timings(loader.ledger_path(rundir)),
                                                  problems=loader.load_corpus(RunManifest.read(rundir).corpus))
    loader.write_json(join(rundir, PORTFOLIO_FILE), result)
    logging.info("CMD_COVER| {} cover: {} strategies cover {} of {} solved problems".format(
        method, len(portfolio), portfolio.coverage, result['solved_total']))
    return result


def _report_row(rundir):
    config = read_config(rundir)
    space = loader.load_space(loader.space_path(rundir))
    matrix = _run_matrix(rundir, config, space)
    events = loader.read_events(rundir)
    sessions = loader.read_sessions(rundir)
    per_strategy = solved_by(matrix)
    return {'run': rundir, 't_low': config['t_low'], 't_paramils': config['t_paramils'],
            'real_time': format_duration(sum(s['wall'] for s in sessions)),
            'solver_time': round(events[-1]['elapsed'] if events else 0.0, 1),
            'iterations': len(events), 'strategies': len(per_strategy),
            'best': max((len(v) for v in per_strategy.values()), default=0),
            'solved': len(solved_set(matrix))}, matrix, config


def cmd_report(rundirs, plot=False):
    """
    Function to summarize one or more runs: a row per run and, for several runs, a union row over their merged
    ledgers.
    :param rundirs: run directory or list of them.
    :param plot: also save coverage and ILS trace figures into every run directory.
    :return: dataframe.
    """
    if isinstance(rundirs, (str, os.PathLike)):
        rundirs = [rundirs]
    rows = []
    t_high = None
    strategies = set()
    problems = set()
    for rundir in rundirs:
        row, matrix, config = _report_row(rundir)
        if t_high is not None and float(config['t_high']) != t_high:
            raise ValueError('runs with different t_high cannot be reported together')
        t_high = float(config['t_high'])
        strategies |= set(matrix.strategies)
        problems |= _corpus_ids(rundir)
        rows.append(row)
        if plot:
            coverage_dynamics(loader.read_events(rundir), join(rundir, 'coverage.png'), title=rundir)
            ils_traces(loader.read_traces(rundir), join(rundir, 'traces.png'), title=rundir)
    if len(rundirs) > 1:
        union = load_matrix([loader.ledger_path(d) for d in rundirs], t_high, config['penalty'], strategies=strategies,
                            problems=problems)
        per_strategy = solved_by(union)
        rows.append({'run': 'union', 't_low': None, 't_paramils': None, 'real_time': None,
                     'solver_time': round(sum(r['solver_time'] for r in rows), 1),
                     'iterations': sum(r['iterations'] for r in rows), 'strategies': len(per_strategy),
                     'best': max((len(v) for v in per_strategy.values()), default=0),
                     'solved': len(solved_set(union))})
    return pd.DataFrame(rows)


def cmd_seeds(rundir, candidate_files, sample_size=100, cutoff=1.0, seed=None, limit=EXACT_LIMIT, progress=False):
    """
    Function to choose the seed strategies of a run from a candidate pool by covering a corpus sample.
    Only allowed before the first loop iteration.
    :return: list of chosen strategy-ids.
    """
    setup_logging(rundir)
    manifest, config, space, corpus, runner = _open_run(rundir, progress=progress)
    if loader.read_events(rundir):
        raise ValueError('{} already ran loop iterations; seeds can only be chosen before'.format(rundir))
    candidates = [loader.load_strategy(path, space) for path in candidate_files]
    runner.preload(read_ledger(loader.ledger_path(rundir)))
    chosen, portfolio = select_seeds(candidates, corpus, runner, sample_size, cutoff,
                                     manifest.seed if seed is None else seed, limit, config['penalty'])
    if not chosen:
        raise ValueError('no candidate solves any sampled problem at {}s'.format(cutoff))
    for s in chosen:
        loader.save_strategy(rundir, s)
        if s.id not in manifest.seeds:
            manifest.seeds.append(s.id)
    manifest.write(rundir)
    logging.info("CMD_SEEDS| seeds {} with gains {}".format([s.id[:8] for s in chosen], list(portfolio.gains)))
    return [s.id for s in chosen]


def cmd_merge(rundir, sources):
    """
    Function to import strategies and ledgers of other runs over the same space, so this run continues from
    their union.
    :return: number of imported strategies and ledger rows.
    """
    setup_logging(rundir)
    corpus = _corpus_ids(rundir)
    space = loader.load_space(loader.space_path(rundir))
    ledger = Ledger(loader.ledger_path(rundir))
    known = _known_ids(rundir, space)
    new_strategies = 0
    rows = 0
    for source in sources:
        other = loader.load_space(loader.space_path(source))
        if serialize_space(other) != serialize_space(space):
            raise ValueError('{} runs over a different parameter space'.format(source))
        if _corpus_ids(source) != corpus:
            logging.warning("CMD_MERGE| {} runs over another corpus; only runs on problems of this corpus "
                            "enter its matrix".format(source))
        for sid, s in loader.read_strategies(source, space).items():
            if sid not in known:
                loader.save_strategy(rundir, s)
                known.add(sid)
                new_strategies += 1
        results = read_ledger(loader.ledger_path(source))
        ledger.append(results)
        rows += len(results)
    manifest = RunManifest.read(rundir)
    manifest.merged.extend(abspath(s) for s in sources)
    manifest.write(rundir)
    logging.info("CMD_MERGE| imported {} strategies and {} ledger rows from {} runs".format(
        new_strategies, rows, len(sources)))
    return new_strategies, rows
