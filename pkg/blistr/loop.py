import logging
import time
from dataclasses import dataclass, field

import numpy as np

from blistr import loader
from blistr.backend import DEFAULT_PENALTY
from blistr.ils import IlsConfig, iterated_local_search
from blistr.lib.utils import format_duration, problems_hash
from blistr.matrix import PerformanceMatrix, load_matrix, read_ledger, record_run, refine, solved_set


@dataclass(frozen=True)
class LoopConfig:
    t_high: float = 10.0
    c_min: int = 500
    c_max: int = 30000
    versatility: int = 8
    max_eligible: int = 20
    ils: IlsConfig = field(default_factory=IlsConfig)
    penalty: int = DEFAULT_PENALTY
    max_iterations: int = None
    strict_versatility: bool = False

    def __post_init__(self):
        if self.versatility < 1:
            raise ValueError('versatility must be at least 1')
        if self.max_eligible < 1:
            raise ValueError('the number of eligible strategies must be at least 1')
        if self.t_high < self.ils.t_low:
            raise ValueError('t_high must not be below t_low')
        if not self.c_min < self.c_max:
            raise ValueError('c_min must be smaller than c_max')
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValueError('max_iterations must be nonnegative')


@dataclass(frozen=True)
class EligibleTask:
    seed: str
    problems: tuple
    count: int

    @property
    def d_hash(self):
        return problems_hash(self.problems)

    @property
    def key(self):
        return self.seed, self.d_hash


@dataclass
class LoopState:
    space: object
    corpus: list
    matrix: PerformanceMatrix
    strategies: dict = field(default_factory=dict)
    attempted: set = field(default_factory=set)
    iteration: int = 0
    events: list = field(default_factory=list)
    elapsed: float = 0.0
    rundir: str = None
    clock_offset: float = 0.0

    def __post_init__(self):
        self.problem_index = {p.id: p for p in self.corpus}

    def add_strategy(self, strategy):
        if strategy.id not in self.strategies:
            self.strategies[strategy.id] = strategy
            if self.rundir is not None:
                loader.save_strategy(self.rundir, strategy)

    def coverage(self):
        return len(solved_set(self.matrix))


def eligible_strategies(refined, versatility=8, max_eligible=20, strict=False):
    """
    Rank the strategies of E' by their number of defined (won) problems.
    A strategy is eligible with at least `versatility` wins (more than `versatility` when strict);
    the list is sorted by count descending, ties by strategy-id, and truncated to max_eligible.
    :param refined: RefinedMatrix.
    :return: list of EligibleTask, each carrying its problem set D_i.
    """
    wins = refined.wins()
    ranked = [(len(pids), sid) for sid, pids in wins.items()
              if (len(pids) > versatility if strict else len(pids) >= versatility)]
    ranked.sort(key=lambda x: (-x[0], x[1]))
    return [EligibleTask(sid, tuple(wins[sid]), n) for n, sid in ranked[:max_eligible]]


def next_task(eligible, attempted):
    """
    First eligible task whose (seed, D-hash) pair was not run before, or None.
    """
    for task in eligible:
        if task.key not in attempted:
            return task
    return None


def _ranking(cfg, state):
    refined = refine(state.matrix, cfg.c_min, cfg.c_max)
    return eligible_strategies(refined, cfg.versatility, cfg.max_eligible, cfg.strict_versatility)


def evaluate_on_corpus(state, strategy, cfg, runner, problems=None):
    """
    Run a strategy at t_high on the corpus (or on the given problems) and fold the runs into the matrix.
    """
    problems = state.corpus if problems is None else problems
    results = runner.run(strategy, problems, cfg.t_high, desc='t_high {}'.format(strategy.id[:8]))
    for r in results:
        record_run(state.matrix, r, cfg.penalty)
    return results


def complete_rows(state, cfg, runner):
    """
    Make every known strategy's matrix row complete over the corpus, running only missing pairs.
    Evaluates the seeds on a fresh run; repairs rows interrupted by a crash on resume.
    """
    for strategy in list(state.strategies.values()):
        missing = [p for p in state.corpus if not state.matrix.has(strategy.id, p.id)]
        if missing:
            logging.info("LOOP|COMPLETE_ROWS| evaluating {} on {} problems at t_high={}".format(
                strategy.id[:8], len(missing), cfg.t_high))
            evaluate_on_corpus(state, strategy, cfg, runner, missing)
    return state


def blistr_iteration(state, cfg, runner):
    """
    One step of the loop: take the best untried eligible task, improve its seed by iterated local search
    on its problem set at t_low, evaluate a newly produced strategy on the whole corpus at t_high,
    mark the task attempted and log the event.
    :param state: LoopState (updated in place and returned).
    :param cfg: LoopConfig.
    :param runner: backend Runner.
    :return: the state.
    """
    eligible = _ranking(cfg, state)
    task = next_task(eligible, state.attempted)
    if task is None:
        raise ValueError('no runnable task: every eligible strategy was already run with its problem set')

    number = state.iteration + 1
    coverage_before = state.coverage()
    seed = state.strategies[task.seed]
    problems = [state.problem_index[pid] for pid in task.problems]
    logging.info("LOOP|BLISTR_ITERATION| iteration {}: seed {} on {} problems (coverage {})".format(
        number, task.seed[:8], task.count, coverage_before))

    rng = np.random.default_rng([cfg.ils.seed, number])
    outcome = iterated_local_search(state.space, seed, problems, cfg.ils, runner, rng)

    new_id = None
    if outcome.best.id not in state.strategies:
        new_id = outcome.best.id
        state.add_strategy(outcome.best)
        evaluate_on_corpus(state, outcome.best, cfg, runner)
    elif outcome.improved:
        logging.info("LOOP|BLISTR_ITERATION| ILS returned the known strategy {}".format(outcome.best.id[:8]))

    state.attempted.add(task.key)
    state.iteration = number
    state.elapsed = runner.charged + state.clock_offset
    event = {
        'iteration': number,
        'seed_id': task.seed,
        'd_hash': task.d_hash,
        'd_size': task.count,
        'new_strategy_id': new_id,
        'improved': bool(outcome.improved),
        'ils_score': round(float(outcome.best_score), 6),
        'coverage_before': coverage_before,
        'coverage_after': state.coverage(),
        'elapsed': round(state.elapsed, 6),
        'ranking': [[t.seed, t.count] for t in eligible],
    }
    state.events.append(event)
    if state.rundir is not None:
        loader.save_trace(state.rundir, number, outcome.trace)
        loader.append_event(state.rundir, event)
    logging.info("LOOP|BLISTR_ITERATION| iteration {}: new strategy {}, coverage {} -> {}".format(
        number, new_id[:8] if new_id else None, coverage_before, event['coverage_after']))
    return state


def initial_state(space, seeds, corpus, cfg, rundir=None):
    if not seeds:
        raise ValueError('at least one seed strategy is needed')
    if not corpus:
        raise ValueError('the corpus is empty')
    state = LoopState(space, list(corpus), PerformanceMatrix(float(cfg.t_high), cfg.penalty), rundir=rundir)
    for s in seeds:
        state.add_strategy(s)
    return state


def restore_state(rundir, space, corpus, cfg, runner, seed_ids=()):
    """
    Rebuild a LoopState from a run directory: strategy definitions, ledger replay, attempted tasks and
    the iteration counter from the event log. The runner cache is refilled from the ledger.
    """
    definitions = loader.read_strategies(rundir, space)
    events = loader.read_events(rundir)
    order = [sid for sid in seed_ids if sid in definitions]
    order += [e['new_strategy_id'] for e in events if e.get('new_strategy_id') in definitions]
    order += sorted(definitions)
    state = LoopState(space, list(corpus), PerformanceMatrix(float(cfg.t_high), cfg.penalty), rundir=rundir)
    for sid in order:
        state.strategies.setdefault(sid, definitions[sid])

    ledger_path = loader.ledger_path(rundir)
    state.matrix = load_matrix(ledger_path, cfg.t_high, cfg.penalty, strategies=set(state.strategies),
                               problems=set(state.problem_index))
    runner.preload(read_ledger(ledger_path))
    state.events = events
    state.attempted = {(e['seed_id'], e['d_hash']) for e in events}
    state.iteration = len(events)
    state.elapsed = events[-1]['elapsed'] if events else 0.0
    state.clock_offset = state.elapsed - runner.charged
    logging.info("LOOP|RESTORE_STATE| {} strategies, {} iterations, coverage {}".format(
        len(state.strategies), state.iteration, state.coverage()))
    return state


def run_loop(space, seeds, corpus, cfg, runner, rundir=None, state=None):
    """
    The co-evolution loop: complete the t_high rows of all known strategies (the seeds on a fresh run),
    then iterate blistr_iteration until no eligible task is left untried or max_iterations is reached.
    :param space: ParameterSpace.
    :param seeds: list of seed Strategy (ignored when a restored state is passed).
    :param corpus: list of ProblemInstance.
    :param cfg: LoopConfig.
    :param runner: backend Runner.
    :param rundir: run directory to persist strategies, events and traces to, or None.
    :param state: LoopState restored from a run directory, or None for a fresh run.
    :return: the final LoopState.
    """
    in_time = time.time()
    if state is None:
        state = initial_state(space, seeds, corpus, cfg, rundir)
        state.clock_offset = state.elapsed - runner.charged
    complete_rows(state, cfg, runner)
    logging.info("LOOP|RUN_LOOP| start: {} strategies, coverage {} of {}".format(
        len(state.strategies), state.coverage(), len(state.corpus)))

    while True:
        if cfg.max_iterations is not None and state.iteration >= cfg.max_iterations:
            logging.info("LOOP|RUN_LOOP| stopping at the iteration cap {}".format(cfg.max_iterations))
            break
        if next_task(_ranking(cfg, state), state.attempted) is None:
            logging.info("LOOP|RUN_LOOP| no untried eligible strategy left")
            break
        blistr_iteration(state, cfg, runner)

    state.elapsed = runner.charged + state.clock_offset
    logging.info("LOOP|RUN_LOOP| finished after {} iterations: {} strategies, coverage {} of {}, "
                 "{:.1f}s solver time, {} wall".format(state.iteration, len(state.strategies), state.coverage(),
                                                       len(state.corpus), state.elapsed,
                                                       format_duration(time.time() - in_time)))
    return state
