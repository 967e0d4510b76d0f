import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from blistr.backend import BACKEND_ERROR, DEFAULT_PENALTY, penalized_metric
from blistr.lib.utils import problems_hash
from blistr.space import neighbors, random_strategy


@dataclass(frozen=True)
class IlsConfig:
    t_low: float = 1.0
    budget: float = 400.0
    strength: int = 3
    restart_probability: float = 0.01
    penalty: int = DEFAULT_PENALTY
    seed: int = 0
    stall_rounds: int = 100

    def __post_init__(self):
        if not self.t_low > 0:
            raise ValueError('t_low must be positive')
        if not self.budget > self.t_low:
            raise ValueError('the ParamILS budget must exceed t_low')
        if not 0 <= self.restart_probability <= 1:
            raise ValueError('restart probability must lie in [0, 1]')
        if self.strength < 0:
            raise ValueError('perturbation strength must be nonnegative')
        if self.stall_rounds < 1:
            raise ValueError('stall_rounds must be positive')


@dataclass(frozen=True)
class IlsOutcome:
    best: object
    best_score: Fraction
    evaluations: int
    improved: bool
    start_score: Fraction = None
    trace: tuple = field(default=(), repr=False)


class Budget:
    """
    Deadline of one search, on the runner's solver clock and on the wall clock.
    """

    def __init__(self, runner, seconds):
        self.runner = runner
        self.seconds = seconds
        self.start_charged = runner.charged
        self.start_wall = time.monotonic()

    @property
    def spent(self):
        return self.runner.charged - self.start_charged

    def exhausted(self):
        return self.spent >= self.seconds or time.monotonic() - self.start_wall >= self.seconds


def evaluate_config(strategy, problems, cfg, runner, stats=None):
    """
    Score of a strategy on a problem set: mean penalized metric at t_low.
    Scores are cached in the runner by (strategy-id, D-hash, t_low).
    :param strategy: Strategy.
    :param problems: nonempty list of ProblemInstance (the set D).
    :param cfg: IlsConfig.
    :param runner: backend Runner.
    :param stats: optional dict; its 'evaluations' counter grows on every uncached evaluation.
    :return: Fraction.
    """
    if not problems:
        raise ValueError('cannot evaluate on an empty problem set')
    d_hash = problems_hash(p.id for p in problems)
    key = (strategy.id, d_hash, float(cfg.t_low))
    if key in runner.scores:
        return runner.scores[key]
    results = runner.run(strategy, problems, cfg.t_low)
    for r in results:
        if r.status == BACKEND_ERROR:
            logging.warning("ILS|EVALUATE_CONFIG| backend error for {} on {}, scored as penalty".format(
                strategy.id[:8], r.problem_id))
    score = Fraction(sum(penalized_metric(r, cfg.penalty) for r in results), len(results))
    runner.scores[key] = score
    if stats is not None:
        stats['evaluations'] = stats.get('evaluations', 0) + 1
    return score


def first_improvement(space, start, problems, cfg, runner, budget, rng, stats=None):
    """
    Iterative first improvement: scan the one-exchange neighbourhood in a seeded random order and move
    to the first strictly better neighbour, until a local optimum or the deadline.
    :return: the final strategy (scores no worse than start).
    """
    if budget.exhausted():
        return start
    current = start
    score = evaluate_config(current, problems, cfg, runner, stats)
    while not budget.exhausted():
        candidates = neighbors(space, current)
        moved = False
        for idx in rng.permutation(len(candidates)):
            if budget.exhausted():
                return current
            candidate = candidates[idx]
            candidate_score = evaluate_config(candidate, problems, cfg, runner, stats)
            if candidate_score < score:
                current, score = candidate, candidate_score
                moved = True
                break
        if not moved:
            break
    return current


def perturb(space, strategy, strength, rng):
    """
    Apply `strength` independent random one-exchange moves (they may hit the same parameter).
    """
    movable = [spec for spec in space.params if len(spec.values) > 1]
    if not movable:
        return strategy
    result = strategy
    for _ in range(strength):
        spec = movable[int(rng.integers(len(movable)))]
        current = result[spec.name]
        others = [v for v in spec.values if v != current]
        result = result.replace(spec.name, others[int(rng.integers(len(others)))])
    return result


def iterated_local_search(space, theta0, problems, cfg, runner, rng=None):
    """
    BasicILS over the space: first improvement from theta0, then rounds of perturbation (or, with
    restart probability, a random restart) followed by first improvement, accepting strict improvements
    of the incumbent. Stops when the budget is spent or after cfg.stall_rounds rounds without a fresh
    solver run.
    :param space: ParameterSpace.
    :param theta0: seed Strategy.
    :param problems: nonempty list of ProblemInstance (the set D).
    :param cfg: IlsConfig.
    :param runner: backend Runner.
    :param rng: numpy Generator; default_rng(cfg.seed) when omitted.
    :return: IlsOutcome.
    """
    if not problems:
        raise ValueError('cannot search on an empty problem set')
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    budget = Budget(runner, cfg.budget)
    stats = {'evaluations': 0}
    in_time = time.time()

    start_score = evaluate_config(theta0, problems, cfg, runner, stats)
    incumbent = first_improvement(space, theta0, problems, cfg, runner, budget, rng, stats)
    incumbent_score = evaluate_config(incumbent, problems, cfg, runner, stats)
    trace = [(budget.spent, incumbent.id, incumbent_score, stats['evaluations'])]

    rounds = 0
    stall = 0
    while not budget.exhausted() and stall < cfg.stall_rounds:
        fresh_before = runner.fresh_runs
        if rng.random() < cfg.restart_probability:
            start = random_strategy(space, rng)
        else:
            start = perturb(space, incumbent, cfg.strength, rng)
        candidate = first_improvement(space, start, problems, cfg, runner, budget, rng, stats)
        candidate_score = evaluate_config(candidate, problems, cfg, runner, stats)
        if candidate_score < incumbent_score:
            incumbent, incumbent_score = candidate, candidate_score
            trace.append((budget.spent, incumbent.id, incumbent_score, stats['evaluations']))
            logging.debug("ILS|ITERATED_LOCAL_SEARCH| new incumbent {} score {:.1f}".format(
                incumbent.id[:8], float(incumbent_score)))
        stall = stall + 1 if runner.fresh_runs == fresh_before else 0
        rounds += 1

    logging.info("ILS|ITERATED_LOCAL_SEARCH| {} on {} problems: score {:.1f} -> {:.1f}, {} rounds, "
                 "{} evaluations, {:.1f}s solver time, {:.2f}s wall".format(
                     theta0.id[:8], len(problems), float(start_score), float(incumbent_score), rounds,
                     stats['evaluations'], budget.spent, time.time() - in_time))
    return IlsOutcome(best=incumbent, best_score=incumbent_score, evaluations=stats['evaluations'],
                      improved=incumbent_score < start_score, start_score=start_score, trace=tuple(trace))
