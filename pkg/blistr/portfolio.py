import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from blistr.matrix import matrix_from_runs, solved_by, solved_set

EXACT_LIMIT = 20


@dataclass(frozen=True)
class Portfolio:
    """
    Ordered strategy-ids with the problems each one added to the cover when it was picked.
    """
    members: tuple
    gains: tuple
    covered: dict = field(default_factory=dict)
    time_per_member: float = None

    def __post_init__(self):
        if len(set(self.members)) != len(self.members):
            raise ValueError('portfolio members must be distinct')
        if len(self.gains) != len(self.members):
            raise ValueError('one gain per member expected')
        if any(g < 1 for g in self.gains):
            raise ValueError('every member must add at least one problem')

    def __len__(self):
        return len(self.members)

    @property
    def coverage(self):
        return sum(self.gains)

    def with_time(self, total_time):
        return Portfolio(self.members, self.gains, self.covered, total_time / len(self.members))

    def to_dict(self):
        return {'members': list(self.members), 'gains': list(self.gains),
                'covered': {sid: list(self.covered[sid]) for sid in self.members},
                'coverage': self.coverage, 'time_per_member': self.time_per_member}


def _ordered(members, sets):
    """
    Portfolio from an ordered member list: gains are marginal in that order.
    """
    seen = set()
    gains = []
    covered = {}
    for sid in members:
        new = sets[sid] - seen
        gains.append(len(new))
        covered[sid] = sorted(new)
        seen |= new
    return Portfolio(tuple(members), tuple(gains), covered)


def greedy_cover(matrix, penalty=None, max_size=None):
    """
    Greedy set cover of the solved problems of the matrix.
    :param matrix: PerformanceMatrix.
    :param penalty: metric of unsolved runs (matrix.penalty when None).
    :param max_size: stop after this many members (the greedily best k), or None for a full cover.
    :return: Portfolio; without max_size its coverage equals solved_set(matrix).
    """
    sets = solved_by(matrix, penalty)
    remaining = set(solved_set(matrix, penalty))
    members = []
    while remaining and (max_size is None or len(members) < max_size):
        # highest gain, equal gains to the smallest id
        gain, best = min((-len(sets[sid] & remaining), sid) for sid in sets if sid not in members)
        if gain == 0:
            break
        members.append(best)
        remaining -= sets[best]
    return _ordered(members, sets)


def exact_min_cover(matrix, penalty=None, limit=EXACT_LIMIT):
    """
    Minimum-cardinality cover of solved_set(matrix). Subsets are searched by increasing size in
    lexicographic order of their sorted ids, bounded above by the greedy cover's size, so the first
    hit is also the lexicographically smallest optimum.
    :param limit: largest number of strategies searched.
    :return: Portfolio with members sorted by id.
    """
    sets = solved_by(matrix, penalty)
    if len(sets) > limit:
        raise ValueError('instance too large for exact cover: {} strategies, limit {}'.format(len(sets), limit))
    target = solved_set(matrix, penalty)
    if not target:
        return Portfolio((), ())
    index = {pid: i for i, pid in enumerate(sorted(target))}
    candidates = sorted(sid for sid in sets if sets[sid])
    masks = {sid: sum(1 << index[pid] for pid in sets[sid]) for sid in candidates}
    full = (1 << len(index)) - 1
    upper = len(greedy_cover(matrix, penalty))
    for k in range(1, upper + 1):
        for combo in itertools.combinations(candidates, k):
            mask = 0
            for sid in combo:
                mask |= masks[sid]
            if mask == full:
                return _ordered(list(combo), sets)
    raise AssertionError('greedy cover bound violated')


def schedule_eval(portfolio, total_time, timings=None, runner=None, strategies=None, problems=None):
    """
    Problems solved when total_time is split evenly between the members.
    Ledger mode (timings given): a member solves a problem within its slice when the ledger holds a
    solved run of it there with cpu-time at most the slice. Live mode: every member is run at the slice.
    :param portfolio: Portfolio.
    :param total_time: seconds (> 0).
    :param timings: (timings, seen) as returned by matrix.load_timings.
    :param runner: backend Runner for live mode, with strategies (id -> Strategy) and problems.
    :return: solved count.
    """
    if not total_time > 0:
        raise ValueError('total time must be positive')
    if not portfolio.members:
        raise ValueError('the portfolio is empty')
    time_slice = total_time / len(portfolio.members)
    solved = set()
    if timings is not None:
        table, seen = timings
        missing = [sid for sid in portfolio.members if sid not in seen]
        if missing:
            raise ValueError('no timing data for {}'.format(', '.join(missing)))
        allowed = None if problems is None else {p.id for p in problems}
        for (sid, pid), runs in table.items():
            if sid in portfolio.members and any(cpu <= time_slice for _, cpu in runs):
                if allowed is None or pid in allowed:
                    solved.add(pid)
    elif runner is not None:
        if strategies is None or problems is None:
            raise ValueError('live schedule evaluation needs strategies and problems')
        for sid in portfolio.members:
            for r in runner.run(strategies[sid], problems, time_slice, desc='schedule {}'.format(sid[:8])):
                if r.solved:
                    solved.add(r.problem_id)
    else:
        raise ValueError('either ledger timings or a runner is needed')
    logging.info("PORTFOLIO|SCHEDULE_EVAL| {} members, {:.2f}s each: {} solved".format(
        len(portfolio.members), time_slice, len(solved)))
    return len(solved)


def select_seeds(candidates, corpus, runner, sample_size, cutoff, rng=None, limit=EXACT_LIMIT, penalty=None):
    """
    Pick loop seeds from a candidate pool: run every candidate on a random sample of the corpus at a low
    cutoff and take a minimal cover of what the pool solves (greedy when the pool exceeds limit).
    :param candidates: list of Strategy.
    :param corpus: list of ProblemInstance.
    :param runner: backend Runner.
    :param sample_size: number of problems sampled (the whole corpus when larger).
    :param cutoff: CPU limit of the sample runs.
    :param rng: numpy Generator or seed.
    :return: (list of Strategy in portfolio order, Portfolio).
    """
    if not candidates:
        raise ValueError('no candidate strategies')
    if sample_size < 1:
        raise ValueError('sample size must be positive')
    rng = np.random.default_rng(rng)
    n = min(sample_size, len(corpus))
    sample = [corpus[i] for i in sorted(rng.choice(len(corpus), size=n, replace=False))]
    by_id = {s.id: s for s in candidates}
    results = []
    for s in by_id.values():
        results += runner.run(s, sample, cutoff, desc='candidate {}'.format(s.id[:8]))
    kwargs = {} if penalty is None else {'penalty': penalty}
    matrix = matrix_from_runs(results, cutoff, **kwargs)
    if len(by_id) <= limit:
        portfolio = exact_min_cover(matrix, penalty, limit)
    else:
        portfolio = greedy_cover(matrix, penalty)
    logging.info("PORTFOLIO|SELECT_SEEDS| {} of {} candidates cover {} of {} sampled problems".format(
        len(portfolio), len(by_id), portfolio.coverage, n))
    return [by_id[sid] for sid in portfolio.members], portfolio
