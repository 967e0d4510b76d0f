import logging
import os
from dataclasses import dataclass, field

import pandas as pd

from blistr.backend import DEFAULT_PENALTY, SOLVED, parse_ledger_row, penalized_metric
from blistr.lib.utils import ParseError

UNDEF = 'UNDEF'


@dataclass
class PerformanceMatrix:
    """
    E: penalized metric of strategy i on problem j at t_high, stored per problem column.
    """
    t_high: float
    penalty: int = DEFAULT_PENALTY
    columns: dict = field(default_factory=dict)

    @property
    def entries(self):
        return {(sid, pid): m for pid, col in self.columns.items() for sid, m in col.items()}

    @property
    def strategies(self):
        return sorted({sid for col in self.columns.values() for sid in col})

    @property
    def problems(self):
        return sorted(self.columns)

    def get(self, strategy_id, problem_id):
        return self.columns.get(problem_id, {}).get(strategy_id)

    def has(self, strategy_id, problem_id):
        return strategy_id in self.columns.get(problem_id, {})

    def row(self, strategy_id):
        return {pid: col[strategy_id] for pid, col in self.columns.items() if strategy_id in col}

    def set(self, strategy_id, problem_id, metric):
        """
        Keep-best update: an existing entry is only replaced by a lower metric.
        """
        if metric < 1:
            raise ValueError('matrix metric must be at least 1, got {}'.format(metric))
        col = self.columns.setdefault(problem_id, {})
        old = col.get(strategy_id)
        if old is None or metric < old:
            col[strategy_id] = metric

    def copy(self):
        return PerformanceMatrix(self.t_high, self.penalty, {pid: dict(col) for pid, col in self.columns.items()})


@dataclass(frozen=True)
class RefinedMatrix:
    """
    E': in-bounds column winners only.
    """
    defined: dict
    bounds: tuple

    def wins(self):
        """
        Strategy-id -> sorted list of problem-ids on which it is the defined entry.
        """
        result = {}
        for (sid, pid) in self.defined:
            result.setdefault(sid, []).append(pid)
        return {sid: sorted(pids) for sid, pids in result.items()}

    def counts(self):
        return {sid: len(pids) for sid, pids in self.wins().items()}


def record_run(matrix, result, penalty=None, ledger=None):
    """
    Fold one t_high run into the matrix under the keep-best rule.
    :param matrix: PerformanceMatrix (updated in place and returned).
    :param result: RunResult with cutoff equal to matrix.t_high.
    :param penalty: metric of unsolved runs (matrix.penalty when None).
    :param ledger: optional Ledger the run is appended to.
    :return: the matrix.
    """
    if float(result.cutoff) != float(matrix.t_high):
        raise ValueError('run cutoff {} does not match the matrix t_high {}'.format(result.cutoff, matrix.t_high))
    penalty = matrix.penalty if penalty is None else penalty
    # a proof found before the first processed clause counts as one
    matrix.set(result.strategy_id, result.problem_id, max(penalized_metric(result, penalty), 1))
    if ledger is not None:
        ledger.append([result])
    return matrix


def refine(matrix, c_min=500, c_max=30000):
    """
    Compute E' from E: drop entries outside [c_min, c_max] (inclusive bounds), then keep only the
    lowest entry of every column, ties going to the lexicographically smallest strategy-id.
    :return: RefinedMatrix.
    """
    if not c_min < c_max:
        raise ValueError('c_min must be smaller than c_max')
    defined = {}
    for pid, col in matrix.columns.items():
        inside = [(m, sid) for sid, m in col.items() if c_min <= m <= c_max]
        if inside:
            m, sid = min(inside)
            defined[(sid, pid)] = m
    return RefinedMatrix(defined, (c_min, c_max))


def solved_set(matrix, penalty=None):
    penalty = matrix.penalty if penalty is None else penalty
    return {pid for pid, col in matrix.columns.items() if any(m < penalty for m in col.values())}


def solved_by(matrix, penalty=None):
    """
    Strategy-id -> set of problem-ids it solves in the matrix.
    """
    penalty = matrix.penalty if penalty is None else penalty
    result = {sid: set() for sid in matrix.strategies}
    for pid, col in matrix.columns.items():
        for sid, m in col.items():
            if m < penalty:
                result[sid].add(pid)
    return result


def read_ledger(path, strict=True):
    """
    Read every run of a ledger.
    A malformed last line without a trailing newline is an interrupted append and is skipped;
    any other malformed row raises ParseError with its line number.
    :param path: ledger file; a missing file reads as empty.
    :return: list of RunResult in file order.
    """
    if not os.path.exists(path):
        return []
    with open(path) as f:
        lines = f.readlines()
    results = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            results.append(parse_ledger_row(line, lineno))
        except ParseError:
            if lineno == len(lines) and not line.endswith('\n'):
                logging.warning("MATRIX|READ_LEDGER| skipping partial trailing line {} of {}".format(lineno, path))
                continue
            if strict:
                raise
    return results


def load_matrix(paths, t_high, penalty=DEFAULT_PENALTY, strategies=None, problems=None):
    """
    Rebuild the matrix by folding record_run over the t_high rows of one or more ledgers, in order.
    :param paths: ledger path or list of paths (concatenated).
    :param t_high: cutoff of the matrix; rows at other cutoffs are skipped.
    :param penalty: metric of unsolved runs.
    :param strategies: optional set of strategy-ids to restrict the matrix to.
    :param problems: optional set of problem-ids to restrict the matrix to (rows of other corpora are skipped).
    :return: PerformanceMatrix.
    """
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    matrix = PerformanceMatrix(float(t_high), penalty)
    for path in paths:
        for r in read_ledger(path):
            if float(r.cutoff) != float(t_high):
                continue
            if strategies is not None and r.strategy_id not in strategies:
                continue
            if problems is not None and r.problem_id not in problems:
                continue
            record_run(matrix, r, penalty)
    return matrix


def matrix_from_runs(results, t_high, penalty=DEFAULT_PENALTY):
    matrix = PerformanceMatrix(float(t_high), penalty)
    for r in results:
        if float(r.cutoff) == float(t_high):
            record_run(matrix, r, penalty)
    return matrix


def load_timings(paths):
    """
    Solved-run CPU times of one or more ledgers.
    :return: dict (strategy-id, problem-id) -> list of (cutoff, cpu-time) of its solved runs, and the
    set of strategy-ids that have any run at all.
    """
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    timings = {}
    seen = set()
    for path in paths:
        for r in read_ledger(path):
            seen.add(r.strategy_id)
            if r.status == SOLVED:
                timings.setdefault((r.strategy_id, r.problem_id), []).append((float(r.cutoff), r.cpu_time))
    return timings, seen


def export_matrix(matrix, refined=None):
    """
    Rectangle of E (or of E' when refined is given) with strategies as rows sorted by id and
    problems as columns sorted by id; absent entries are UNDEF.
    :return: pandas DataFrame.
    """
    strategies = matrix.strategies
    problems = matrix.problems
    df = pd.DataFrame(UNDEF, index=pd.Index(strategies, name='strategy'), columns=problems, dtype=object)
    if refined is None:
        for pid, col in matrix.columns.items():
            for sid, m in col.items():
                df.at[sid, pid] = m
    else:
        for (sid, pid), m in refined.defined.items():
            df.at[sid, pid] = m
    return df


def save_matrix(matrix, path, refined=None):
    export_matrix(matrix, refined).to_csv(path, sep='\t')
