import datetime
import logging
import math
import os
import re
import shlex
import signal
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import psutil
from tqdm import tqdm

from blistr.lib.utils import ParseError, format_number, strip_comment
from blistr.space import canonical_serialize

SOLVED = 'solved'
UNSOLVED = 'unsolved'
TIMEOUT = 'timeout'
BACKEND_ERROR = 'backend-error'
STATUSES = (SOLVED, UNSOLVED, TIMEOUT, BACKEND_ERROR)

DEFAULT_PENALTY = 10 ** 6
GRACE = 1.0
POLL_INTERVAL = 0.05
DEFAULT_RATE = 100000
PLACEHOLDERS = ('{strategy_file}', '{problem}', '{cutoff}')
LEDGER_COLUMNS = ['strategy_id', 'problem_id', 'cutoff', 'status', 'metric', 'cpu_time', 'timestamp']


@dataclass(frozen=True)
class ProblemInstance:
    id: str
    locator: str = None

    def __post_init__(self):
        if self.locator is None:
            object.__setattr__(self, 'locator', self.id)


@dataclass(frozen=True)
class RunResult:
    strategy_id: str
    problem_id: str
    cutoff: float
    status: str
    metric: int = None
    cpu_time: float = 0.0

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError('unknown run status "{}"'.format(self.status))
        if self.status == SOLVED and self.metric is None:
            raise ValueError('a solved run needs a metric')
        if self.status != SOLVED:
            object.__setattr__(self, 'metric', None)

    @property
    def solved(self):
        return self.status == SOLVED


@dataclass(frozen=True)
class LandscapeProblem:
    hardness: int
    threshold: int
    target: dict


@dataclass(frozen=True)
class SyntheticLandscape:
    """
    Deterministic stand-in for a prover: the metric of a strategy on a problem grows with the
    weighted Hamming distance of the strategy to the problem's target.
    """
    problems: dict
    weights: dict
    rate: float = DEFAULT_RATE

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError('landscape rate must be positive')
        for name, w in self.weights.items():
            if int(w) < 1:
                raise ValueError('weight of "{}" must be a positive integer'.format(name))
        for pid, prob in self.problems.items():
            if prob.hardness < 1:
                raise ValueError('hardness of "{}" must be a positive integer'.format(pid))


@dataclass(frozen=True)
class BackendConfig:
    kind: str
    command: str = None
    metric_pattern: str = None
    solved_pattern: str = None
    landscape: SyntheticLandscape = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind == 'synthetic':
            if self.landscape is None:
                raise ValueError('synthetic backend needs a landscape')
        elif self.kind == 'external':
            for name in ('command', 'metric_pattern', 'solved_pattern'):
                if not getattr(self, name):
                    raise ValueError('external backend needs "{}"'.format(name))
            for ph in PLACEHOLDERS:
                if self.command.count(ph) != 1:
                    raise ValueError('command template must contain {} exactly once'.format(ph))
            for name in ('metric_pattern', 'solved_pattern'):
                try:
                    re.compile(getattr(self, name))
                except re.error as e:
                    raise ValueError('bad {}: {}'.format(name, e))
            if re.compile(self.metric_pattern).groups < 1:
                raise ValueError('metric_pattern needs a capturing group for the count')
        else:
            raise ValueError('unknown backend kind "{}"'.format(self.kind))


def parse_landscape(text):
    """
    Parse a synthetic landscape file.
    Lines: 'problem_id hardness threshold name=value;name=value;...', one global
    'weights: name=int,...' line and an optional 'rate: <metric units per CPU second>' line.
    Parameters missing from the weights line weigh 1.
    :param text: content of the file.
    :return: SyntheticLandscape.
    """
    problems = {}
    weights = {}
    rate = DEFAULT_RATE
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = strip_comment(raw)
        if not line:
            continue
        if line.startswith('weights:'):
            for item in line[len('weights:'):].split(','):
                item = item.strip()
                if not item:
                    continue
                try:
                    name, w = item.split('=')
                    weights[name.strip()] = int(w)
                except ValueError:
                    raise ParseError('bad weight "{}"'.format(item), lineno)
                if weights[name.strip()] < 1:
                    raise ParseError('weight of "{}" must be positive'.format(name.strip()), lineno)
            continue
        if line.startswith('rate:'):
            try:
                rate = float(line[len('rate:'):])
            except ValueError:
                raise ParseError('bad rate', lineno)
            if rate <= 0:
                raise ParseError('rate must be positive', lineno)
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ParseError('expected "problem_id hardness threshold target"', lineno)
        pid, hardness, threshold, target = parts
        if pid in problems:
            raise ParseError('duplicate problem "{}"'.format(pid), lineno)
        try:
            hardness, threshold = int(hardness), int(threshold)
        except ValueError:
            raise ParseError('hardness and threshold must be integers', lineno)
        if hardness < 1:
            raise ParseError('hardness must be positive', lineno)
        assignment = {}
        for item in target.split(';'):
            if '=' not in item:
                raise ParseError('bad target item "{}"'.format(item), lineno)
            name, value = item.split('=', 1)
            assignment[name] = value
        problems[pid] = LandscapeProblem(hardness, threshold, assignment)
    return SyntheticLandscape(problems, weights, rate)


def synth_eval(land, strategy, problem, cutoff=math.inf):
    """
    Evaluate a strategy on a landscape problem.
    metric = hardness * (1 + sum of weights of parameters that differ from the target);
    solved iff metric <= threshold; simulated CPU time = metric / rate, and a solved run
    whose CPU time exceeds cutoff is a timeout.
    :param land: SyntheticLandscape.
    :param strategy: Strategy.
    :param problem: ProblemInstance of the landscape.
    :param cutoff: CPU limit in seconds.
    :return: RunResult.
    """
    pid = problem.id
    if pid not in land.problems:
        raise ValueError('unknown problem "{}"'.format(pid))
    prob = land.problems[pid]
    mismatch = sum(land.weights.get(n, 1) for n, v in strategy.items if prob.target.get(n, v) != v)
    metric = prob.hardness * (1 + mismatch)
    cpu_time = metric / land.rate
    if metric > prob.threshold:
        return RunResult(strategy.id, pid, cutoff, UNSOLVED, None, min(cpu_time, cutoff))
    if cpu_time > cutoff:
        return RunResult(strategy.id, pid, cutoff, TIMEOUT, None, cutoff)
    return RunResult(strategy.id, pid, cutoff, SOLVED, metric, cpu_time)


def _tree_cpu(ps):
    try:
        procs = [ps] + ps.children(recursive=True)
    except psutil.Error:
        return None
    total = 0.0
    for proc in procs:
        try:
            t = proc.cpu_times()
            total += t.user + t.system + t.children_user + t.children_system
        except psutil.Error:
            continue
    return total


def _kill_group(proc):
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()


def _run_external(cfg, strategy, problem, cutoff):
    def error(message):
        logging.warning("BACKEND|RUN_SOLVER| {} on {}: {}".format(strategy.id[:8], problem.id, message))
        return RunResult(strategy.id, problem.id, cutoff, BACKEND_ERROR, None, 0.0)

    command_template = cfg.command
    for ph in PLACEHOLDERS:
        if command_template.count(ph) != 1:
            return error('malformed command template')

    fd, strategy_file = tempfile.mkstemp(suffix='.strat', prefix='blistr-')
    with os.fdopen(fd, 'w') as f:
        f.write(canonical_serialize(strategy))
    try:
        try:
            command = command_template.format(strategy_file=shlex.quote(strategy_file),
                                              problem=shlex.quote(str(problem.locator)),
                                              cutoff=format_number(cutoff))
            args = shlex.split(command)
        except (KeyError, IndexError, ValueError) as e:
            return error('malformed command template ({})'.format(e))

        start = time.monotonic()
        try:
            proc = subprocess.Popen(args, stdin=subprocess.DEVNULL, stdout=subprocess.PIPE,
                                    stderr=subprocess.STDOUT, start_new_session=True)
        except OSError as e:
            return error('cannot spawn solver ({})'.format(e))
        try:
            ps = psutil.Process(proc.pid)
        except psutil.Error:
            ps = None

        cpu = None
        killed = False
        while True:
            try:
                out, _ = proc.communicate(timeout=POLL_INTERVAL)
                break
            except subprocess.TimeoutExpired:
                if ps is not None:
                    polled = _tree_cpu(ps)
                    if polled is not None:
                        cpu = polled
                wall = time.monotonic() - start
                if (cpu is not None and cpu > cutoff) or wall > cutoff + GRACE:
                    _kill_group(proc)
                    out, _ = proc.communicate()
                    killed = True
                    break
        wall = time.monotonic() - start
    finally:
        try:
            os.unlink(strategy_file)
        except OSError:
            pass

    cpu_time = min(wall if cpu is None else cpu, cutoff + GRACE)
    if killed:
        logging.debug("BACKEND|RUN_SOLVER| killed {} on {} after {:.2f}s".format(strategy.id[:8], problem.id, wall))
        return RunResult(strategy.id, problem.id, cutoff, TIMEOUT, None, cpu_time)

    output = out.decode('utf-8', errors='replace') if out else ''
    if re.search(cfg.solved_pattern, output):
        m = re.search(cfg.metric_pattern, output)
        if not m:
            return error('solved output without a parsable metric')
        try:
            metric = int(m.group(1))
        except ValueError:
            return error('metric "{}" is not an integer'.format(m.group(1)))
        return RunResult(strategy.id, problem.id, cutoff, SOLVED, metric, cpu_time)
    status = TIMEOUT if cpu_time >= cutoff else UNSOLVED
    return RunResult(strategy.id, problem.id, cutoff, status, None, cpu_time)


def run_solver(cfg, strategy, problem, cutoff):
    """
    Run one strategy on one problem under a CPU cutoff.
    Never raises on solver failure: the status of the returned record encodes it.
    :param cfg: BackendConfig.
    :param strategy: Strategy.
    :param problem: ProblemInstance.
    :param cutoff: CPU limit in seconds (> 0).
    :return: RunResult.
    """
    cutoff = float(cutoff)
    if not cutoff > 0:
        raise ValueError('cutoff must be positive')
    if cfg.kind == 'synthetic':
        try:
            return synth_eval(cfg.landscape, strategy, problem, cutoff)
        except ValueError as e:
            logging.warning("BACKEND|RUN_SOLVER| {}".format(e))
            return RunResult(strategy.id, problem.id, cutoff, BACKEND_ERROR, None, 0.0)
    return _run_external(cfg, strategy, problem, cutoff)


def penalized_metric(result, penalty=DEFAULT_PENALTY):
    if result.status == SOLVED:
        return result.metric
    return penalty


def format_ledger_row(result, timestamp=None):
    if timestamp is None:
        timestamp = datetime.datetime.now().isoformat(timespec='seconds')
    return '\t'.join([result.strategy_id, result.problem_id, format_number(result.cutoff), result.status,
                      '-' if result.metric is None else str(result.metric),
                      '{:.6f}'.format(result.cpu_time), timestamp]) + '\n'


def parse_ledger_row(line, lineno=None):
    parts = line.rstrip('\n').split('\t')
    if len(parts) != len(LEDGER_COLUMNS):
        raise ParseError('expected {} tab-separated fields, got {}'.format(len(LEDGER_COLUMNS), len(parts)), lineno)
    sid, pid, cutoff, status, metric, cpu_time, _ = parts
    try:
        return RunResult(sid, pid, float(cutoff), status, None if metric == '-' else int(metric), float(cpu_time))
    except ValueError as e:
        raise ParseError('bad ledger row ({})'.format(e), lineno)


class Ledger:
    """
    Append-only run ledger, one tab-separated row per run. Single writer.
    """

    def __init__(self, path):
        self.path = path

    def append(self, results):
        if not results:
            return
        with open(self.path, 'a') as f:
            f.write(''.join(format_ledger_row(r) for r in results))
            f.flush()


class Runner:
    """
    Runs strategies through a backend. Every fresh run is appended to the ledger and cached by
    (strategy-id, problem-id, cutoff); `charged` is the solver clock, the CPU seconds of all
    fresh runs so far.
    """

    def __init__(self, config, ledger=None, jobs=1, progress=False):
        self.config = config
        self.ledger = ledger
        self.jobs = max(1, int(jobs))
        self.progress = progress
        self.cache = {}
        self.scores = {}
        self.charged = 0.0
        self.fresh_runs = 0

    def preload(self, results):
        for r in results:
            self.cache.setdefault((r.strategy_id, r.problem_id, float(r.cutoff)), r)

    def _execute(self, strategy, problems, cutoff, desc):
        bar = desc is not None and self.progress
        if self.jobs == 1 or self.config.kind == 'synthetic' or len(problems) == 1:
            it = tqdm(problems, desc=desc, leave=False) if bar else problems
            return [run_solver(self.config, strategy, p, cutoff) for p in it]
        with ThreadPoolExecutor(max_workers=self.jobs) as ex:
            it = ex.map(lambda p: run_solver(self.config, strategy, p, cutoff), problems)
            if bar:
                it = tqdm(it, total=len(problems), desc=desc, leave=False)
            return list(it)

    def run(self, strategy, problems, cutoff, desc=None):
        """
        Results of strategy on every problem at cutoff, in problem order; only uncached pairs are run.
        """
        cutoff = float(cutoff)
        todo = []
        seen = set()
        for p in problems:
            if (strategy.id, p.id, cutoff) not in self.cache and p.id not in seen:
                todo.append(p)
                seen.add(p.id)
        if todo:
            results = self._execute(strategy, todo, cutoff, desc)
            for r in results:
                self.cache[(r.strategy_id, r.problem_id, cutoff)] = r
                self.charged += r.cpu_time
            self.fresh_runs += len(results)
            if self.ledger is not None:
                self.ledger.append(results)
        return [self.cache[(strategy.id, p.id, cutoff)] for p in problems]
