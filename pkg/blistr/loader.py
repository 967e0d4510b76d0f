import glob
import json
import logging
import os
import shlex
from os.path import basename, dirname, exists, isabs, join, normpath

import pandas as pd

from blistr.backend import BackendConfig, ProblemInstance, parse_landscape
from blistr.ils import IlsConfig
from blistr.lib.utils import ParseError, strip_comment
from blistr.space import canonical_serialize, parse_space, parse_strategy

COMMAND_ENV = 'BLISTR_COMMAND'

SPACE_FILE = 'space.txt'
LEDGER_FILE = 'ledger.tsv'
EVENTS_FILE = 'events.jsonl'
STRATEGIES_DIR = 'strategies'
TRACES_DIR = 'traces'
MANIFEST_FILE = 'manifest.json'
CONFIG_FILE = 'config.json'
SESSIONS_FILE = 'sessions.jsonl'
LOG_FILE = 'blistr.log'


def _read(path):
    if not exists(path):
        raise FileNotFoundError('no such file: {}'.format(path))
    with open(path) as f:
        return f.read()


def load_space(path):
    return parse_space(_read(path), metadata=basename(path))


def load_strategy(path, space):
    try:
        return parse_strategy(space, _read(path))
    except ParseError as e:
        raise ParseError('{}: {}'.format(path, e))


def load_corpus(path):
    """
    Read a corpus listing: one problem per line, 'problem_id [locator]'; '#' starts a comment.
    Relative locators resolve against the listing's directory.
    :return: list of ProblemInstance in file order.
    """
    problems = []
    seen = {}
    base = dirname(os.path.abspath(path))
    for lineno, raw in enumerate(_read(path).splitlines(), start=1):
        line = strip_comment(raw)
        if not line:
            continue
        parts = line.split(None, 1)
        pid = parts[0]
        if pid in seen:
            raise ParseError('{}: duplicate problem "{}" (first on line {})'.format(path, pid, seen[pid]), lineno)
        seen[pid] = lineno
        locator = parts[1].strip() if len(parts) > 1 else None
        if locator is not None and not isabs(locator):
            locator = normpath(join(base, locator))
        problems.append(ProblemInstance(pid, locator))
    if not problems:
        raise ParseError('{}: the corpus listing is empty'.format(path))
    return problems


def load_landscape(path):
    try:
        return parse_landscape(_read(path))
    except ParseError as e:
        raise ParseError('{}: {}'.format(path, e))


def _resolve_program(command, base):
    """
    Anchor a relative program path (the first word of a command template, e.g. ./e_wrapper.sh) at base.
    Bare program names are left to the PATH lookup.
    """
    parts = command.split(None, 1)
    if not parts:
        return command
    program = parts[0]
    if '/' not in program or isabs(program) or program[0] in '"\'{':
        return command
    program = shlex.quote(normpath(join(base, program)))
    return program if len(parts) == 1 else '{} {}'.format(program, parts[1])


def load_backend_config(path):
    """
    Read a backend JSON file. Relative paths resolve against its directory; the BLISTR_COMMAND
    environment variable replaces the external command template.
    :return: BackendConfig.
    """
    with open(path) as f:
        data = json.load(f)
    kind = data.get('kind')
    if kind == 'synthetic':
        landscape = data.get('landscape')
        if not landscape:
            raise ValueError('{}: synthetic backend needs "landscape"'.format(path))
        if not isabs(landscape):
            landscape = join(dirname(os.path.abspath(path)), landscape)
        return BackendConfig('synthetic', landscape=load_landscape(landscape))
    if os.environ.get(COMMAND_ENV):
        command = os.environ[COMMAND_ENV]
        logging.info("LOADER|LOAD_BACKEND_CONFIG| command template taken from {}".format(COMMAND_ENV))
    else:
        command = data.get('command')
        if command:
            command = _resolve_program(command, dirname(os.path.abspath(path)))
    return BackendConfig(kind, command=command, metric_pattern=data.get('metric_pattern'),
                         solved_pattern=data.get('solved_pattern'))


def read_json(path):
    with open(path) as f:
        return json.load(f)


def write_json(path, data):
    with open(path, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write('\n')


def loop_config_from_dict(data):
    """
    Build a LoopConfig from the flat key set of data/loop_defaults.json.
    """
    from blistr.loop import LoopConfig

    ils = IlsConfig(t_low=float(data['t_low']), budget=float(data['t_paramils']), strength=int(data['strength']),
                    restart_probability=float(data['restart_probability']), penalty=int(data['penalty']),
                    seed=int(data['seed']), stall_rounds=int(data['stall_rounds']))
    max_iterations = data.get('max_iterations')
    return LoopConfig(t_high=float(data['t_high']), c_min=int(data['c_min']), c_max=int(data['c_max']),
                      versatility=int(data['versatility']), max_eligible=int(data['max_eligible']), ils=ils,
                      penalty=int(data['penalty']),
                      max_iterations=None if max_iterations is None else int(max_iterations),
                      strict_versatility=bool(data.get('strict_versatility', False)))


# run directory layout

def space_path(rundir):
    return join(rundir, SPACE_FILE)


def ledger_path(rundir):
    return join(rundir, LEDGER_FILE)


def events_path(rundir):
    return join(rundir, EVENTS_FILE)


def strategy_path(rundir, strategy_id):
    return join(rundir, STRATEGIES_DIR, '{}.strat'.format(strategy_id))


def save_strategy(rundir, strategy):
    path = strategy_path(rundir, strategy.id)
    if not exists(path):
        os.makedirs(dirname(path), exist_ok=True)
        tmp = path + '.tmp'
        with open(tmp, 'w') as f:
            f.write(canonical_serialize(strategy))
        os.replace(tmp, path)
    return path


def read_strategies(rundir, space):
    """
    All strategy definitions of a run directory, keyed by id.
    """
    result = {}
    for path in sorted(glob.glob(join(rundir, STRATEGIES_DIR, '*.strat'))):
        strategy = load_strategy(path, space)
        name = basename(path)[:-len('.strat')]
        if name != strategy.id:
            logging.warning("LOADER|READ_STRATEGIES| {} holds strategy {}".format(path, strategy.id))
        result[strategy.id] = strategy
    return result


def append_event(rundir, event):
    with open(events_path(rundir), 'a') as f:
        f.write(json.dumps(event, sort_keys=True) + '\n')


def read_events(rundir):
    """
    Event log records in order; an interrupted last line is skipped.
    """
    path = events_path(rundir)
    if not exists(path):
        return []
    with open(path) as f:
        lines = f.readlines()
    events = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            events.append(json.loads(line))
        except json.JSONDecodeError:
            if lineno == len(lines) and not line.endswith('\n'):
                logging.warning("LOADER|READ_EVENTS| skipping partial trailing line {}".format(lineno))
                continue
            raise ParseError('{}: malformed event record'.format(path), lineno)
    return events


def save_trace(rundir, iteration, trace):
    """
    ILS trace of one iteration: solver-clock offset, strategy-id, score, evaluations so far;
    one line per accepted incumbent.
    """
    os.makedirs(join(rundir, TRACES_DIR), exist_ok=True)
    with open(join(rundir, TRACES_DIR, '{:04d}.tsv'.format(iteration)), 'w') as f:
        for offset, sid, score, evaluations in trace:
            f.write('{:.6f}\t{}\t{:.6f}\t{}\n'.format(offset, sid, float(score), evaluations))


def read_traces(rundir):
    frames = []
    for path in sorted(glob.glob(join(rundir, TRACES_DIR, '*.tsv'))):
        df = pd.read_csv(path, sep='\t', header=None, names=['offset', 'strategy_id', 'score', 'evaluations'])
        df['iteration'] = int(basename(path).split('.')[0])
        frames.append(df)
    if not frames:
        return pd.DataFrame(columns=['offset', 'strategy_id', 'score', 'evaluations', 'iteration'])
    return pd.concat(frames, ignore_index=True)


def append_session(rundir, session):
    with open(join(rundir, SESSIONS_FILE), 'a') as f:
        f.write(json.dumps(session, sort_keys=True) + '\n')


def read_sessions(rundir):
    path = join(rundir, SESSIONS_FILE)
    if not exists(path):
        return []
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip() and line.endswith('\n')]
