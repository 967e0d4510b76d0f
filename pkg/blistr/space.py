import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from blistr.lib.utils import ParseError, sha1_hex, strip_comment

KINDS = ('integer-enum', 'boolean', 'symbolic-enum')

_NAME_RE = re.compile(r'^[A-Za-z_][A-Za-z0-9_\-]*$')
_VALUE_RE = re.compile(r'^[^\s=;,{}\[\]#]+$')
_LINE_RE = re.compile(r'^(?P<name>\S+)\s*\{(?P<values>[^{}]*)\}\s*(?:\[(?P<default>[^\[\]]*)\])?$')


def _infer_kind(values):
    if all(re.match(r'^-?\d+$', v) for v in values):
        return 'integer-enum'
    if set(values) <= {'true', 'false'}:
        return 'boolean'
    return 'symbolic-enum'


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    values: tuple
    default: str = None
    kind: str = None

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise ValueError('bad parameter name "{}"'.format(self.name))
        values = tuple(str(v) for v in self.values)
        if not values:
            raise ValueError('parameter "{}" has an empty value list'.format(self.name))
        seen = set()
        for v in values:
            if not _VALUE_RE.match(v):
                raise ValueError('parameter "{}": bad value "{}"'.format(self.name, v))
            if v in seen:
                raise ValueError('parameter "{}": duplicate value "{}"'.format(self.name, v))
            seen.add(v)
        default = values[0] if self.default is None else str(self.default)
        if default not in seen:
            raise ValueError('parameter "{}": default "{}" not in values'.format(self.name, default))
        kind = self.kind or _infer_kind(values)
        if kind not in KINDS:
            raise ValueError('parameter "{}": unknown kind "{}"'.format(self.name, kind))
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'default', default)
        object.__setattr__(self, 'kind', kind)


@dataclass(frozen=True)
class ParameterSpace:
    params: tuple
    metadata: str = ''
    _index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        params = tuple(self.params)
        index = {}
        for spec in params:
            if spec.name in index:
                raise ValueError('duplicate parameter name "{}"'.format(spec.name))
            index[spec.name] = spec
        object.__setattr__(self, 'params', params)
        object.__setattr__(self, '_index', index)

    def __getitem__(self, name):
        return self._index[name]

    def __contains__(self, name):
        return name in self._index

    def __len__(self):
        return len(self.params)

    @property
    def names(self):
        return [spec.name for spec in self.params]

    @property
    def size(self):
        return space_size(self)


@dataclass(frozen=True)
class Strategy:
    """
    One total configuration of a space. items holds (name, value) pairs sorted by name;
    id is the SHA-1 of the canonical serialization and is filled in by the constructors below.
    """
    items: tuple
    id: str = field(default=None, compare=False)

    def __post_init__(self):
        items = tuple(sorted((str(n), str(v)) for n, v in self.items))
        object.__setattr__(self, 'items', items)
        if self.id is None:
            object.__setattr__(self, 'id', sha1_hex(_canonical_text(items)))

    @property
    def assignment(self):
        return dict(self.items)

    def __getitem__(self, name):
        for n, v in self.items:
            if n == name:
                return v
        raise KeyError(name)

    def replace(self, name, value):
        """
        Copy with one parameter set to value (no validation against a space).
        """
        return Strategy(tuple((n, value if n == name else v) for n, v in self.items))


def _canonical_text(items):
    return ''.join('{}={}\n'.format(n, v) for n, v in items)


def parse_space(text, metadata=''):
    """
    Parse a parameter-space file.
    One parameter per line: name { v1, v2, ... } [default]. The [default] part is optional
    (the first value is the default then); '#' starts a comment; blank lines are ignored.
    :param text: content of the file.
    :param metadata: free-form label stored with the space (usually the file name).
    :return: ParameterSpace with parameters in file order.
    """
    params = []
    names = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = strip_comment(raw)
        if not line:
            continue
        m = _LINE_RE.match(line)
        if not m:
            raise ParseError('malformed parameter line "{}"'.format(raw.strip()), lineno)
        name = m.group('name')
        if name in names:
            raise ParseError('duplicate parameter name "{}" (first on line {})'.format(name, names[name]), lineno)
        values = [v.strip() for v in m.group('values').split(',')]
        if values == ['']:
            raise ParseError('parameter "{}" has an empty value list'.format(name), lineno)
        if '' in values:
            raise ParseError('parameter "{}" has an empty value'.format(name), lineno)
        default = m.group('default')
        if default is not None:
            default = default.strip()
        try:
            params.append(ParameterSpec(name, tuple(values), default))
        except ValueError as e:
            raise ParseError(str(e), lineno)
        names[name] = lineno
    if not params:
        raise ParseError('no parameters declared')
    space = ParameterSpace(tuple(params), metadata)
    logging.debug("SPACE|PARSE_SPACE| {} parameters, {} strategies".format(len(space), space.size))
    return space


def serialize_space(space):
    """
    Write a space back in the parameter-space grammar (parse_space reads it back unchanged).
    """
    lines = []
    if space.metadata:
        lines.append('# {}'.format(space.metadata))
    for spec in space.params:
        lines.append('{} {{ {} }} [{}]'.format(spec.name, ', '.join(spec.values), spec.default))
    return '\n'.join(lines) + '\n'


def space_size(space):
    return math.prod(len(spec.values) for spec in space.params)


def default_strategy(space):
    return Strategy(tuple((spec.name, spec.default) for spec in space.params))


def make_strategy(space, assignment):
    """
    Build a strategy from a name -> value map, checking that it is a total configuration of space.
    :param space: ParameterSpace.
    :param assignment: dict (or iterable of pairs) of parameter name -> literal.
    :return: Strategy.
    """
    assignment = dict(assignment)
    unknown = sorted(set(assignment) - set(space.names))
    if unknown:
        raise ValueError('unknown parameters: {}'.format(', '.join(unknown)))
    missing = [n for n in space.names if n not in assignment]
    if missing:
        raise ValueError('partial assignment, missing: {}'.format(', '.join(missing)))
    for name, value in assignment.items():
        if str(value) not in space[name].values:
            raise ValueError('value "{}" is not admissible for parameter "{}"'.format(value, name))
    return Strategy(tuple(assignment.items()))


def check_strategy(space, strategy):
    make_strategy(space, strategy.items)


def canonical_serialize(strategy, space=None):
    """
    Canonical text of a strategy: parameters sorted by name, one name=value per line,
    single trailing newline.
    :param strategy: Strategy.
    :param space: when given, the strategy is checked to be total over it.
    :return: text.
    """
    if space is not None:
        missing = [n for n in space.names if n not in strategy.assignment]
        if missing:
            raise ValueError('partial assignment, missing: {}'.format(', '.join(missing)))
    return _canonical_text(strategy.items)


def strategy_id(strategy):
    return sha1_hex(canonical_serialize(strategy))


def parse_strategy(space, text):
    """
    Parse a strategy file (name=value lines, any order, '#' comments) against a space.
    :param space: ParameterSpace the strategy must be total over.
    :param text: content of the file.
    :return: Strategy.
    """
    assignment = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = strip_comment(raw)
        if not line:
            continue
        if '=' not in line:
            raise ParseError('expected name=value, got "{}"'.format(raw.strip()), lineno)
        name, value = [x.strip() for x in line.split('=', 1)]
        if name not in space:
            raise ParseError('unknown parameter "{}"'.format(name), lineno)
        if name in assignment:
            raise ParseError('parameter "{}" assigned twice'.format(name), lineno)
        if value not in space[name].values:
            raise ParseError('value "{}" is not admissible for parameter "{}"'.format(value, name), lineno)
        assignment[name] = value
    missing = [n for n in space.names if n not in assignment]
    if missing:
        raise ParseError('partial assignment, missing: {}'.format(', '.join(missing)))
    return Strategy(tuple(assignment.items()))


def neighbors(space, strategy):
    """
    One-exchange neighbourhood: every strategy that differs from strategy in exactly one parameter.
    Ordered by parameter order of the space, then by value order.
    :return: list of sum(|values_i| - 1) strategies.
    """
    result = []
    current = strategy.assignment
    for spec in space.params:
        for value in spec.values:
            if value != current[spec.name]:
                result.append(strategy.replace(spec.name, value))
    return result


def random_strategy(space, seed=None):
    """
    Draw every parameter uniformly and independently.
    :param space: ParameterSpace.
    :param seed: int seed or numpy Generator (reproducible either way).
    :return: Strategy.
    """
    rng = np.random.default_rng(seed)
    return Strategy(tuple((spec.name, spec.values[int(rng.integers(len(spec.values)))]) for spec in space.params))


def distance(a, b, weights=None):
    """
    (Weighted) Hamming distance between two strategies over the same parameters.
    """
    other = b.assignment
    if weights is None:
        return sum(1 for n, v in a.items if other[n] != v)
    return sum(weights.get(n, 1) for n, v in a.items if other[n] != v)
