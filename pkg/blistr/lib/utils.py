import hashlib


class ParseError(Exception):
    """
    Error raised by the text parsers (space, strategy, landscape, corpus and ledger files).
    :param message: what is wrong with the input.
    :param line: 1-based line number of the offending line or None.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = 'line {}: {}'.format(line, message)
        super().__init__(message)


def sha1_hex(text):
    """
    SHA-1 digest of the UTF-8 encoding of text.
    :param text: string to digest.
    :return: 40 lowercase hex characters.
    """
    return hashlib.sha1(text.encode('utf-8')).hexdigest()


def problems_hash(problem_ids):
    """
    Content hash of a problem set, independent of the order of its members.
    :param problem_ids: iterable of problem identifiers.
    :return: hex digest of the sorted identifiers joined by newlines.
    """
    return sha1_hex(''.join('{}\n'.format(p) for p in sorted(set(problem_ids))))


def format_duration(seconds):
    return "{:.0f}m {:.0f}s".format(seconds // 60, seconds % 60)


def format_number(value):
    """
    Compact text form of a cutoff or a time: integral floats lose their fraction.
    """
    value = float(value)
    if value.is_integer():
        return str(int(value))
    return repr(round(value, 6))


def strip_comment(line):
    return line.split('#', 1)[0].strip()

