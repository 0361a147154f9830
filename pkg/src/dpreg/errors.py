"""Exception hierarchy shared by every module."""


class DPRegError(Exception):
    """Base class for all errors raised by dpreg."""


class InvalidParameterError(DPRegError, ValueError):
    pass


class DegenerateGroupError(DPRegError, ValueError):
    """A sensitive group has zero mass where a positive one is required."""


class OutOfRangeError(DPRegError, ValueError):
    pass


class RankDeficiencyError(DPRegError, ValueError):
    pass


class PreconditionError(DPRegError, ValueError):
    pass


class ParseError(DPRegError, ValueError):
    """Malformed input file; the message names the offending row and column."""
