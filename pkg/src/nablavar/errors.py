"""Exception hierarchy shared by every module."""


class NablavarError(Exception):
    """Base class for all errors raised by nablavar."""


class DomainError(NablavarError, ValueError):
    """A value lies outside the domain of an operation.

    Raised for points that are not in a time scale, for derivatives queried
    where they are undefined, and for mathematical singularities (``ln`` of a
    non-positive number, division by zero, ...).
    """


class UsageError(NablavarError, ValueError):
    """An operation was called in a way its contract forbids."""


class PreconditionError(UsageError):
    """Inputs violate a stated precondition (e.g. a fixed boundary value)."""


class ParseError(NablavarError):
    """Malformed expression text.

    Attributes
    ----------
    offset : int
        Zero-based character offset where parsing failed.
    expected : str
        Description of what the parser was looking for.
    found : str
        Description of the token actually present.
    """

    def __init__(self, text, offset, expected, found):
        self.text = text
        self.offset = offset
        self.expected = expected
        self.found = found
        super().__init__(f"at offset {offset}: expected {expected}, found {found}")


class ProblemFileError(NablavarError):
    """Invalid problem file; ``line`` is 1-based (0 when not line specific)."""

    def __init__(self, message, line=0, path=None):
        self.line = line
        self.path = path
        where = f"{path or '<problem>'}:{line}: " if line else f"{path or '<problem>'}: "
        super().__init__(where + message)
