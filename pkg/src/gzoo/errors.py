"""Exception types shared across the package."""


class GzooError(Exception):
    """Base class for all package errors."""


class ParameterError(GzooError):
    """A planner or config received a nonpositive / inconsistent parameter."""


class OracleFailure(GzooError):
    """An oracle evaluation failed (child process died, bad response, timeout).

    ``raw`` carries the offending response line, when one was read.
    """

    def __init__(self, message, raw=None):
        super().__init__(message)
        self.raw = raw


class DivergenceError(GzooError):
    """An iterate left the finite range; carries the trace collected so far."""

    def __init__(self, message, trace=None, calls=0):
        super().__init__(message)
        self.trace = trace if trace is not None else []
        self.calls = calls


class ParseError(GzooError):
    """Malformed LIBSVM input, with a 1-based line and column position."""

    def __init__(self, message, line, column=0):
        super().__init__(f"line {line}, col {column}: {message}")
        self.line = line
        self.column = column
