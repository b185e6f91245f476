"""Exception hierarchy shared by parsers, passes and the planner."""


class HTNError(Exception):
    """Base class for every error raised by htnforge."""


class ParseError(HTNError):
    """Syntax error in a domain or problem description."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class UnsupportedFeatureError(ParseError):
    """The input is well formed but uses a construct outside the supported subset."""


class ValidationError(HTNError):
    """The instance is inconsistent (arity clash, unknown task, rigid effect, ...)."""


class InvariantViolation(HTNError):
    """Internal contract broken, e.g. a lifted literal reached a ground-only check."""


class OracleOverflow(HTNError):
    """The brute-force enumerator exceeded its node cap."""
