"""Exception types shared across the package."""


class OARulesError(Exception):
    """Base class for package errors."""


class DataError(OARulesError, ValueError):
    """Malformed input data, schema violations, or incompatible files."""


class ParseError(OARulesError, ValueError):
    """A text format (model, schema, tree) could not be parsed."""

    def __init__(self, message, line=None, token=None):
        self.line = line
        self.token = token
        where = []
        if line is not None:
            where.append(f"line {line}")
        if token is not None:
            where.append(f"token {token!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class GuardError(OARulesError, RuntimeError):
    """A configured size guard was exceeded before doing exponential work."""
