"""Exceptions that the command-line surface maps to exit codes."""


class ConfigError(ValueError):
    """A config file problem, carrying the offending path and line number."""

    def __init__(self, message: str, path=None, line: int | None = None):
        loc = "" if path is None else str(path)
        if line is not None:
            loc += f":{line}" if loc else f"line {line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""
