class ConfigError(ValueError):
    """Invalid configuration; carries the offending key and line when known."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.key = key
        self.line = line


class NumericError(ArithmeticError):
    """A numerical routine failed to converge."""


class FitError(RuntimeError):
    """Raised when a least-squares problem cannot be set up or evaluated."""
