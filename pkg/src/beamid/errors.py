"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or unsatisfiable configuration (CLI exit code 1)."""


class DataError(ValueError):
    """Malformed dataset, missing labels, or incompatible artifacts (CLI exit code 2)."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required (CLI exit code 3)."""


class NoCandidatesError(RuntimeError):
    """Identification was asked to choose among zero detected objects."""
