"""Exception types. Each maps to one CLI exit code."""


class DDSensorError(Exception):
    exit_code = 1


class ConfigError(DDSensorError, ValueError):
    exit_code = 2


class DataError(DDSensorError, ValueError):
    """Not enough (or not rich enough) data for the requested computation."""

    exit_code = 3


class InsufficientSamplesError(DataError):
    pass


class DimensionError(DDSensorError, ValueError):
    exit_code = 4


class UnstableSystemError(DDSensorError, ValueError):
    """Discounted Gramian requested with ``discount * rho(A) >= 1``."""

    exit_code = 2


class UnobservableError(DDSensorError, ValueError):
    exit_code = 3


class RankDeficitWarning(UserWarning):
    pass
