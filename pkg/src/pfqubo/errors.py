"""Exception types shared across the package."""


class PfquboError(Exception):
    """Base class for all library errors."""


class ConfigError(PfquboError, ValueError):
    pass


class DataError(PfquboError, ValueError):
    pass


class BudgetExceeded(PfquboError, RuntimeError):
    """An exact enumeration would exceed its configured budget."""
