"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """An iterative numerical routine failed to converge."""


class InstabilityError(RuntimeError):
    """The simulated queue grew past its backlog guard."""


class RefusalError(ValueError):
    """An optimizer refused an instance it cannot enumerate."""


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""
