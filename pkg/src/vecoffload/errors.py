"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A scenario or hyperparameter configuration is invalid."""


class DomainError(ValueError):
    """A numeric operation was called outside its declared domain."""


class PlacementError(RuntimeError):
    """A task placement is infeasible (e.g. zero bandwidth with pending data)."""


class LifecycleError(RuntimeError):
    """An environment method was called out of order (e.g. step after terminal)."""


class CheckpointError(RuntimeError):
    """A checkpoint file is malformed or incompatible with the scenario."""
