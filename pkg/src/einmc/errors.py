"""Exception types shared across the package."""

__all__ = ["ConfigError", "SimulationError", "RegenerationError", "EstimationError"]


class ConfigError(ValueError):
    """A config file or parameter set is malformed or inconsistent."""


class SimulationError(RuntimeError):
    """A simulated path failed (non-finite state) or its record is unusable."""


class RegenerationError(RuntimeError):
    """The regeneration detector hit a structural limit (not a censoring event)."""


class EstimationError(RuntimeError):
    """An estimator postcondition failed (for example a non-PSD covariance)."""
