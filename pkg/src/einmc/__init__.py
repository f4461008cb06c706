"""Monte Carlo laboratory for the Einstein relation of reversible diffusions
in stationary random environments.

Submodule imports are deferred: the CLI must be able to pick a worker
count before anything pulls in the compiled kernels, and ``import einmc``
alone should stay cheap.
"""
from importlib import import_module

from .errors import ConfigError, EstimationError, RegenerationError, SimulationError

__version__ = "0.1.0"

_LAZY = {
    "Environment": ".environment",
    "EnvironmentSpec": ".environment",
    "build_environment": ".environment",
    "drift_at": ".environment",
}

__all__ = [
    "Environment",
    "EnvironmentSpec",
    "build_environment",
    "drift_at",
    "ConfigError",
    "EstimationError",
    "RegenerationError",
    "SimulationError",
    "__version__",
]


def __getattr__(name):
    try:
        module = _LAZY[name]
    except KeyError:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}") from None
    value = getattr(import_module(module, __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(set(globals()) | set(_LAZY))
