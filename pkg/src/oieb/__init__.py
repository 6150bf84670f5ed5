"""Beat-generator error-correction maps: period, order-preserving and OIEB."""
from .errors import (
    AlreadyFiredError,
    DivergentError,
    DomainError,
    DynamicsTermination,
    StalledError,
)
from .maps import *  # noqa: F401,F403
from .maps import __all__ as _maps_all

__version__ = "0.1.0"

__all__ = [
    "AlreadyFiredError",
    "DivergentError",
    "DomainError",
    "DynamicsTermination",
    "StalledError",
    *_maps_all,
]
