"""Iterative Fourier-domain hybrid testing of a cantilever beam, in software."""

from .cli import main
from .core import HybridBeamError, InvalidArgumentError, NearPoleError, NumericalFailureError
from .run_config import RunConfig, load_config

try:
    import importlib.metadata

    __version__ = importlib.metadata.version("hybrid-beam")
except ImportError:
    __version__ = "0.0.0"  # fallback

__all__ = [
    "main",
    "RunConfig",
    "load_config",
    "HybridBeamError",
    "InvalidArgumentError",
    "NearPoleError",
    "NumericalFailureError",
]
