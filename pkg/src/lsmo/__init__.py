"""Learning the manifold of optimal solutions with importance-weighted VAEs."""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
