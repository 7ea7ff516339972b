"""Monte Carlo laboratory for anticipated BSDEs and their comparison conditions."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
