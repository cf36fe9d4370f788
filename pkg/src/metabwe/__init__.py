"""Trace-driven call simulator and a learned metapolicy over bandwidth estimators."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
