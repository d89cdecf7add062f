"""Marked point process simulation and neural intensity-ratio estimation."""

__version__ = "0.1.0"

from . import kernels  # noqa: F401  (selects the compute backend at import)
