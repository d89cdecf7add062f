"""Numerical kernels with a compiled core and a pure-numpy fallback.

The hot loops (dense-net forward/backward, Adam updates, the sequential
OU scan used by the thinning simulator) live in a Cython extension
(`ratiopp.kernels._core`).  If the extension is missing the package
falls back to the numpy implementations, which are exact functional
twins.  `RATIOPP_KERNELS=numpy|cython` forces a backend.
"""

import os

from . import numpy_backend

_backends = {"numpy": numpy_backend}

try:
    from . import _core as cython_backend

    _backends["cython"] = cython_backend
except ImportError:
    cython_backend = None


def available():
    """Names of the importable backends."""
    return sorted(_backends)


def get(name):
    try:
        return _backends[name]
    except KeyError:
        raise ValueError(f"unknown kernel backend {name!r}; have {available()}") from None


def _default():
    forced = os.environ.get("RATIOPP_KERNELS", "").strip().lower()
    if forced:
        return get(forced)
    return _backends.get("cython", numpy_backend)


active = _default()


def set_active(name):
    """Switch the process-wide backend (tests and benchmarks)."""
    global active
    active = get(name)
    return active
