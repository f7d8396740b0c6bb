"""Backend selection for the hot numeric kernels.

``TRIMCURVE_BACKEND=numpy`` forces the pure-numpy path; ``numba`` (the
default when numba imports) uses the jitted loops.  The choice is read once
at import time.
"""
import os

BACKEND_ENV = "TRIMCURVE_BACKEND"

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def requested_backend() -> str:
    value = os.environ.get(BACKEND_ENV, "numba").strip().lower()
    if value not in ("numba", "numpy"):
        raise ValueError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {value!r}")
    if value == "numba" and not HAS_NUMBA:
        return "numpy"
    return value


BACKEND = requested_backend()
USE_NUMBA = BACKEND == "numba"


def njit(func):
    """``numba.njit`` with the project options, or identity without numba."""
    if not HAS_NUMBA:
        return func
    return numba.njit(func, cache=True, nogil=True)
