"""Kernel backend selection.

Hot loops are written twice: a numba ``@njit`` version and a pure-numpy
version. ``IATPRINT_NO_NUMBA=1`` (or a missing numba install) selects the
numpy path at import time. Both versions are always importable so tests can
compare them directly.
"""
import os

_DISABLED = os.environ.get("IATPRINT_NO_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` with project defaults; identity decorator without numba."""
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn
    return numba.njit(*args, **kwargs)


def pick(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
