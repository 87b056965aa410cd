"""Kernel backend selection.

Set ``LIESRNN_NUMBA=0`` to force the vectorized numpy path everywhere.  When
numba is unavailable the numpy path is used automatically.
"""
import os

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba ships with the sandbox
    numba = None
    _HAVE_NUMBA = False


def _flag(name, default):
    value = os.environ.get(name, default).strip().lower()
    return value not in ("0", "false", "no", "off", "")


USE_NUMBA = _HAVE_NUMBA and _flag("LIESRNN_NUMBA", "1")


def jit(fn):
    """``numba.njit`` when the numba backend is active, identity otherwise."""
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


def num_threads():
    """Worker count for per-trajectory parallelism (``LIESRNN_THREADS``)."""
    try:
        return max(1, int(os.environ.get("LIESRNN_THREADS", "1")))
    except ValueError:
        return 1
