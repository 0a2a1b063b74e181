"""Execution backend selection.

Hot loops live in :mod:`proxkit.kernels` and are compiled with numba when it
is importable.  Setting the environment variable ``PROXKIT_NUMBA=0`` before
import forces the pure-numpy fallback path; anything else (including numba
simply being absent) is handled automatically.  ``proxkit bench`` compares
the two paths on an identical workload.
"""

import os

_FLAG = os.environ.get("PROXKIT_NUMBA", "1").strip().lower()
_WANT_NUMBA = _FLAG not in ("0", "false", "no", "off")

try:
    if _WANT_NUMBA:
        from numba import njit as _njit
        _HAVE_NUMBA = True
    else:
        _njit = None
        _HAVE_NUMBA = False
except ImportError:  # pragma: no cover - exercised only without numba installed
    _njit = None
    _HAVE_NUMBA = False


def numba_enabled() -> bool:
    """True when the compiled kernel path is active."""
    return _HAVE_NUMBA


def engine_name() -> str:
    return "numba" if _HAVE_NUMBA else "numpy"


def jit(func):
    """Compile ``func`` with numba when enabled, else return it unchanged.

    Compilation is cached on disk so repeated runs skip the warmup cost.
    """
    if _HAVE_NUMBA:
        return _njit(cache=True)(func)
    return func
