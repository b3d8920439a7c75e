"""Numba acceleration shim.

Hot kernels are compiled with numba when it is importable and the
``EVFLOW_DISABLE_NUMBA`` environment flag is unset. Otherwise the same
functions run as plain Python over numpy arrays (correct, much slower).
The uncompiled originals stay reachable either way so the benchmark can
compare both backends in one process.
"""

from __future__ import annotations

import os

DISABLE_FLAG = "EVFLOW_DISABLE_NUMBA"

_disabled = os.environ.get(DISABLE_FLAG, "").strip().lower() not in ("", "0", "false")

try:
    if _disabled:
        raise ImportError("numba disabled via " + DISABLE_FLAG)
    from numba import njit as _njit

    NUMBA_AVAILABLE = True
except ImportError:
    _njit = None
    NUMBA_AVAILABLE = False


def jit(func):
    """Compile ``func`` with numba when enabled, else return it unchanged."""
    if NUMBA_AVAILABLE:
        return _njit(cache=True)(func)
    return func


def backend_name() -> str:
    return "numba" if NUMBA_AVAILABLE else "python"
