"""Numba switch.

Set ``LEUKOSEG_JIT=0`` to run every kernel through its pure-numpy/Python
fallback. The flag is read once at import time.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

JIT_ENABLED = numba is not None and os.environ.get("LEUKOSEG_JIT", "1").lower() not in (
    "0",
    "false",
    "no",
    "off",
)


def njit(func):
    """Compile ``func`` with numba in nopython mode when available."""
    if numba is None:
        return func
    return numba.njit(cache=True)(func)
