"""Backend selection for the hot kernels.

``EGOCTL_BACKEND=numpy`` forces the pure-numpy path even when numba is
importable; ``EGOCTL_BACKEND=numba`` (the default) uses the compiled kernels
when available. ``EGOCTL_THREADS`` caps numba's thread pool.
"""

from __future__ import annotations

import os

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    NUMBA_AVAILABLE = False

_requested = os.environ.get("EGOCTL_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"EGOCTL_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

BACKEND = "numba" if (_requested == "numba" and NUMBA_AVAILABLE) else "numpy"

if NUMBA_AVAILABLE and os.environ.get("EGOCTL_THREADS"):
    numba.set_num_threads(max(1, min(int(os.environ["EGOCTL_THREADS"]), numba.config.NUMBA_NUM_THREADS)))


def njit(func):
    """Compile ``func`` with numba when possible, else return it unchanged."""
    if not NUMBA_AVAILABLE:
        return func
    return numba.njit(cache=True, fastmath=False)(func)


def set_backend(name: str) -> str:
    """Switch backend at runtime; returns the previous one."""
    global BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not installed")
    prev, BACKEND = BACKEND, name
    return prev
