"""JIT selection.

Set ``MARKERHMM_DISABLE_NUMBA=1`` to route every kernel through its pure-numpy
implementation. Numba is also skipped silently if it cannot be imported.
"""

import os

_FLAG = os.getenv("MARKERHMM_DISABLE_NUMBA", "").strip().lower()
NUMBA_REQUESTED = _FLAG not in ("1", "true", "yes", "on")

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

USE_NUMBA = NUMBA_REQUESTED and HAS_NUMBA

NUMBA_OPTS = {"cache": True, "nogil": True}


def njit(func):
    """Compile ``func`` in nopython mode, or return it unchanged without numba."""
    if not HAS_NUMBA:
        return func
    return numba.njit(**NUMBA_OPTS)(func)
