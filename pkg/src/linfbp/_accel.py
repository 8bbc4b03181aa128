"""Backend selection for the hot pixel/view loops.

Every kernel in :mod:`linfbp._kernels` exists twice: a loop version compiled
with ``numba.njit`` and a vectorized numpy version. Set ``LINFBP_BACKEND=numpy``
(or ``LINFBP_NO_NUMBA=1``) before import to force the numpy path; numba is
used otherwise when importable.
"""

import os

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False


def _numba_requested() -> bool:
    if os.environ.get("LINFBP_NO_NUMBA", "").lower() in ("1", "true", "yes"):
        return False
    return os.environ.get("LINFBP_BACKEND", "numba").lower() != "numpy"


USE_NUMBA = NUMBA_AVAILABLE and _numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(fn):
    """Compile ``fn`` with numba when available; identity otherwise."""
    if not NUMBA_AVAILABLE:
        return fn
    return numba.njit(cache=True, nogil=True, error_model="numpy")(fn)
