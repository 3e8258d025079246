"""Optional numba acceleration.

Set ``CVSA_DISABLE_NUMBA=1`` to force the pure-numpy kernels. The flag is read
once at import time.
"""
import os

DISABLE_ENV = "CVSA_DISABLE_NUMBA"

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

NUMBA_ENABLED = numba is not None and os.environ.get(DISABLE_ENV, "0") not in ("1", "true", "yes")


def njit(fn):
    """Compile ``fn`` with numba when available, otherwise return it unchanged."""
    if numba is None:  # pragma: no cover
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
