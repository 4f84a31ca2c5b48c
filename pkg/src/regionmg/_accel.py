"""Numba switch.

Hot kernels are compiled with numba unless ``REGIONMG_DISABLE_NUMBA=1`` is set
(or numba cannot be imported); the vectorised numpy versions in
:mod:`regionmg.kernels` are dispatched instead. Both variants stay importable
so they can be benchmarked against each other in one process.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

HAVE_NUMBA = numba is not None
DISABLED = os.environ.get("REGIONMG_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")
USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(func):
    """``numba.njit`` with the package defaults, or identity without numba.

    Compilation is lazy, so disabled kernels never cost a compile.
    """
    if numba is None:  # pragma: no cover
        return func
    return numba.njit(cache=True, nogil=True)(func)
