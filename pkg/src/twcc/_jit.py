"""Optional numba acceleration.

The hot kernels are written once as plain numpy/scalar Python and wrapped
with :func:`jit`.  Setting ``TWCC_DISABLE_NUMBA=1`` in the environment (or
running without numba installed) leaves them as ordinary Python functions.
"""
import os

USE_NUMBA = os.environ.get("TWCC_DISABLE_NUMBA", "0").lower() not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if USE_NUMBA:

    def jit(fn):
        return _njit(cache=True, fastmath=False)(fn)

else:

    def jit(fn):
        return fn
