"""Backend selection for the hot numeric kernels.

By default every kernel in :mod:`buckcert.kernels` is compiled with numba's
``@njit``.  Setting the environment variable ``BUCKCERT_DISABLE_NUMBA=1``
(before import) runs the same functions interpreted and switches the grid
propagation to a vectorised pure-numpy implementation.  Results agree between
the two paths to floating-point roundoff; only speed differs.  See
``benchmarks/bench_backends.py`` for a comparison.
"""

import os

DISABLE_ENV = "BUCKCERT_DISABLE_NUMBA"


def _detect():
    if os.environ.get(DISABLE_ENV, "").strip() in ("1", "true", "yes"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


NUMBA_ENABLED = _detect()


def backend_name():
    return "numba" if NUMBA_ENABLED else "numpy"


if NUMBA_ENABLED:
    from numba import njit as _njit

    def maybe_njit(func):
        return _njit(cache=True)(func)
else:
    def maybe_njit(func):
        return func
