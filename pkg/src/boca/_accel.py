"""Switch between numba-compiled kernels and the pure-numpy fallback.

Set ``BOCA_DISABLE_NUMBA=1`` in the environment (before importing
:mod:`boca`) to force the numpy path, e.g. for benchmarking or on
platforms without numba.
"""
import os

_disabled = os.environ.get("BOCA_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError("numba disabled by BOCA_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap


def backend():
    """Name of the active kernel backend: ``"numba"`` or ``"numpy"``."""
    return "numba" if HAVE_NUMBA else "numpy"
