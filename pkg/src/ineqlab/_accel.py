"""Backend selection for the hot kernels.

The integrator kernels in :mod:`ineqlab._kernels` are written once in plain
numpy-compatible Python and compiled with numba when available.  The pure
path is selected with the ``INEQLAB_NUMBA`` environment variable:

    INEQLAB_NUMBA=0      force the pure Python/numpy fallback
    INEQLAB_NUMBA=1      require numba (ImportError if missing)
    unset / "auto"       use numba when importable, fall back otherwise

The flag is read once at import time; benchmarks that want to compare the
two paths should launch subprocesses with the variable set.
"""

import os

_FALSE_VALUES = ("0", "false", "off", "no")
_TRUE_VALUES = ("1", "true", "on", "yes")


def _resolve_backend() -> bool:
    flag = os.environ.get("INEQLAB_NUMBA", "auto").strip().lower()
    if flag in _FALSE_VALUES:
        return False
    if flag in _TRUE_VALUES:
        import numba  # noqa: F401  -- fail loudly if explicitly requested

        return True
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = _resolve_backend()

if USE_NUMBA:
    from numba import njit
else:

    def njit(*args, **kwargs):
        """No-op stand-in for numba.njit on the pure-numpy path."""
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
