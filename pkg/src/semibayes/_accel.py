"""Selects between numba-compiled kernels and their pure-numpy fallbacks.

Set ``SEMIBAYES_DISABLE_NUMBA=1`` before import to force the numpy path.
"""

import os
from typing import Any, Callable

_DISABLED = os.environ.get("SEMIBAYES_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(*args: Any, **kwargs: Any) -> Callable:
    """``numba.njit`` when available, identity decorator otherwise."""
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return _njit(*args, **kwargs)


def select(numba_impl: Callable, numpy_impl: Callable) -> Callable:
    return numba_impl if USE_NUMBA else numpy_impl
