"""JIT switch.

Kernels are compiled with numba when it is importable and ``NASHNET_JIT`` is
not set to ``0``; otherwise the pure-numpy implementations are used.
"""
from __future__ import annotations

import os

_flag = os.environ.get("NASHNET_JIT", "1").strip().lower()
_wanted = _flag not in ("0", "false", "no", "off")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
HAVE_NUMBA = numba is not None

USE_JIT = _wanted and HAVE_NUMBA


def njit(*args, **kwargs):
    """``numba.njit`` that degrades to the identity decorator."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f
