"""Kernel backend selection.

Hot inner loops (coordinate descent sweeps, quantile ADMM iterations) live in
two interchangeable modules: a numba ``@njit`` implementation and a pure-numpy
fallback with identical semantics.  Selection order:

* ``FCPEN_BACKEND=numpy`` or ``FCPEN_BACKEND=numba`` forces a backend;
* otherwise numba is used when importable, numpy as the fallback.

``benchmarks/bench_kernels.py`` compares the two on representative sizes.
"""

import os
import warnings

_ENV_VAR = "FCPEN_BACKEND"
_cache = {}


def backend_name():
    """The backend in effect ('numba' or 'numpy')."""
    return get_kernels().NAME


def get_kernels(name=None):
    """Return the kernel module for ``name`` (default: env var / autodetect)."""
    if name is None:
        name = os.environ.get(_ENV_VAR, "").strip().lower() or "auto"
    if name in _cache:
        return _cache[name]
    if name not in ("auto", "numba", "numpy"):
        raise ValueError(f"{_ENV_VAR} must be 'numba' or 'numpy', got {name!r}")
    if name == "numpy":
        from . import _kernels_numpy as mod
    elif name == "numba":
        from . import _kernels_numba as mod
    else:
        try:
            from . import _kernels_numba as mod
        except ImportError as exc:  # pragma: no cover - depends on env
            warnings.warn(f"numba backend unavailable ({exc}); using numpy fallback")
            from . import _kernels_numpy as mod
    _cache[name] = mod
    return mod
