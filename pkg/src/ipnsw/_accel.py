"""Kernel backend selection.

The hot loops (graph walk, insertion build) exist twice: a numba ``@njit``
version and a pure numpy/Python version with the same signatures and the
same results. ``IPNSW_BACKEND=numpy`` forces the fallback; otherwise numba
is used when importable.
"""

import os
import types

BACKENDS = ("numba", "numpy")


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def default_backend() -> str:
    name = os.environ.get("IPNSW_BACKEND", "").strip().lower()
    if name in BACKENDS:
        if name == "numba" and not _numba_available():
            raise RuntimeError("IPNSW_BACKEND=numba but numba is not installed")
        return name
    if name:
        raise ValueError(f"unknown IPNSW_BACKEND {name!r}; expected one of {BACKENDS}")
    return "numba" if _numba_available() else "numpy"


def get_kernels(backend: str | None = None) -> types.ModuleType:
    """Return the kernel module for ``backend`` (default from the environment)."""
    backend = backend or default_backend()
    if backend == "numba":
        from . import _kernels_numba as mod
    elif backend == "numpy":
        from . import _kernels_numpy as mod
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return mod
