"""Hot-kernel backends: compiled extension when built, NumPy otherwise.

The default backend is chosen at import time: the compiled extension if the
build produced it, else the NumPy fallback. The ``SPARSELOC_KERNELS``
environment variable (``auto`` | ``compiled`` | ``numpy``) overrides the
default, and :func:`use` switches backends at runtime (benchmarks and tests
rely on this).
"""

import os

import numpy as np

from . import numpy_backend

try:
    from . import _conv as _compiled
except ImportError:
    _compiled = None

_BACKENDS = {"numpy": numpy_backend}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_active = numpy_backend


def available() -> list[str]:
    """Names of the backends importable in this environment."""
    return sorted(_BACKENDS)


def use(name: str) -> str:
    """Select the active backend; ``auto`` prefers the compiled one."""
    global _active
    if name == "auto":
        name = "compiled" if "compiled" in _BACKENDS else "numpy"
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; available: {available()}")
    _active = _BACKENDS[name]
    return name


def active_name() -> str:
    return "compiled" if _active is _compiled and _compiled is not None else "numpy"


def convolve_sep2d(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    taps = np.ascontiguousarray(taps, dtype=np.float64)
    return _active.convolve_sep2d(x, taps)


def block_sum(x: np.ndarray, factor: int) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _active.block_sum(x, int(factor))


def block_expand(d: np.ndarray, factor: int) -> np.ndarray:
    d = np.ascontiguousarray(d, dtype=np.float64)
    return _active.block_expand(d, int(factor))


use(os.environ.get("SPARSELOC_KERNELS", "auto"))
