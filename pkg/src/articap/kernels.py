"""Backend selection for the hot loops.

The compiled extension is preferred; the NumPy/SciPy fallback is used when it is
missing or when the environment variable ``ARTICAP_PURE_PYTHON`` is set to a
non-empty value other than ``0``.
"""
import os

import numpy as np

from . import _kernels_py

_compiled = None
if os.environ.get("ARTICAP_PURE_PYTHON", "0") in ("", "0"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

DEFAULT_BACKEND = "compiled" if _compiled is not None else "python"


def _get(backend):
    name = backend or DEFAULT_BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}; have {sorted(BACKENDS)}") from None


def nearest_distances(source, target, d_max, backend=None):
    """Clamped distance from each source point to the nearest target point."""
    source = np.ascontiguousarray(source, dtype=np.float64)
    target = np.ascontiguousarray(target, dtype=np.float64)
    return _get(backend).nearest_distances(source, target, float(d_max))


def farthest_point_sampling(points, k, start, backend=None):
    points = np.ascontiguousarray(points, dtype=np.float64)
    return _get(backend).farthest_point_sampling(points, int(k), int(start))
