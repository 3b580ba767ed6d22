"""NumPy/SciPy fallback for the compiled kernels in ``_kernels.pyx``.

Same signatures and the same results; used when the extension is not built
or when ``ARTICAP_PURE_PYTHON=1``.
"""
import numpy as np
from scipy.spatial import cKDTree


def nearest_distances(source, target, d_max):
    dist, _ = cKDTree(target).query(source, k=1, distance_upper_bound=d_max)
    # misses come back as inf
    return np.minimum(dist, d_max)


def farthest_point_sampling(points, k, start):
    n = len(points)
    sel = np.empty(k, dtype=np.int64)
    if k == 0:
        return sel
    mind = np.full(n, np.inf)
    cur = start
    sel[0] = cur
    mind[cur] = -1.0
    for s in range(1, k):
        diff = points - points[cur]
        d2 = (diff * diff).sum(axis=1)
        np.minimum(mind, d2, out=mind, where=mind >= 0)
        cur = int(np.argmax(mind))
        sel[s] = cur
        mind[cur] = -1.0
    return sel
