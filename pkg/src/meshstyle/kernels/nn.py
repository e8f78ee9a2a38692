"""Exact nearest-neighbour scans.

Both backends walk the reference set in index order and only replace the
current best on a strictly smaller distance, so ties resolve to the lowest
reference index and the two paths agree bit for bit.
"""
import numpy as np

from .. import _accel
from .._accel import njit, prange

METRIC_L1 = 0
METRIC_L2 = 1

_METRICS = {"l1": METRIC_L1, "cityblock": METRIC_L1, "l2": METRIC_L2, "euclidean": METRIC_L2}

# query rows per numpy block; bounds the (block, m, 3) temporary
_BLOCK = 256


def metric_code(metric):
    if isinstance(metric, (int, np.integer)):
        return int(metric)
    try:
        return _METRICS[metric.lower()]
    except KeyError:
        raise ValueError(f"unknown metric {metric!r}") from None


@njit(parallel=True, cache=True)
def _nearest_numba(query, ref, metric):
    n = query.shape[0]
    m = ref.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    for i in prange(n):
        qx = query[i, 0]
        qy = query[i, 1]
        qz = query[i, 2]
        best = np.inf
        besti = 0
        for j in range(m):
            dx = qx - ref[j, 0]
            dy = qy - ref[j, 1]
            dz = qz - ref[j, 2]
            if metric == 0:
                d = abs(dx) + abs(dy) + abs(dz)
            else:
                d = dx * dx + dy * dy + dz * dz
            if d < best:
                best = d
                besti = j
        idx[i] = besti
        if metric == 0:
            dist[i] = best
        else:
            dist[i] = np.sqrt(best)
    return idx, dist


def _nearest_numpy(query, ref, metric):
    n = query.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    for start in range(0, n, _BLOCK):
        q = query[start:start + _BLOCK]
        diff = q[:, None, :] - ref[None, :, :]
        if metric == METRIC_L1:
            np.abs(diff, out=diff)
            d = diff[..., 0] + diff[..., 1] + diff[..., 2]
        else:
            diff *= diff
            d = diff[..., 0] + diff[..., 1] + diff[..., 2]
        # argmin returns the first minimum, i.e. the lowest reference index
        j = np.argmin(d, axis=1)
        idx[start:start + _BLOCK] = j
        best = d[np.arange(len(q)), j]
        dist[start:start + _BLOCK] = best if metric == METRIC_L1 else np.sqrt(best)
    return idx, dist


def nearest(query, ref, metric="l2", backend=None):
    """Index and distance of the nearest ``ref`` row for every ``query`` row."""
    query = np.ascontiguousarray(query, dtype=np.float64).reshape(-1, 3)
    ref = np.ascontiguousarray(ref, dtype=np.float64).reshape(-1, 3)
    if len(ref) == 0:
        raise ValueError("reference set is empty")
    code = metric_code(metric)
    if len(query) == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    if backend is None:
        backend = _accel.backend_name()
    if backend == "numba":
        return _nearest_numba(query, ref, code)
    return _nearest_numpy(query, ref, code)
