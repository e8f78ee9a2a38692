"""Independent brute-force references used by the tests.

Everything here is written from the definitions with plain loops or dense
pairwise matrices; none of it calls into the package's distance code.
"""
import math

import numpy as np
from scipy.spatial.distance import cdist


def nn_bruteforce(a, b, metric):
    """Nearest index (lowest on ties) and distance for each row of ``a``."""
    d = cdist(a, b, "cityblock" if metric == "l1" else "euclidean")
    idx = np.argmin(d, axis=1)  # argmin returns the first minimum
    return idx, d[np.arange(len(a)), idx]


def l1_scan(a, b):
    """Per-row min coordinate-wise L1 distance from ``a`` to ``b`` by explicit loops."""
    out = []
    for p in a:
        best = math.inf
        for q in b:
            v = abs(p[0] - q[0]) + abs(p[1] - q[1]) + abs(p[2] - q[2])
            if v < best:
                best = v
        out.append(best)
    return out


def chamfer_l1_ref(a, b):
    return 0.5 * (math.fsum(l1_scan(a, b)) / len(a) + math.fsum(l1_scan(b, a)) / len(b))


def part_distance_ref(pa, la, pb, lb, n_parts, empty_weight=1.0):
    total = chamfer_l1_ref(pa, pb)
    for i in range(n_parts):
        ai, bi = pa[la == i], pb[lb == i]
        if len(ai) and len(bi):
            total += chamfer_l1_ref(ai, bi)
        elif len(ai):
            total += empty_weight * math.fsum(l1_scan(ai, pb)) / len(ai)
        elif len(bi):
            total += empty_weight * math.fsum(l1_scan(bi, pa)) / len(bi)
    return total


def reflect_ref(points, normal, offset):
    n = np.asarray(normal, dtype=np.float64)
    out = np.empty_like(points)
    for k, p in enumerate(points):
        s = p[0] * n[0] + p[1] * n[1] + p[2] * n[2] - offset
        out[k] = p - 2.0 * s * n
    return out


def f_score_ref(a, b, tau):
    hits_a = sum(1 for p in a if min(math.dist(p, q) for q in b) <= tau)
    hits_b = sum(1 for q in b if min(math.dist(q, p) for p in a) <= tau)
    precision = hits_a / len(a)
    recall = hits_b / len(b)
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def blur_ref(img):
    """5x5 Gaussian (sigma 1) by direct summation with edge replication."""
    x = np.arange(-2, 3)
    k1 = np.exp(-0.5 * x * x)
    k1 /= k1.sum()
    k2 = np.outer(k1, k1)
    h, w = img.shape[:2]
    pad = np.pad(img, [(2, 2), (2, 2)] + [(0, 0)] * (img.ndim - 2), mode="edge")
    out = np.zeros_like(img, dtype=np.float64)
    for dy in range(5):
        for dx in range(5):
            out += k2[dy, dx] * pad[dy:dy + h, dx:dx + w]
    return out


def masked_moments_ref(img, mask):
    """Two-pass mean and population covariance of the masked pixels."""
    sel = [img[y, x] for y in range(img.shape[0]) for x in range(img.shape[1]) if mask[y, x]]
    sel = np.array(sel)
    mean = np.array([math.fsum(sel[:, c]) / len(sel) for c in range(3)])
    d = sel - mean
    cov = np.array([[math.fsum(d[:, i] * d[:, j]) / len(sel) for j in range(3)] for i in range(3)])
    return mean, cov


def central_difference(f, x, h=1e-5):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + h
        fp = f(x)
        flat[k] = old - h
        fm = f(x)
        flat[k] = old
        gf[k] = (fp - fm) / (2.0 * h)
    return g


def masked_blur_ref(img, mask):
    m = mask.astype(np.float64)
    den = blur_ref(m)
    num = blur_ref(img * (m[..., None] if img.ndim == 3 else m))
    out = np.zeros_like(num)
    for y in range(img.shape[0]):
        for x in range(img.shape[1]):
            if den[y, x] > 0:
                out[y, x] = num[y, x] / den[y, x]
    return out


def pyramid_ref(img, mask, levels):
    """Reference masked pyramid: per level mean/covariance from explicit loops."""
    out = [masked_moments_ref(img, mask)]
    for _ in range(1, levels):
        img = masked_blur_ref(img, mask)[::2, ::2]
        mask = blur_ref(mask.astype(np.float64))[::2, ::2] >= 0.5
        if mask.sum() < 4:
            break
        out.append(masked_moments_ref(img, mask))
    return out
