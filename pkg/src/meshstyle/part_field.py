"""Per-part ellipsoids and the Gaussian blend field they induce.

An ellipsoid maps the unit sphere through ``u -> center + rotation @ (semi_axes * u)``;
the columns of ``rotation`` are its principal axes. Its blend Gaussian has
covariance ``lam * R S^2 R^T``.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .kernels import METRIC_L1, nearest
from .sampling_metrics import LabeledPointSet

AXIS_FLOOR_FRACTION = 1e-4
AXIS_FLOOR_ABS = 1e-9
UNDERFLOW = 1e-30
_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    center: np.ndarray
    rotation: np.ndarray
    semi_axes: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(3)
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        s = np.asarray(self.semi_axes, dtype=np.float64).reshape(3)
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise ValueError(f"semi-axes must be positive, got {s}")
        for name, a in (("center", c), ("rotation", r), ("semi_axes", s)):
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    def covariance(self, lam=1.0):
        rs = self.rotation * self.semi_axes
        return lam * rs @ rs.T

    def local(self, points):
        """Coordinates in the unit-sphere frame."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return ((p - self.center) @ self.rotation) / self.semi_axes

    def to_dict(self):
        return {
            "center": self.center.tolist(),
            "rotation": self.rotation.tolist(),
            "semi_axes": self.semi_axes.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["center"], d["rotation"], d["semi_axes"])


def _canonical_axes(vecs):
    """Flip each of the first two axes so its first non-negligible entry is positive,
    then complete a right-handed frame."""
    out = np.array(vecs, dtype=np.float64)
    for k in range(2):
        col = out[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if len(nz) and col[nz[0]] < 0:
            out[:, k] = -col
    out[:, 2] = np.cross(out[:, 0], out[:, 1])
    return out


def fit_ellipsoid(points):
    """Moment-matched ellipsoid: mean centre, covariance principal axes, sqrt(5*var) radii."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 1:
        raise ValueError("cannot fit an ellipsoid to zero points")
    center = pts.mean(axis=0)
    d = pts - center
    cov = d.T @ d / len(pts)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    rot = _canonical_axes(evecs[:, order])
    diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    floor = max(AXIS_FLOOR_FRACTION * diag, AXIS_FLOOR_ABS)
    axes = np.maximum(np.sqrt(5.0 * evals), floor)
    return Ellipsoid(center, rot, axes)


def fit_part_ellipsoids(points):
    """One ellipsoid per part of a LabeledPointSet; None for parts with no points."""
    return [fit_ellipsoid(points.points[points.labels == i]) if np.any(points.labels == i) else None
            for i in range(points.part_count)]


def mahalanobis_sq(points, e, lam=4.0):
    loc = e.local(points)
    return np.einsum("ij,ij->i", loc, loc) / lam


def gaussian_weight(p, e, lam=4.0):
    """Unnormalised aligned Gaussian ``exp(-0.5 * (p-T)^T Sigma^-1 (p-T))``."""
    p = np.asarray(p, dtype=np.float64)
    w = np.exp(-0.5 * mahalanobis_sq(p, e, lam))
    return float(w[0]) if p.ndim == 1 else w


def blend_weights(points, ells, lam=4.0):
    """Normalised blend field, shape ``(n, len(ells))``.

    Points where every Gaussian underflows get weight 1 on the ellipsoid with
    the smallest Mahalanobis distance (shared equally on exact ties).
    ``None`` entries receive weight 0.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    active = [i for i, e in enumerate(ells) if e is not None]
    if not active:
        raise ValueError("need at least one ellipsoid")
    d2 = np.full((len(pts), len(ells)), np.inf)
    for i in active:
        d2[:, i] = mahalanobis_sq(pts, ells[i], lam)
    g = np.exp(-0.5 * d2)
    total = g.sum(axis=1)
    w = np.zeros_like(g)
    ok = total >= UNDERFLOW
    w[ok] = g[ok] / total[ok, None]
    if not ok.all():
        d2_bad = d2[~ok]
        tied = d2_bad == d2_bad.min(axis=1, keepdims=True)
        w[~ok] = tied / tied.sum(axis=1, keepdims=True)
    return w


def unit_sphere_lattice(m):
    """Spherical Fibonacci lattice of ``m`` unit vectors."""
    k = np.arange(m, dtype=np.float64)
    z = 1.0 - (2.0 * k + 1.0) / m
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = k * _GOLDEN_ANGLE
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def sample_ellipsoid_surface(e, m):
    if m < 1:
        raise ValueError("need at least one sample")
    u = unit_sphere_lattice(m)
    return e.center + (u * e.semi_axes) @ e.rotation.T


def ellipsoid_points(ells, m, part_names):
    """The labelled union of all ellipsoid surface samples (one block per part, in order)."""
    pts, labels = [], []
    for i, e in enumerate(ells):
        if e is None:
            continue
        pts.append(sample_ellipsoid_surface(e, m))
        labels.append(np.full(m, i))
    pts = np.concatenate(pts)
    labels = np.concatenate(labels)
    return LabeledPointSet(pts, labels, np.full(len(pts), -1), part_names)


# --- refinement --------------------------------------------------------------


def _fsum_mean(chunks, count):
    return math.fsum(x for c in chunks for x in c.tolist()) / count


class _EllipsoidFitLoss:
    """Part-aware L1 Chamfer between ellipsoid samples and the part point cloud,
    with per-part caches so changing one ellipsoid only rescans its own samples."""

    def __init__(self, ells, parts, m):
        self.parts = parts
        self.m = m
        self.pts = parts.points
        self.part_pts = [parts.points[parts.labels == i] for i in range(parts.part_count)]
        self.to_cloud = {}   # i -> L1 distances from ellipsoid i samples to the whole cloud
        self.from_cloud = {}  # i -> L1 distances from every cloud point to ellipsoid i samples
        self.part_term = {}
        self.ells = list(ells)
        for i, e in enumerate(self.ells):
            if e is not None:
                self._update(i, e)

    def _terms(self, i, e):
        x = sample_ellipsoid_surface(e, self.m)
        _, to_cloud = nearest(x, self.pts, METRIC_L1)
        _, from_cloud = nearest(self.pts, x, METRIC_L1)
        own = self.part_pts[i]
        if len(own):
            _, d1 = nearest(x, own, METRIC_L1)
            _, d2 = nearest(own, x, METRIC_L1)
            part = 0.5 * (math.fsum(d1.tolist()) / len(d1) + math.fsum(d2.tolist()) / len(d2))
        else:
            part = math.fsum(to_cloud.tolist()) / len(to_cloud)
        return to_cloud, from_cloud, part

    def _update(self, i, e, terms=None):
        self.ells[i] = e
        self.to_cloud[i], self.from_cloud[i], self.part_term[i] = terms or self._terms(i, e)

    def value(self, override=None):
        to_cloud = dict(self.to_cloud)
        from_cloud = dict(self.from_cloud)
        part_term = dict(self.part_term)
        if override is not None:
            i, (a, b, c) = override
            to_cloud[i], from_cloud[i], part_term[i] = a, b, c
        keys = sorted(to_cloud)
        n_x = sum(len(to_cloud[k]) for k in keys)
        first = _fsum_mean([to_cloud[k] for k in keys], n_x)
        nearest_any = np.min(np.stack([from_cloud[k] for k in keys]), axis=0)
        second = math.fsum(nearest_any.tolist()) / len(nearest_any)
        total = 0.5 * (first + second)
        for i in range(self.parts.part_count):
            if i in part_term:
                total += part_term[i]
            elif len(self.part_pts[i]):
                # cloud part with no ellipsoid: one-sided penalty against all samples
                _, d = nearest(self.part_pts[i], np.concatenate([self._samples(k) for k in keys]),
                               METRIC_L1)
                total += math.fsum(d.tolist()) / len(d)
        return total

    def _samples(self, k):
        return sample_ellipsoid_surface(self.ells[k], self.m)


def _perturb(e, coord, delta):
    center = e.center.copy()
    rot = e.rotation
    log_axes = np.log(e.semi_axes)
    if coord < 3:
        center[coord] += delta
    elif coord < 6:
        w = np.zeros(3)
        w[coord - 3] = delta
        rot = Rotation.from_rotvec(w).as_matrix() @ rot
        u, _, vt = np.linalg.svd(rot)
        rot = u @ vt
    else:
        log_axes[coord - 6] += delta
    return Ellipsoid(center, rot, np.exp(log_axes))


def ellipsoid_fit_loss(ells, parts, m=512):
    """Part-aware distance between the ellipsoid samples and the cloud (same value as
    ``part_distance(ellipsoid_points(ells, m), parts)``)."""
    return _EllipsoidFitLoss(ells, parts, m).value()


def refine_ellipsoids(ells, parts, iters, m=512, step=0.1, return_history=False):
    """Coordinate descent on centre, rotation (small-angle steps) and log radii.

    A move is kept only if it strictly lowers the part-aware Chamfer between
    the ellipsoid samples and the cloud, so the loss never increases.
    """
    ells = list(ells)
    if iters <= 0:
        return (ells, []) if return_history else ells
    loss = _EllipsoidFitLoss(ells, parts, m)
    current = loss.value()
    history = [current]
    steps = {}
    for i, e in enumerate(ells):
        if e is None:
            continue
        scale = float(np.max(e.semi_axes))
        steps[i] = np.array([step * scale] * 3 + [step] * 3 + [step] * 3)
    for _ in range(iters):
        for i in sorted(steps):
            for coord in range(9):
                accepted = False
                for sign in (1.0, -1.0):
                    cand = _perturb(loss.ells[i], coord, sign * steps[i][coord])
                    terms = loss._terms(i, cand)
                    value = loss.value((i, terms))
                    if value < current:
                        loss._update(i, cand, terms)
                        current = value
                        accepted = True
                        break
                if not accepted:
                    steps[i][coord] *= 0.5
        history.append(current)
    out = list(loss.ells)
    return (out, history) if return_history else out
