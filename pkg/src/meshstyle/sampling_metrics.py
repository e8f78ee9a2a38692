"""Surface sampling, exact nearest-neighbour queries and point-set distances.

Distances between point sets use the coordinate-wise L1 norm
``|dx| + |dy| + |dz|`` for Chamfer-type terms and the Euclidean norm for the
F-score. Means are reduced with ``math.fsum`` so values do not depend on
summation order.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from .kernels import METRIC_L1, METRIC_L2, nearest

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LabeledPointSet:
    points: np.ndarray
    labels: np.ndarray
    source_face: np.ndarray
    part_names: tuple

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        src = np.asarray(self.source_face, dtype=np.int64).reshape(-1)
        if not len(pts) == len(labels) == len(src):
            raise ValueError("points, labels and source_face must have equal lengths")
        if len(labels) and (labels.min() < 0 or labels.max() >= len(self.part_names)):
            raise ValueError("point label out of range for the part alphabet")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "source_face", src)
        object.__setattr__(self, "part_names", tuple(self.part_names))

    def __len__(self):
        return len(self.points)

    @property
    def part_count(self):
        return len(self.part_names)

    def part_indices(self, i):
        return np.flatnonzero(self.labels == i)

    def with_points(self, points):
        return LabeledPointSet(points, self.labels, self.source_face, self.part_names)


class NnIndex:
    """Exact nearest-neighbour lookup over a point set, with per-part sub-indices.

    Queries scan the indexed points exhaustively; ties go to the lowest index.
    """

    def __init__(self, points, labels=None):
        self.points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        if len(self.points) == 0:
            raise ValueError("cannot index an empty point set")
        self.labels = None if labels is None else np.asarray(labels, dtype=np.int64)
        self._parts = {}

    def __len__(self):
        return len(self.points)

    def query(self, q, metric="l2"):
        """Return ``(index, distance)`` of the nearest indexed point for each query row."""
        return nearest(q, self.points, metric)

    def part(self, i):
        """Sub-index over points labelled ``i``; its ``global_index`` maps back."""
        if self.labels is None:
            raise ValueError("index was built without labels")
        if i not in self._parts:
            sel = np.flatnonzero(self.labels == i)
            sub = NnIndex(self.points[sel]) if len(sel) else None
            if sub is not None:
                sub.global_index = sel
            self._parts[i] = sub
        return self._parts[i]


def _as_points(p):
    if isinstance(p, LabeledPointSet):
        return p.points
    return np.asarray(p, dtype=np.float64).reshape(-1, 3)


def exact_mean(values):
    """Correctly rounded mean; ``inf`` when the sum overflows."""
    try:
        return math.fsum(values.tolist()) / len(values)
    except OverflowError:
        return math.inf


# --- sampling -------------------------------------------------------------


def sample_surface(mesh, labels, n, seed=0):
    """Draw ``n`` area-weighted points on the mesh surface, labelled by face part."""
    if n < 1:
        raise ValueError("sample count must be >= 1")
    if mesh.face_count == 0:
        raise ValueError("mesh has no faces")
    if len(labels.face_part) != mesh.face_count:
        raise ValueError("labelling does not match the mesh face count")
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas()
    cum = np.cumsum(areas)
    u = rng.random(n) * cum[-1]
    face = np.minimum(np.searchsorted(cum, u, side="right"), mesh.face_count - 1)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    b0 = 1.0 - r1
    b1 = r1 * (1.0 - r2)
    b2 = r1 * r2
    tri = mesh.vertices[mesh.faces[face]]
    pts = b0[:, None] * tri[:, 0] + b1[:, None] * tri[:, 1] + b2[:, None] * tri[:, 2]
    return LabeledPointSet(pts, labels.face_part[face], face, labels.part_names)


# --- Chamfer ----------------------------------------------------------------


@dataclass
class ChamferPairing:
    """Both directed nearest-neighbour matchings between two sets under L1."""

    idx_ab: np.ndarray
    dist_ab: np.ndarray
    idx_ba: np.ndarray
    dist_ba: np.ndarray

    @property
    def value(self):
        return 0.5 * (exact_mean(self.dist_ab) + exact_mean(self.dist_ba))


def chamfer_pairing(a, b):
    a = _as_points(a)
    b = _as_points(b)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("Chamfer distance of an empty point set")
    idx_ab, dist_ab = nearest(a, b, METRIC_L1)
    idx_ba, dist_ba = nearest(b, a, METRIC_L1)
    return ChamferPairing(idx_ab, dist_ab, idx_ba, dist_ba)


def chamfer_l1(p, q):
    """Symmetric averaged L1 Chamfer distance."""
    return chamfer_pairing(p, q).value


def _check_alphabets(p, q):
    if tuple(p.part_names) != tuple(q.part_names):
        raise ValueError(f"part alphabets differ: {p.part_names} vs {q.part_names}")


def one_sided_penalty(present, other):
    """Mean L1 distance from a part that exists on one side only to the whole other set."""
    _, d = nearest(present, other, METRIC_L1)
    return exact_mean(d)


def part_distance(p, q, empty_part_weight=1.0):
    """Global L1 Chamfer plus the per-part Chamfer sum.

    A part present on one side only contributes ``empty_part_weight`` times
    the mean distance from its points to the full opposite set.
    """
    _check_alphabets(p, q)
    total = chamfer_l1(p.points, q.points)
    for i in range(p.part_count):
        pi = p.points[p.labels == i]
        qi = q.points[q.labels == i]
        if len(pi) and len(qi):
            total += chamfer_l1(pi, qi)
        elif len(pi):
            total += empty_part_weight * one_sided_penalty(pi, q.points)
        elif len(qi):
            total += empty_part_weight * one_sided_penalty(qi, p.points)
    return total


# --- symmetry -----------------------------------------------------------------


@dataclass(frozen=True)
class Plane:
    normal: tuple
    offset: float

    def householder(self):
        n = np.asarray(self.normal, dtype=np.float64)
        return np.eye(3) - 2.0 * np.outer(n, n), 2.0 * self.offset * n

    def reflect(self, points):
        pts = _as_points(points)
        n0, n1, n2 = self.normal
        s = pts[:, 0] * n0 + pts[:, 1] * n1 + pts[:, 2] * n2 - self.offset
        return pts - (2.0 * s)[:, None] * np.array([n0, n1, n2])


def make_plane(normal, offset=0.0):
    n = np.asarray(normal, dtype=np.float64).reshape(3)
    norm = float(np.linalg.norm(n))
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("plane normal must be non-zero")
    if abs(norm - 1.0) > 1e-12:
        log.warning("plane normal %s is not unit length; normalizing", n.tolist())
        n = n / norm
        offset = offset / norm
    return Plane(tuple(float(x) for x in n), float(offset))


def parse_plane(value):
    """``"x=0"``, ``"y=0.5"``, ``"nx,ny,nz,d"`` or ``"none"`` (returns None)."""
    if value is None:
        return None
    if isinstance(value, Plane):
        return value
    text = str(value).strip().lower()
    if text in ("", "none", "off"):
        return None
    if "=" in text:
        axis, offset = (s.strip() for s in text.split("=", 1))
        if axis not in ("x", "y", "z"):
            raise ValueError(f"bad symmetry plane {value!r}")
        n = np.zeros(3)
        n["xyz".index(axis)] = 1.0
        return make_plane(n, float(offset))
    parts = [float(s) for s in text.replace(" ", "").split(",")]
    if len(parts) != 4:
        raise ValueError(f"bad symmetry plane {value!r}")
    return make_plane(parts[:3], parts[3])


def symmetry_distance(p, plane):
    """L1 Chamfer between a point set and its mirror image."""
    plane = parse_plane(plane) if not isinstance(plane, Plane) else plane
    pts = _as_points(p)
    return chamfer_l1(pts, plane.reflect(pts))


# --- F-score ---------------------------------------------------------------


def f_score(p, q, tau):
    """Harmonic mean of precision and recall at Euclidean threshold ``tau``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    p = _as_points(p)
    q = _as_points(q)
    if len(p) == 0 or len(q) == 0:
        raise ValueError("F-score of an empty point set")
    _, d_pq = nearest(p, q, METRIC_L2)
    _, d_qp = nearest(q, p, METRIC_L2)
    precision = np.count_nonzero(d_pq <= tau) / len(p)
    recall = np.count_nonzero(d_qp <= tau) / len(q)
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def chamfer_l2(p, q):
    """Symmetric mean squared Euclidean Chamfer distance (reporting only)."""
    p = _as_points(p)
    q = _as_points(q)
    _, d_pq = nearest(p, q, METRIC_L2)
    _, d_qp = nearest(q, p, METRIC_L2)
    return 0.5 * (exact_mean(d_pq * d_pq) + exact_mean(d_qp * d_qp))


def bbox_diagonal(points):
    pts = _as_points(points)
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def metrics_report(pred, gt, tau_fraction=0.01, tau=None):
    """Chamfer (squared Euclidean), Chamfer-L1 and F-score of ``pred`` against ``gt``."""
    if tau is None:
        tau = tau_fraction * bbox_diagonal(gt)
        if tau <= 0:
            raise ValueError("ground truth has zero extent; pass an explicit tau")
    return {
        "chamfer": chamfer_l2(pred, gt),
        "chamfer_l1": chamfer_l1(pred, gt),
        "f_score": f_score(pred, gt, tau),
        "tau": float(tau),
    }
