"""Blend-skinned affine warp and direct minimisation of the part-aware geometric loss.

The warp moves a source point ``p`` to ``sum_i w_i(p) (M_i p + t_i)`` where the
weights come from the rest-pose blend field. Affines are optimised with Adam
on analytic gradients taken under frozen nearest-neighbour correspondences,
which are refreshed every few iterations.
"""
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalAbort
from .kernels import METRIC_L1, nearest
from .part_field import blend_weights, ellipsoid_points
from .sampling_metrics import exact_mean, parse_plane, part_distance, symmetry_distance

log = logging.getLogger(__name__)

CONVERGENCE_RTOL = 1e-5


@dataclass(frozen=True, eq=False)
class PartTransforms:
    linear: np.ndarray       # (N, 3, 3)
    translation: np.ndarray  # (N, 3)

    def __post_init__(self):
        lin = np.array(self.linear, dtype=np.float64).reshape(-1, 3, 3)
        tr = np.array(self.translation, dtype=np.float64).reshape(-1, 3)
        if len(lin) != len(tr):
            raise ValueError("linear and translation part counts differ")
        if not (np.all(np.isfinite(lin)) and np.all(np.isfinite(tr))):
            raise ValueError("transform entries must be finite")
        lin.flags.writeable = False
        tr.flags.writeable = False
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "translation", tr)

    @classmethod
    def identity(cls, n):
        return cls(np.tile(np.eye(3), (n, 1, 1)), np.zeros((n, 3)))

    @classmethod
    def from_params(cls, params):
        params = np.asarray(params, dtype=np.float64).reshape(-1, 12)
        return cls(params[:, :9].reshape(-1, 3, 3), params[:, 9:])

    def params(self):
        return np.concatenate([self.linear.reshape(-1, 9), self.translation], axis=1)

    def __len__(self):
        return len(self.linear)

    def to_dict(self):
        return {"linear": self.linear.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["linear"], d["translation"])


@dataclass
class OptimizerTrace:
    iterations: list = field(default_factory=list)
    best_iteration: int = -1
    best_loss: float = math.inf
    stopped: str = ""
    wall_time: float = 0.0

    @property
    def iteration_count(self):
        return len(self.iterations)

    def to_dict(self):
        return {"iterations": self.iterations, "best_iteration": self.best_iteration,
                "best_loss": self.best_loss, "stopped": self.stopped, "wall_time": self.wall_time}


@dataclass
class GeometricLoss:
    data: float           # part-aware distance from the warped source to the target
    ellipsoid: float      # part-aware distance from ellipsoid samples to the source
    sym_warp: float
    sym_ellipsoid: float
    alpha: float

    @property
    def total(self):
        return self.data + self.ellipsoid + self.alpha * (self.sym_warp + self.sym_ellipsoid)

    def to_dict(self):
        return {"data": self.data, "ellipsoid": self.ellipsoid, "sym_warp": self.sym_warp,
                "sym_ellipsoid": self.sym_ellipsoid, "total": self.total}


# --- warp -------------------------------------------------------------------


def warp_points(points, weights, transforms):
    """Blend the per-part affines at each point.

    Evaluated as ``p + sum_i w_i ((M_i - I) p + t_i)`` so identity transforms
    return the input bit for bit.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    w = np.asarray(weights, dtype=np.float64).reshape(len(p), -1)
    if w.shape[1] != len(transforms):
        raise ValueError("weights and transforms disagree on part count")
    delta = (transforms.linear - np.eye(3)).reshape(-1, 9)
    blended = (w @ delta).reshape(-1, 3, 3)
    moved = (blended * p[:, None, :]).sum(axis=2) + w @ transforms.translation
    return p + moved


def warp_mesh(mesh, ells, transforms, lam=4.0):
    w = blend_weights(mesh.vertices, ells, lam)
    return mesh.with_vertices(warp_points(mesh.vertices, w, transforms))


def geometric_loss(source, target, ells, transforms, cfg, weights=None):
    """Part-aware geometric loss with its term breakdown."""
    if weights is None:
        weights = blend_weights(source.points, ells, cfg.lam)
    warped = source.with_points(warp_points(source.points, weights, transforms))
    xi = ellipsoid_points(ells, cfg.ellipsoid_surface_samples, source.part_names)
    plane = parse_plane(cfg.symmetry_plane)
    data = part_distance(warped, target)
    ell = part_distance(xi, source)
    if plane is None:
        sym_w = sym_e = 0.0
    else:
        sym_w = symmetry_distance(warped.points, plane)
        sym_e = symmetry_distance(xi.points, plane)
    return GeometricLoss(data, ell, sym_w, sym_e, cfg.alpha)


# --- frozen-correspondence surrogate ---------------------------------------------


def _l1_rows(e):
    a = np.abs(e)
    return a[:, 0] + a[:, 1] + a[:, 2]


class FrozenCorrespondences:
    """Loss terms that depend on the warped points, with matchings fixed.

    Each directed Chamfer half is a group of index pairs reduced to a mean;
    groups are combined into terms exactly the way ``part_distance`` and
    ``symmetry_distance`` combine them, so at the points the matchings were
    built from the value equals the exact distances bit for bit.
    """

    def __init__(self, x, source, target, plane, alpha):
        self.target = target.points
        self.plane = plane
        self.alpha = alpha
        # groups: (x_index, target_index); terms: (factor, [group ids])
        self.groups = []
        self.terms = []
        labels_x = source.labels
        labels_q = target.labels

        def add_group(xi, qi):
            self.groups.append((xi, qi))
            return len(self.groups) - 1

        def add_chamfer(xi, qi):
            qi_x, _ = nearest(x[xi], self.target[qi], METRIC_L1)
            xi_q, _ = nearest(self.target[qi], x[xi], METRIC_L1)
            self.terms.append((0.5, [add_group(xi, qi[qi_x]), add_group(xi[xi_q], qi)]))

        all_x = np.arange(len(x))
        add_chamfer(all_x, np.arange(len(self.target)))
        for i in range(source.part_count):
            xi = np.flatnonzero(labels_x == i)
            qi = np.flatnonzero(labels_q == i)
            if len(xi) and len(qi):
                add_chamfer(xi, qi)
            elif len(xi):
                j, _ = nearest(x[xi], self.target, METRIC_L1)
                self.terms.append((1.0, [add_group(xi, j)]))
            elif len(qi):
                j, _ = nearest(self.target[qi], x, METRIC_L1)
                self.terms.append((1.0, [add_group(j, qi)]))

        self.sym_pairs = None
        if plane is not None:
            r = plane.reflect(x)
            j, _ = nearest(x, r, METRIC_L1)   # x_k -> nearest reflected r_j
            k, _ = nearest(r, x, METRIC_L1)   # r_j -> nearest x_k
            self.sym_pairs = ((all_x, j), (k, all_x))
            self.householder = plane.householder()

    def value_terms(self, x):
        data = 0.0
        for factor, ids in self.terms:
            means = [exact_mean(_l1_rows(x[xi] - self.target[qi])) for xi, qi in
                     (self.groups[g] for g in ids)]
            data += factor * (means[0] + means[1]) if len(means) == 2 else factor * means[0]
        sym = 0.0
        if self.sym_pairs is not None:
            r = self.plane.reflect(x)
            (a1, b1), (a2, b2) = self.sym_pairs
            sym = 0.5 * (exact_mean(_l1_rows(x[a1] - r[b1])) + exact_mean(_l1_rows(r[b2] - x[a2])))
        return data, sym

    def value(self, x):
        data, sym = self.value_terms(x)
        return data + self.alpha * sym

    def grad(self, x):
        """Gradient of ``data + alpha * sym`` with respect to the warped points."""
        g = np.zeros_like(x)
        for factor, ids in self.terms:
            for gid in ids:
                xi, qi = self.groups[gid]
                s = np.sign(x[xi] - self.target[qi])
                np.add.at(g, xi, (factor / len(xi)) * s)
        if self.sym_pairs is not None and self.alpha != 0.0:
            h, _ = self.householder
            r = self.plane.reflect(x)
            (a1, b1), (a2, b2) = self.sym_pairs
            w = self.alpha * 0.5 / len(x)
            # |x_a - r_b| with r_b = H x_b + c: x_a gets +s, x_b gets -H s
            s1 = np.sign(x[a1] - r[b1])
            np.add.at(g, a1, w * s1)
            np.add.at(g, b1, -w * (s1 @ h))
            # |r_b - x_a|: x_b gets +H s, x_a gets -s
            s2 = np.sign(r[b2] - x[a2])
            np.add.at(g, b2, w * (s2 @ h))
            np.add.at(g, a2, -w * s2)
        return g


def transform_gradient(points, weights, point_grad):
    """Chain the per-point gradient through the blended affine map.

    Returns an ``(N, 12)`` array laid out like ``PartTransforms.params``.
    """
    outer = (point_grad[:, :, None] * points[:, None, :]).reshape(-1, 9)
    return np.concatenate([weights.T @ outer, weights.T @ point_grad], axis=1)


class Adam:
    def __init__(self, shape, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params, grad, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)


class TransformSolver:
    """Holds the optimisation state for the per-part affines of one source/target pair."""

    def __init__(self, source, target, ells, cfg, init=None, lr=None, weights=None):
        if tuple(source.part_names) != tuple(target.part_names):
            raise ValueError("source and target part alphabets differ")
        self.source = source
        self.target = target
        self.ells = ells
        self.cfg = cfg
        self.plane = parse_plane(cfg.symmetry_plane)
        self.weights = blend_weights(source.points, ells, cfg.lam) if weights is None else weights
        n = len(ells)
        init = PartTransforms.identity(n) if init is None else init
        self.params = init.params().copy()
        self.adam = Adam(self.params.shape, lr=cfg.learning_rate if lr is None else lr)
        xi = ellipsoid_points(ells, cfg.ellipsoid_surface_samples, source.part_names)
        self.ellipsoid_term = part_distance(xi, source)
        self.sym_ellipsoid = 0.0 if self.plane is None else symmetry_distance(xi.points, self.plane)
        self.frozen = None

    @property
    def transforms(self):
        return PartTransforms.from_params(self.params)

    def warped(self, params=None):
        params = self.params if params is None else params
        return warp_points(self.source.points, self.weights, PartTransforms.from_params(params))

    def refresh(self):
        self.frozen = FrozenCorrespondences(self.warped(), self.source, self.target, self.plane,
                                            self.cfg.alpha)

    def loss(self, params=None):
        """Loss breakdown under the current (frozen) correspondences."""
        data, sym = self.frozen.value_terms(self.warped(params))
        return GeometricLoss(data, self.ellipsoid_term, sym, self.sym_ellipsoid, self.cfg.alpha)

    def gradient(self, params=None):
        params = self.params if params is None else params
        x = self.warped(params)
        return transform_gradient(self.source.points, self.weights, self.frozen.grad(x))

    def step(self, lr=None):
        self.params = self.adam.step(self.params, self.gradient(), lr)


def lr_schedule(base, it, total):
    """Halve the rate after every fifth of the iteration budget."""
    if total <= 0:
        return base
    return base * 0.5 ** min(4, (5 * it) // total)


def _check_finite(loss, trace):
    if not math.isfinite(loss.total):
        trace.stopped = "non-finite loss"
        raise NumericalAbort(f"non-finite geometric loss: {loss.to_dict()}", trace)


def optimize_transforms(source, target, ells, cfg, init=None, weights=None):
    """Fit per-part affines so the warped source matches the target.

    Returns ``(best PartTransforms, OptimizerTrace)``. Only iterations at which
    correspondences were refreshed carry exact loss values and are eligible
    as the returned iterate.
    """
    start = time.perf_counter()
    solver = TransformSolver(source, target, ells, cfg, init=init, weights=weights)
    trace = OptimizerTrace()
    best_params = solver.params.copy()
    prev_exact = None
    refresh = max(1, cfg.correspondence_refresh)
    it = 0
    while True:
        exact = it % refresh == 0 or it == cfg.geo_iters
        if exact:
            solver.refresh()
        loss = solver.loss()
        _check_finite(loss, trace)
        trace.iterations.append(dict(iteration=it, exact=exact, **loss.to_dict()))
        if exact:
            if loss.total < trace.best_loss:
                trace.best_loss = loss.total
                trace.best_iteration = it
                best_params = solver.params.copy()
            if prev_exact is not None and abs(prev_exact - loss.total) <= CONVERGENCE_RTOL * max(abs(prev_exact), 1e-300):
                trace.stopped = "converged"
                break
            prev_exact = loss.total
        if it >= cfg.geo_iters:
            trace.stopped = "max iterations"
            break
        solver.step(lr_schedule(cfg.learning_rate, it, cfg.geo_iters))
        it += 1
    trace.wall_time = time.perf_counter() - start
    return PartTransforms.from_params(best_params), trace
