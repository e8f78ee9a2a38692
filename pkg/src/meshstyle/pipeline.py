"""End-to-end geometry + texture style transfer for one source/target pair.

Phases:
  1. sample both surfaces, fit and refine part ellipsoids on the source,
     optimise the per-part affines on the geometric loss;
  2. initialise the colour transform by whitening-colouring the uv-covered
     texels of the source texture onto the target's;
  3. ``joint_steps`` alternating steps: evaluate everything on a shared
     camera ring, take one gradient step on the colour transform against the
     weighted content + style terms and one on the affines against the
     geometric loss. The lowest-total iterate is returned.
"""
import hashlib
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__, _accel
from .errors import NumericalAbort
from .part_field import fit_part_ellipsoids, refine_ellipsoids
from .renderer import camera_ring, render_all
from .sampling_metrics import sample_surface
from .texture_style import (ColorTransform, RenderStyleObjective, apply_color_transform,
                            color_stats, content_loss, pyramid_features, solve_wct, style_loss,
                            uv_coverage_mask)
from .warp_optimizer import Adam, TransformSolver, optimize_transforms, warp_mesh

log = logging.getLogger(__name__)

# geometry steps after the main solve continue at the last scheduled rate
POLISH_RATE_FACTOR = 0.5 ** 4


class PhaseError(Exception):
    """Wraps a failure with the phase it happened in."""

    def __init__(self, phase, exc):
        super().__init__(f"[{phase}] {exc}")
        self.phase = phase
        self.original = exc


@dataclass
class GeometryFit:
    source_points: object
    target_points: object
    ellipsoids: list
    transforms: object
    trace: object
    refine_history: list


@dataclass
class StylizeResult:
    mesh: object
    texture: object
    transforms: object
    color_transform: object
    ledger: list
    best_step: int
    geometry: GeometryFit = None
    timings: dict = field(default_factory=dict)


def _phase(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except (NumericalAbort, PhaseError):
                raise
            except (ValueError, ArithmeticError) as exc:
                raise PhaseError(name, exc) from exc
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner
    return wrap


@_phase("geometry")
def fit_geometry(source_mesh, source_labels, target_mesh, target_labels, cfg):
    if tuple(source_labels.part_names) != tuple(target_labels.part_names):
        raise ValueError("source and target part alphabets differ")
    p = sample_surface(source_mesh, source_labels, cfg.sample_count, seed=cfg.random_seed)
    q = sample_surface(target_mesh, target_labels, cfg.sample_count, seed=cfg.random_seed + 1)
    ells = fit_part_ellipsoids(p)
    ells, history = refine_ellipsoids(ells, p, cfg.refine_iters, m=cfg.ellipsoid_surface_samples,
                                      return_history=True)
    transforms, trace = optimize_transforms(p, q, ells, cfg)
    return GeometryFit(p, q, ells, transforms, trace, history)


def coverage_for(mesh, texture):
    return uv_coverage_mask(mesh, (texture.height, texture.width))


@_phase("texture")
def initial_color_transform(source_mesh, source_texture, target_mesh, target_texture):
    """WCT between the uv-covered texels of both textures."""
    src_mask = coverage_for(source_mesh, source_texture)
    tgt_mask = coverage_for(target_mesh, target_texture)
    t = solve_wct(color_stats(source_texture, src_mask), color_stats(target_texture, tgt_mask))
    return t, src_mask


def transfer_texture(source_mesh, source_texture, target_mesh, target_texture):
    """Phase 2 alone: returns ``(stylized TextureImage, ColorTransform)``."""
    t, mask = initial_color_transform(source_mesh, source_texture, target_mesh, target_texture)
    return apply_color_transform(source_texture, mask, t), t


def _bounds_union(*meshes):
    lo = np.min([m.bbox()[0] for m in meshes], axis=0)
    hi = np.max([m.bbox()[1] for m in meshes], axis=0)
    return lo, hi


class _Bounds:
    def __init__(self, lo, hi):
        self._lo, self._hi = lo, hi

    def bbox(self):
        return self._lo, self._hi


def shared_cameras(cfg, *meshes):
    return camera_ring(_Bounds(*_bounds_union(*meshes)), cfg.views, cfg.elevation_deg,
                       cfg.image_resolution)


def _ledger_entry(step, geo, content, style, cfg):
    beta_c = cfg.beta * content
    gamma_s = cfg.gamma * style
    return {
        "step": step,
        "geometry": geo.total,
        "geometry_terms": geo.to_dict(),
        "content": content,
        "style": style,
        "beta_content": beta_c,
        "gamma_style": gamma_s,
        "total": geo.total + beta_c + gamma_s,
    }


def _joint_loop(source_mesh, geometry, cfg, texture_ctx=None):
    """Alternating colour / geometry steps with best-iterate selection.

    ``texture_ctx`` is None for geometry-only runs; the geometry iterates are
    then the same as in a textured run with zero render-term weights.
    """
    p, q, ells = geometry.source_points, geometry.target_points, geometry.ellipsoids
    solver = TransformSolver(p, q, ells, cfg, init=geometry.transforms,
                             lr=cfg.learning_rate * POLISH_RATE_FACTOR)
    color = None if texture_ctx is None else texture_ctx["initial"]
    color_adam = Adam(12, lr=cfg.color_learning_rate)
    ledger = []
    best = None
    for step in range(cfg.joint_steps):
        transforms = solver.transforms
        solver.refresh()
        geo = solver.loss()
        content = style = 0.0
        stylized = None
        objective = None
        if texture_ctx is not None:
            warped = warp_mesh(source_mesh, ells, transforms, cfg.lam)
            stylized = apply_color_transform(texture_ctx["texture"], texture_ctx["mask"], color)
            cams = texture_ctx["cameras"]
            renders = render_all(warped, stylized, cams)
            content = content_loss(renders, texture_ctx["source_renders"])
            feats = [pyramid_features(r.rgb, r.mask, cfg.pyramid_levels) for r in renders]
            style = style_loss(feats, texture_ctx["target_features"])
            base = render_all(warped, texture_ctx["texture"], cams)
            objective = RenderStyleObjective(base, texture_ctx["source_renders"],
                                             texture_ctx["target_features"], cfg.beta, cfg.gamma,
                                             cfg.pyramid_levels)
        entry = _ledger_entry(step, geo, content, style, cfg)
        if not math.isfinite(entry["total"]):
            raise NumericalAbort(f"non-finite joint loss at step {step}", ledger + [entry])
        ledger.append(entry)
        if best is None or entry["total"] < best[0]:
            best = (entry["total"], step, transforms, color, stylized)
        if objective is not None:
            _, _, grad = objective.value_and_grad(color)
            color = ColorTransform.from_params(color_adam.step(color.params(), grad))
        solver.step()
    return ledger, best


def _texture_context(source_mesh, source_labels, target_mesh, cfg):
    src_tex = source_mesh.texture
    tgt_tex = target_mesh.texture
    initial, mask = initial_color_transform(source_mesh, src_tex, target_mesh, tgt_tex)
    cams = shared_cameras(cfg, source_mesh, target_mesh)
    source_renders = render_all(source_mesh, src_tex, cams)
    target_renders = render_all(target_mesh, tgt_tex, cams)
    target_features = [pyramid_features(r.rgb, r.mask, cfg.pyramid_levels) for r in target_renders]
    return {"initial": initial, "mask": mask, "texture": src_tex, "cameras": cams,
            "source_renders": source_renders, "target_renders": target_renders,
            "target_features": target_features}


def transfer_geometry(source_mesh, source_labels, target_mesh, target_labels, cfg):
    """Geometry-only run (phase 1 plus the geometry half of phase 3).

    Returns ``(warped mesh, GeometryFit, ledger, best_step)``; the warped mesh
    keeps the source texture.
    """
    t0 = time.perf_counter()
    geometry = fit_geometry(source_mesh, source_labels, target_mesh, target_labels, cfg)
    transforms = geometry.transforms
    ledger, best_step = [], -1
    if cfg.joint_steps > 0:
        ledger, best = _run_phase("joint", _joint_loop, source_mesh, geometry, cfg, None)
        transforms, best_step = best[2], best[1]
    geometry.transforms = transforms
    warped = warp_mesh(source_mesh, geometry.ellipsoids, transforms, cfg.lam)
    log.info("transfer-geometry finished in %.2fs", time.perf_counter() - t0)
    return warped, geometry, ledger, best_step


def _run_phase(name, fn, *args):
    try:
        return fn(*args)
    except (NumericalAbort, PhaseError):
        raise
    except (ValueError, ArithmeticError) as exc:
        raise PhaseError(name, exc) from exc


def stylize_joint(source_mesh, source_labels, target_mesh, target_labels, cfg):
    """Full geometry + texture transfer. Both meshes must carry textures and uvs."""
    if source_mesh.texture is None or target_mesh.texture is None:
        raise PhaseError("input", ValueError("both meshes need a texture"))
    timings = {}
    t0 = time.perf_counter()
    geometry = fit_geometry(source_mesh, source_labels, target_mesh, target_labels, cfg)
    timings["geometry"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ctx = _run_phase("texture", _texture_context, source_mesh, source_labels, target_mesh, cfg)
    timings["texture"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    transforms = geometry.transforms
    color = ctx["initial"]
    stylized = None
    ledger, best_step = [], -1
    if cfg.joint_steps > 0:
        ledger, best = _run_phase("joint", _joint_loop, source_mesh, geometry, cfg, ctx)
        _, best_step, transforms, color, stylized = best
    timings["joint"] = time.perf_counter() - t0
    if stylized is None:
        stylized = apply_color_transform(ctx["texture"], ctx["mask"], color)
    geometry.transforms = transforms
    warped = warp_mesh(source_mesh, geometry.ellipsoids, transforms, cfg.lam).with_texture(stylized)
    return StylizeResult(mesh=warped, texture=stylized, transforms=transforms, color_transform=color,
                         ledger=ledger, best_step=best_step, geometry=geometry, timings=timings)


# --- manifests ------------------------------------------------------------------


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def run_manifest(cfg, inputs, timings, command):
    return {
        "command": command,
        "tool_version": __version__,
        "backend": _accel.backend_name(),
        "seed": cfg.random_seed,
        "config": cfg.to_dict(),
        "inputs": {name: {"path": str(path), "sha256": file_digest(path)}
                   for name, path in inputs.items() if path is not None},
        "timings": timings,
    }
