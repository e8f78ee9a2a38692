"""Command-line entry point.

Exit status: 0 success, 1 usage error, 2 data error, 3 numerical abort.
"""
import argparse
import json
import logging
import os
import sys
import time

from . import _accel
from .asset_io import (PartLabeling, RunConfig, load_config, load_mesh, load_part_labels,
                       load_texture, save_mask, save_mesh, save_texture)
from .errors import MeshStyleError, NumericalAbort
from .part_field import fit_part_ellipsoids, refine_ellipsoids
from .pipeline import (PhaseError, run_manifest, stylize_joint, transfer_geometry,
                       transfer_texture)
from .renderer import camera_ring, render_all
from .sampling_metrics import metrics_report, sample_surface

log = logging.getLogger("meshstyle")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require(path, what):
    if path is None:
        raise UsageError(f"missing --{what}")
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} file not found: {path}")
    return path


def _labels_path(mesh_path, explicit):
    if explicit:
        return explicit
    return os.path.splitext(mesh_path)[0] + ".labels.json"


def _resolve_config(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["random_seed"] = args.seed
    if getattr(args, "views", None) is not None:
        changes["views"] = args.views
    if getattr(args, "resolution", None) is not None:
        changes["image_resolution"] = args.resolution
    return cfg.replace(**changes) if changes else cfg


def _load_textured(path, texture_override):
    mesh = load_mesh(path)
    if texture_override:
        mesh = mesh.with_texture(load_texture(_require(texture_override, "texture")))
    return mesh


def _load_pair(args, need_labels=True):
    src_path = _require(args.source, "source")
    tgt_path = _require(args.target, "target")
    src = _load_textured(src_path, getattr(args, "source_texture", None))
    tgt = _load_textured(tgt_path, getattr(args, "target_texture", None))
    inputs = {"source": src_path, "target": tgt_path}
    src_labels = tgt_labels = None
    if need_labels:
        sl = _require(_labels_path(src_path, args.source_labels), "source-labels")
        tl = _require(_labels_path(tgt_path, args.target_labels), "target-labels")
        src_labels = load_part_labels(sl, src)
        tgt_labels = load_part_labels(tl, tgt)
        inputs.update({"source_labels": sl, "target_labels": tl})
    return src, src_labels, tgt, tgt_labels, inputs


def _out_dir(args):
    out = args.out_dir or "."
    os.makedirs(out, exist_ok=True)
    return out


def cmd_fit_ellipsoids(args):
    cfg = _resolve_config(args)
    src_path = _require(args.source, "source")
    mesh = load_mesh(src_path, load_texture_file=False)
    lpath = _require(_labels_path(src_path, args.source_labels), "source-labels")
    labels = load_part_labels(lpath, mesh)
    t0 = time.perf_counter()
    pts = sample_surface(mesh, labels, cfg.sample_count, seed=cfg.random_seed)
    ells = refine_ellipsoids(fit_part_ellipsoids(pts), pts, cfg.refine_iters,
                             m=cfg.ellipsoid_surface_samples)
    out = _out_dir(args)
    doc = {"parts": [{"part": name, **(e.to_dict() if e is not None else {"missing": True})}
                     for name, e in zip(labels.part_names, ells)]}
    _write_json(os.path.join(out, "ellipsoids.json"), doc)
    _write_json(os.path.join(out, "manifest.json"),
                run_manifest(cfg, {"source": src_path, "source_labels": lpath},
                             {"fit": time.perf_counter() - t0}, "fit-ellipsoids"))
    return EXIT_OK


def cmd_transfer_geometry(args):
    cfg = _resolve_config(args)
    src, sl, tgt, tl, inputs = _load_pair(args)
    t0 = time.perf_counter()
    warped, geometry, ledger, best_step = transfer_geometry(src, sl, tgt, tl, cfg)
    out = _out_dir(args)
    save_mesh(warped, os.path.join(out, "warped.obj"))
    _write_json(os.path.join(out, "transforms.json"), geometry.transforms.to_dict())
    _write_json(os.path.join(out, "ellipsoids.json"),
                {"parts": [e.to_dict() if e is not None else None for e in geometry.ellipsoids]})
    trace = geometry.trace.to_dict()
    trace.pop("wall_time")
    _write_json(os.path.join(out, "trace.json"),
                {"optimizer": trace, "polish": ledger, "best_step": best_step})
    _write_json(os.path.join(out, "manifest.json"),
                run_manifest(cfg, inputs, {"total": time.perf_counter() - t0,
                                           "optimizer": geometry.trace.wall_time},
                             "transfer-geometry"))
    return EXIT_OK


def cmd_transfer_texture(args):
    cfg = _resolve_config(args)
    src, _, tgt, _, inputs = _load_pair(args, need_labels=False)
    if src.texture is None or tgt.texture is None:
        raise MeshStyleError("both meshes need a texture (mtllib/map_Kd, sibling .png or --*-texture)")
    t0 = time.perf_counter()
    stylized, transform = transfer_texture(src, src.texture, tgt, tgt.texture)
    out = _out_dir(args)
    save_texture(stylized, os.path.join(out, "stylized.png"))
    _write_json(os.path.join(out, "color_transform.json"), transform.to_dict())
    _write_json(os.path.join(out, "manifest.json"),
                run_manifest(cfg, inputs, {"total": time.perf_counter() - t0}, "transfer-texture"))
    return EXIT_OK


def cmd_stylize(args):
    cfg = _resolve_config(args)
    src, sl, tgt, tl, inputs = _load_pair(args)
    if args.config:
        inputs["config"] = args.config
    result = stylize_joint(src, sl, tgt, tl, cfg)
    out = _out_dir(args)
    save_mesh(result.mesh, os.path.join(out, "stylized.obj"))
    _write_json(os.path.join(out, "transforms.json"), result.transforms.to_dict())
    _write_json(os.path.join(out, "color_transform.json"), result.color_transform.to_dict())
    _write_json(os.path.join(out, "ledger.json"), {"best_step": result.best_step, "steps": result.ledger})
    _write_json(os.path.join(out, "manifest.json"),
                run_manifest(cfg, inputs, result.timings, "stylize"))
    return EXIT_OK


def cmd_render(args):
    cfg = _resolve_config(args)
    path = _require(args.source, "source")
    mesh = _load_textured(path, args.source_texture)
    cams = camera_ring(mesh, cfg.views, cfg.elevation_deg, cfg.image_resolution)
    t0 = time.perf_counter()
    texture = mesh.texture if mesh.has_uvs else None
    renders = render_all(mesh, texture, cams)
    out = _out_dir(args)
    for k, r in enumerate(renders):
        save_texture(r.rgb, os.path.join(out, f"view_{k:03d}.png"))
        save_mask(r.mask, os.path.join(out, f"mask_{k:03d}.png"))
    _write_json(os.path.join(out, "cameras.json"), [c.to_dict() for c in cams])
    _write_json(os.path.join(out, "manifest.json"),
                run_manifest(cfg, {"source": path}, {"render": time.perf_counter() - t0}, "render"))
    return EXIT_OK


def _whole_mesh_labels(mesh):
    import numpy as np

    return PartLabeling(("all",), np.zeros(mesh.face_count, dtype=np.int64))


def cmd_metrics(args):
    cfg = _resolve_config(args)
    pred_path = _require(args.pred, "pred")
    gt_path = _require(args.gt, "gt")
    pred = load_mesh(pred_path, load_texture_file=False)
    gt = load_mesh(gt_path, load_texture_file=False)
    n = args.samples or cfg.sample_count
    p = sample_surface(pred, _whole_mesh_labels(pred), n, seed=cfg.random_seed)
    g = sample_surface(gt, _whole_mesh_labels(gt), n, seed=cfg.random_seed)
    report = metrics_report(p.points, g.points, cfg.fscore_tau_fraction, tau=args.tau)
    report.update({"samples": n, "pred": pred_path, "gt": gt_path})
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out_dir:
        out = _out_dir(args)
        with open(os.path.join(out, "metrics.json"), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="meshstyle", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, pair=True, labels=True):
        p.add_argument("--source", help="source mesh (.obj)")
        if pair:
            p.add_argument("--target", help="target mesh (.obj)")
        if labels:
            p.add_argument("--source-labels", help="default: <source>.labels.json")
            if pair:
                p.add_argument("--target-labels", help="default: <target>.labels.json")
        p.add_argument("--config", help="run configuration (JSON or key = value lines)")
        p.add_argument("--out-dir", help="output directory (default: current)")
        p.add_argument("--seed", type=int)
        p.add_argument("--views", type=int)
        p.add_argument("--resolution", type=int)

    p = sub.add_parser("fit-ellipsoids", help="fit per-part ellipsoids to a labelled mesh")
    common(p, pair=False)
    p.set_defaults(func=cmd_fit_ellipsoids)

    p = sub.add_parser("transfer-geometry", help="warp the source towards the target's part layout")
    common(p)
    p.set_defaults(func=cmd_transfer_geometry)

    p = sub.add_parser("transfer-texture", help="recolour the source texture with target statistics")
    common(p, labels=False)
    p.add_argument("--source-texture")
    p.add_argument("--target-texture")
    p.set_defaults(func=cmd_transfer_texture)

    p = sub.add_parser("stylize", help="joint geometry and texture transfer")
    common(p)
    p.add_argument("--source-texture")
    p.add_argument("--target-texture")
    p.set_defaults(func=cmd_stylize)

    p = sub.add_parser("render", help="render a textured mesh from the camera ring")
    common(p, pair=False, labels=False)
    p.add_argument("--source-texture")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("metrics", help="Chamfer, Chamfer-L1 and F-score between two meshes")
    p.add_argument("--pred", help="predicted mesh")
    p.add_argument("--gt", help="ground-truth mesh")
    p.add_argument("--samples", type=int, help="points per surface (default: config sample_count)")
    p.add_argument("--tau", type=float, help="F-score threshold (default: fraction of gt bbox diagonal)")
    p.add_argument("--config")
    p.add_argument("--out-dir")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _accel.configure_threads()
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"meshstyle {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalAbort as exc:
        print(f"meshstyle {args.command}: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PhaseError as exc:
        if isinstance(exc.original, NumericalAbort):
            print(f"meshstyle {args.command}: numerical abort: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        print(f"meshstyle {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (MeshStyleError, OSError, ValueError) as exc:
        print(f"meshstyle {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
