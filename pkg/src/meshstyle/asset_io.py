"""Meshes, textures, part labels and run configurations on disk.

Meshes are Wavefront-style ASCII (``v``/``vt``/``f`` records, 1-based
indices). Textures are 8-bit PNG, held in memory as float RGB in [0, 1].
Part labels and run configurations are JSON documents.
"""
import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import EmptyMeshError, FormatError, LabelError

log = logging.getLogger(__name__)

# faces with area <= this fraction of bbox_diagonal**2 are treated as degenerate
AREA_TOLERANCE = 1e-14


def _readonly(a):
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TextureImage:
    pixels: np.ndarray  # (H, W, 3) float64 in [0, 1], row 0 is the top of the image

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"texture must be (H, W, 3), got {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("texture has non-finite values")
        object.__setattr__(self, "pixels", _readonly(px))

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


@dataclass(frozen=True, eq=False)
class TexturedMesh:
    """Triangle mesh with optional per-corner UVs and a diffuse texture.

    ``face_uvs`` is None when the source had no texture coordinates.
    ``face_origin`` maps each kept face to its index in the triangulated
    face list before degenerate faces were dropped.
    """

    vertices: np.ndarray
    faces: np.ndarray
    uvs: np.ndarray = None
    face_uvs: np.ndarray = None
    texture: TextureImage = None
    face_origin: np.ndarray = None
    dropped_faces: int = 0

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face vertex index out of range")
        object.__setattr__(self, "vertices", _readonly(v))
        object.__setattr__(self, "faces", _readonly(f))
        if self.uvs is None:
            uv = np.zeros((0, 2))
        else:
            uv = np.asarray(self.uvs, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "uvs", _readonly(uv))
        if self.face_uvs is not None:
            fu = np.asarray(self.face_uvs, dtype=np.int64).reshape(-1, 3)
            if fu.shape != f.shape:
                raise ValueError("face_uvs must match faces in shape")
            if len(fu) and (fu.min() < 0 or fu.max() >= len(uv)):
                raise ValueError("face uv index out of range")
            object.__setattr__(self, "face_uvs", _readonly(fu))
        origin = np.arange(len(f)) if self.face_origin is None else self.face_origin
        object.__setattr__(self, "face_origin", _readonly(np.asarray(origin, dtype=np.int64)))

    @property
    def has_uvs(self):
        return self.face_uvs is not None

    @property
    def face_count(self):
        return len(self.faces)

    def face_areas(self):
        tri = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bbox_diagonal(self):
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))

    def with_vertices(self, vertices):
        return dataclasses.replace(self, vertices=vertices)

    def with_texture(self, texture):
        return dataclasses.replace(self, texture=texture)


@dataclass(frozen=True, eq=False)
class PartLabeling:
    part_names: tuple
    face_part: np.ndarray

    def __post_init__(self):
        names = tuple(str(n) for n in self.part_names)
        if len(set(names)) != len(names):
            raise LabelError("duplicate part names")
        fp = np.asarray(self.face_part, dtype=np.int64).reshape(-1)
        if len(fp) and (fp.min() < 0 or fp.max() >= len(names)):
            raise LabelError("face part index out of range")
        object.__setattr__(self, "part_names", names)
        object.__setattr__(self, "face_part", _readonly(fp))

    @property
    def part_count(self):
        return len(self.part_names)


@dataclass
class RunConfig:
    lam: float = 4.0
    alpha: float = 0.1
    beta: float = 0.01
    gamma: float = 0.001
    sample_count: int = 4096
    ellipsoid_surface_samples: int = 512
    views: int = 8
    elevation_deg: float = 20.0
    image_resolution: int = 256
    geo_iters: int = 400
    joint_steps: int = 20
    correspondence_refresh: int = 5
    fscore_tau_fraction: float = 0.01
    symmetry_plane: str = "x=0"
    random_seed: int = 0
    refine_iters: int = 10
    learning_rate: float = 0.01
    color_learning_rate: float = 0.01
    pyramid_levels: int = 4

    _ALIASES = {"lambda": "lam"}
    _POSITIVE = ("lam", "sample_count", "ellipsoid_surface_samples", "views", "image_resolution",
                 "correspondence_refresh", "fscore_tau_fraction", "learning_rate",
                 "color_learning_rate", "pyramid_levels")
    _NON_NEGATIVE = ("alpha", "beta", "gamma", "geo_iters", "joint_steps", "refine_iters")

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in self._POSITIVE:
            if not getattr(self, name) > 0:
                raise ValueError(f"config {name} must be positive, got {getattr(self, name)!r}")
        for name in self._NON_NEGATIVE:
            if not getattr(self, name) >= 0:
                raise ValueError(f"config {name} must be non-negative, got {getattr(self, name)!r}")
        if not -90.0 < self.elevation_deg < 90.0:
            raise ValueError("elevation_deg must lie in (-90, 90)")

    @classmethod
    def from_dict(cls, data):
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in data.items():
            name = cls._ALIASES.get(key, key)
            if name not in known:
                raise ValueError(f"unknown config key {key!r}")
            ftype = known[name].type
            if ftype in (int, "int"):
                if isinstance(value, float) and not value.is_integer():
                    raise ValueError(f"config {key} must be an integer")
                value = int(value)
            elif ftype in (float, "float"):
                value = float(value)
            elif ftype in (str, "str"):
                value = str(value)
            kwargs[name] = value
        return cls(**kwargs)

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


# --- meshes -------------------------------------------------------------


def _parse_index(token, count, path, lineno):
    try:
        i = int(token)
    except ValueError:
        raise FormatError(f"bad index {token!r}", path, lineno) from None
    if i > 0:
        i -= 1
    elif i < 0:
        i += count
    else:
        raise FormatError("index 0 is not valid (indices are 1-based)", path, lineno)
    if not 0 <= i < count:
        raise FormatError(f"index {token} out of range", path, lineno)
    return i


def _read_mtl_texture(mtl_path):
    try:
        with open(mtl_path, encoding="utf-8") as fh:
            for raw in fh:
                parts = raw.split()
                if len(parts) >= 2 and parts[0] == "map_Kd":
                    return os.path.join(os.path.dirname(mtl_path), parts[-1])
    except OSError:
        return None
    return None


def clean_faces(vertices, faces, face_uvs=None, face_origin=None):
    """Drop faces with repeated corners or (near) zero area.

    Returns ``(faces, face_uvs, face_origin, dropped)``.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if face_origin is None:
        face_origin = np.arange(len(faces))
    if len(faces) == 0:
        return faces, face_uvs, face_origin, 0
    tri = vertices[faces]
    area2 = np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    used = vertices[np.unique(faces)]
    diag = float(np.linalg.norm(used.max(axis=0) - used.min(axis=0)))
    keep = area2 > 2.0 * AREA_TOLERANCE * diag * diag
    keep &= (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    dropped = int(len(faces) - keep.sum())
    return (faces[keep], None if face_uvs is None else np.asarray(face_uvs)[keep],
            np.asarray(face_origin)[keep], dropped)


def load_mesh(path, load_texture_file=True):
    """Parse an OBJ file, fan-triangulating polygons and dropping degenerate faces."""
    path = os.fspath(path)
    verts, uvs, faces, face_uvs = [], [], [], []
    mtl_files = []
    any_uv = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                try:
                    verts.append([float(x) for x in parts[1:4]])
                except ValueError:
                    raise FormatError("bad vertex record", path, lineno) from None
                if len(verts[-1]) != 3:
                    raise FormatError("vertex needs 3 coordinates", path, lineno)
            elif tag == "vt":
                try:
                    uv = [float(x) for x in parts[1:3]]
                except ValueError:
                    raise FormatError("bad texture coordinate record", path, lineno) from None
                if len(uv) != 2:
                    raise FormatError("texture coordinate needs 2 values", path, lineno)
                uvs.append(uv)
            elif tag == "f":
                corners = parts[1:]
                if len(corners) < 3:
                    raise FormatError("face needs at least 3 corners", path, lineno)
                vi, ti = [], []
                for c in corners:
                    fields_ = c.split("/")
                    vi.append(_parse_index(fields_[0], len(verts), path, lineno))
                    has_uv = len(fields_) > 1 and fields_[1] != ""
                    if any_uv is None:
                        any_uv = has_uv
                    elif any_uv != has_uv:
                        raise FormatError("faces mix corners with and without uvs", path, lineno)
                    if has_uv:
                        ti.append(_parse_index(fields_[1], len(uvs), path, lineno))
                for k in range(1, len(corners) - 1):
                    faces.append((vi[0], vi[k], vi[k + 1]))
                    if any_uv:
                        face_uvs.append((ti[0], ti[k], ti[k + 1]))
            elif tag == "mtllib":
                mtl_files.append(" ".join(parts[1:]))
            # vn, o, g, s, usemtl and unknown records are ignored
    if not verts:
        raise EmptyMeshError(f"{path}: no vertices")
    vertices = np.asarray(verts, dtype=np.float64)
    faces_arr = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    fuv = np.asarray(face_uvs, dtype=np.int64).reshape(-1, 3) if any_uv else None
    faces_arr, fuv, origin, dropped = clean_faces(vertices, faces_arr, fuv)
    if dropped:
        log.warning("%s: dropped %d degenerate faces", path, dropped)
    if len(faces_arr) == 0:
        raise EmptyMeshError(f"{path}: no faces left after cleanup")

    texture = None
    if load_texture_file:
        tex_path = None
        for mtl in mtl_files:
            tex_path = _read_mtl_texture(os.path.join(os.path.dirname(path), mtl))
            if tex_path:
                break
        if tex_path is None:
            sibling = os.path.splitext(path)[0] + ".png"
            if os.path.exists(sibling):
                tex_path = sibling
        if tex_path is not None and os.path.exists(tex_path):
            texture = load_texture(tex_path)
    return TexturedMesh(vertices=vertices, faces=faces_arr,
                        uvs=np.asarray(uvs, dtype=np.float64).reshape(-1, 2),
                        face_uvs=fuv, texture=texture, face_origin=origin, dropped_faces=dropped)


def _fmt(x):
    return repr(float(x))


def save_mesh(mesh, path, texture_name=None):
    """Write ``mesh`` as OBJ. When it carries a texture, a .mtl and .png are written beside it.

    Coordinates use the shortest repr that round-trips, so loading the file
    back reproduces the arrays exactly.
    """
    path = os.fspath(path)
    stem = os.path.splitext(os.path.basename(path))[0]
    directory = os.path.dirname(path)
    lines = []
    if mesh.texture is not None:
        texture_name = texture_name or stem + ".png"
        mtl_name = stem + ".mtl"
        with open(os.path.join(directory, mtl_name), "w", encoding="utf-8") as fh:
            fh.write(f"newmtl material0\nKd 1 1 1\nmap_Kd {texture_name}\n")
        save_texture(mesh.texture, os.path.join(directory, texture_name))
        lines.append(f"mtllib {mtl_name}")
    for v in mesh.vertices:
        lines.append(f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}")
    for uv in mesh.uvs:
        lines.append(f"vt {_fmt(uv[0])} {_fmt(uv[1])}")
    if mesh.texture is not None:
        lines.append("usemtl material0")
    if mesh.has_uvs:
        for f, t in zip(mesh.faces + 1, mesh.face_uvs + 1):
            lines.append(f"f {f[0]}/{t[0]} {f[1]}/{t[1]} {f[2]}/{t[2]}")
    else:
        for f in mesh.faces + 1:
            lines.append(f"f {f[0]} {f[1]} {f[2]}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# --- textures -----------------------------------------------------------


def load_texture(path):
    with Image.open(os.fspath(path)) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return TextureImage(rgb)


def to_uint8(pixels):
    return np.round(np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def save_texture(image, path):
    pixels = image.pixels if isinstance(image, TextureImage) else image
    Image.fromarray(to_uint8(pixels), mode="RGB").save(os.fspath(path), format="PNG")


def save_mask(mask, path):
    Image.fromarray(np.asarray(mask, dtype=np.uint8) * 255, mode="L").save(os.fspath(path), format="PNG")


# --- part labels ----------------------------------------------------------


def _resolve_part(value, names, index_of, face):
    if isinstance(value, bool):
        raise LabelError(f"face {face}: invalid part {value!r}")
    if isinstance(value, int):
        if not 0 <= value < len(names):
            raise LabelError(f"face {face}: part index {value} out of range")
        return value
    if isinstance(value, str):
        if value not in index_of:
            raise LabelError(f"face {face}: unknown part name {value!r}")
        return index_of[value]
    raise LabelError(f"face {face}: invalid part {value!r}")


def parse_part_labels(doc, mesh=None, face_count=None):
    """Build a PartLabeling from a decoded label document.

    ``face_part`` may be a list (position = face index) or an object keyed by
    face index. Entries are part indices or part names. The document may
    label either the mesh's faces or the faces before degenerate-face cleanup;
    the latter are mapped through ``mesh.face_origin``.
    """
    if not isinstance(doc, dict) or "parts" not in doc or "face_part" not in doc:
        raise LabelError("label document needs 'parts' and 'face_part'")
    names = [str(n) for n in doc["parts"]]
    if not names:
        raise LabelError("part alphabet is empty")
    index_of = {n: i for i, n in enumerate(names)}
    raw = doc["face_part"]
    if mesh is not None:
        face_count = mesh.face_count
    pre_clean = None
    if mesh is not None and mesh.dropped_faces:
        pre_clean = mesh.face_count + mesh.dropped_faces

    if isinstance(raw, dict):
        entries = {}
        for key, value in raw.items():
            try:
                entries[int(key)] = value
            except ValueError:
                raise LabelError(f"face key {key!r} is not an integer") from None
        labelled = max(entries) + 1 if entries else 0
    elif isinstance(raw, list):
        entries = {i: v for i, v in enumerate(raw) if v is not None}
        labelled = len(raw)
    else:
        raise LabelError("'face_part' must be an array or an object")

    target = face_count
    if face_count is not None and pre_clean is not None and labelled == pre_clean:
        target = pre_clean
    if target is None:
        target = labelled
    extra = sorted(k for k in entries if not 0 <= k < target)
    if extra:
        raise LabelError(f"face count mismatch: labels reference faces {extra[:10]} "
                         f"but the mesh has {target} faces")
    missing = [i for i in range(target) if i not in entries]
    if missing:
        raise LabelError(f"missing labels for faces {missing[:20]}"
                         + (" ..." if len(missing) > 20 else ""), )
    face_part = np.array([_resolve_part(entries[i], names, index_of, i) for i in range(target)],
                         dtype=np.int64)
    if target != face_count and mesh is not None:
        face_part = face_part[mesh.face_origin]
    return PartLabeling(tuple(names), face_part)


def load_part_labels(path, mesh):
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid label document: {exc.msg}", path, exc.lineno) from None
    try:
        return parse_part_labels(doc, mesh)
    except LabelError as exc:
        raise LabelError(f"{path}: {exc}") from None


def save_part_labels(labels, path):
    doc = {"parts": list(labels.part_names), "face_part": [int(i) for i in labels.face_part]}
    with open(os.fspath(path), "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


# --- run configuration ------------------------------------------------------


def parse_config_text(text, path=None):
    """Decode a config document: JSON object, or ``key = value`` lines."""
    stripped = text.strip()
    if not stripped:
        return {}
    if stripped.startswith("{"):
        try:
            return json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid config: {exc.msg}", path, exc.lineno) from None
    data = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError("expected key = value", path, lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            data[key] = json.loads(value)
        except json.JSONDecodeError:
            data[key] = value.strip("\"'")
    return data


def load_config(path):
    path = os.fspath(path)
    with open(path, encoding="utf-8") as fh:
        data = parse_config_text(fh.read(), path)
    try:
        return RunConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise FormatError(str(exc), path) from None


def save_config(cfg, path):
    with open(os.fspath(path), "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
