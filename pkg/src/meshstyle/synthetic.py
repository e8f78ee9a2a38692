"""Procedural part-labelled textured meshes for tests, demos and benchmarks."""
import numpy as np

from .asset_io import PartLabeling, TexturedMesh, TextureImage, clean_faces

# name, centre, radii; mirror pairs sit symmetric about x = 0
CREATURE_PARTS = (
    ("body", (0.0, 0.0, 0.0), (0.32, 0.28, 0.60)),
    ("head", (0.0, 0.38, 0.78), (0.22, 0.20, 0.22)),
    ("tail", (0.0, 0.12, -0.80), (0.06, 0.06, 0.28)),
    ("leg_front_left", (0.18, -0.46, 0.38), (0.08, 0.26, 0.08)),
    ("leg_front_right", (-0.18, -0.46, 0.38), (0.08, 0.26, 0.08)),
    ("leg_back_left", (0.18, -0.46, -0.38), (0.09, 0.26, 0.09)),
    ("leg_back_right", (-0.18, -0.46, -0.38), (0.09, 0.26, 0.09)),
    ("neck", (0.0, 0.22, 0.58), (0.12, 0.16, 0.12)),
    ("snout", (0.0, 0.32, 0.98), (0.09, 0.08, 0.10)),
    ("ear_left", (0.12, 0.58, 0.74), (0.05, 0.09, 0.03)),
    ("ear_right", (-0.12, 0.58, 0.74), (0.05, 0.09, 0.03)),
)

_ATLAS_COLS = 4
_ATLAS_ROWS = 3


def uv_sphere(rings=12, segments=16, center=(0.0, 0.0, 0.0), radii=(1.0, 1.0, 1.0),
              uv_box=(0.0, 0.0, 1.0, 1.0)):
    """Latitude/longitude ellipsoid mesh with a seam; uvs fill ``uv_box`` (u0, v0, u1, v1)."""
    theta = np.linspace(0.0, np.pi, rings + 1)
    phi = np.linspace(0.0, 2.0 * np.pi, segments + 1)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    unit = np.stack([np.sin(th) * np.cos(ph), np.cos(th), np.sin(th) * np.sin(ph)], axis=-1)
    verts = (unit * np.asarray(radii) + np.asarray(center)).reshape(-1, 3)
    u0, v0, u1, v1 = uv_box
    uu = u0 + (u1 - u0) * (ph / (2.0 * np.pi))
    vv = v1 - (v1 - v0) * (th / np.pi)
    uvs = np.stack([uu, vv], axis=-1).reshape(-1, 2)
    idx = np.arange((rings + 1) * (segments + 1)).reshape(rings + 1, segments + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    faces = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    faces, fuv, _, _ = clean_faces(verts, faces, faces)
    return verts, uvs, faces, fuv


def icosphere(subdivisions=3, radius=1.0):
    """Geodesic sphere without UVs (vertices exactly on the sphere)."""
    t = (1.0 + 5.0 ** 0.5) / 2.0
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.asarray(p, dtype=np.float64) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return TexturedMesh(np.asarray(verts) * radius, np.asarray(faces))


def cube_mesh(size=1.0):
    """Axis-aligned cube centred at the origin: 8 vertices, 12 triangles, per-face uvs."""
    h = size / 2.0
    verts = np.array([[x, y, z] for x in (-h, h) for y in (-h, h) for z in (-h, h)])
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    uvs = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    faces, fuv = [], []
    for q in quads:
        faces += [(q[0], q[1], q[2]), (q[0], q[2], q[3])]
        fuv += [(0, 1, 2), (0, 2, 3)]
    return TexturedMesh(verts, np.array(faces), uvs=uvs, face_uvs=np.array(fuv))


def _tile_box(k, margin=0.06):
    col, row = k % _ATLAS_COLS, k // _ATLAS_COLS
    w, h = 1.0 / _ATLAS_COLS, 1.0 / _ATLAS_ROWS
    u0, v1 = col * w, 1.0 - row * h
    return (u0 + margin * w, v1 - h + margin * h, u0 + w - margin * w, v1 - margin * h)


def creature_texture(n_parts, size=128, seed=0, palette=None):
    """Striped per-part atlas on a black background (uncovered texels stay black)."""
    rng = np.random.default_rng(seed)
    if palette is None:
        palette = rng.uniform(0.15, 0.95, size=(n_parts, 2, 3))
    img = np.zeros((size, size, 3))
    yy, xx = np.mgrid[0:size, 0:size]
    u = (xx + 0.5) / size
    v = 1.0 - (yy + 0.5) / size
    for k in range(n_parts):
        u0, v0, u1, v1 = _tile_box(k, margin=0.0)
        inside = (u >= u0) & (u < u1) & (v >= v0) & (v < v1)
        freq = rng.uniform(3.0, 9.0)
        angle = rng.uniform(0.0, np.pi)
        s = np.sin(2 * np.pi * freq * ((u - u0) * np.cos(angle) + (v - v0) * np.sin(angle)) * _ATLAS_COLS)
        mix = (s > 0).astype(float)[..., None]
        colour = mix * palette[k, 0] + (1 - mix) * palette[k, 1]
        noise = rng.normal(0.0, 0.03, size=(size, size, 3))
        img[inside] = np.clip(colour + noise, 0.0, 1.0)[inside]
    # quantise so the atlas survives an 8-bit PNG round trip unchanged
    return TextureImage(np.round(img * 255.0) / 255.0)


def make_creature(n_parts=11, rings=10, segments=14, proportions=None, texture_seed=0,
                  texture_size=128, palette=None):
    """A quadruped-like multi-component mesh built from one ellipsoid per part.

    ``proportions`` optionally maps part name -> (centre_scale(3), radius_scale(3)).
    Returns ``(mesh, labels)``.
    """
    if not 1 <= n_parts <= len(CREATURE_PARTS):
        raise ValueError(f"n_parts must be in [1, {len(CREATURE_PARTS)}]")
    proportions = proportions or {}
    verts, uvs, faces, fuvs, part = [], [], [], [], []
    v_off = t_off = 0
    names = []
    for k, (name, center, radii) in enumerate(CREATURE_PARTS[:n_parts]):
        cs, rs = proportions.get(name, ((1, 1, 1), (1, 1, 1)))
        v, t, f, ft = uv_sphere(rings, segments, np.multiply(center, cs), np.multiply(radii, rs),
                                _tile_box(k))
        verts.append(v)
        uvs.append(t)
        faces.append(f + v_off)
        fuvs.append(ft + t_off)
        part.append(np.full(len(f), k))
        v_off += len(v)
        t_off += len(t)
        names.append(name)
    tex = creature_texture(n_parts, texture_size, texture_seed, palette)
    mesh = TexturedMesh(np.concatenate(verts), np.concatenate(faces), uvs=np.concatenate(uvs),
                        face_uvs=np.concatenate(fuvs), texture=tex)
    return mesh, PartLabeling(tuple(names), np.concatenate(part))


def random_proportions(n_parts, seed, spread=0.25):
    """Symmetric random part rescaling (mirror pairs share a draw)."""
    rng = np.random.default_rng(seed)
    out = {}
    for name, _, _ in CREATURE_PARTS[:n_parts]:
        key = name.replace("_left", "").replace("_right", "")
        if key not in out:
            out[key] = (rng.uniform(1 - spread, 1 + spread, 3), rng.uniform(1 - spread, 1 + spread, 3))
    return {name: out[name.replace("_left", "").replace("_right", "")]
            for name, _, _ in CREATURE_PARTS[:n_parts]}


def random_affines(n_parts, seed, spread=0.3, translation=None):
    """Per-part affines with linear entries in identity +/- ``spread`` and translations in
    +/- ``translation`` (defaults to ``spread``). Returns ``(linear (N,3,3), translation (N,3))``."""
    rng = np.random.default_rng(seed)
    t_spread = spread if translation is None else translation
    linear = np.eye(3) + rng.uniform(-spread, spread, size=(n_parts, 3, 3))
    trans = rng.uniform(-t_spread, t_spread, size=(n_parts, 3))
    return linear, trans
