"""Z-buffered triangle scan conversion.

Input vertices are already in pixel coordinates (x right, y down, pixel
centres at half-integers) with a per-vertex reciprocal depth. Output is the
winning face id, perspective-correct barycentrics and view depth per pixel.

Triangles are visited in list order and a pixel is only overwritten on a
strictly nearer depth, so equal-depth ties keep the earlier face. The numba
path splits the image into row bands; every pixel belongs to exactly one
band and sees triangles in the same order, so results do not depend on the
thread count.
"""
import numpy as np

from .. import _accel
from .._accel import njit, prange

TILE_ROWS = 16


def _triangle_boxes(xy, faces, width, height):
    tri = xy[faces]  # (F, 3, 2)
    lo = np.ceil(tri.min(axis=1) - 0.5).astype(np.int64)
    hi = np.floor(tri.max(axis=1) - 0.5).astype(np.int64)
    lo[:, 0] = np.clip(lo[:, 0], 0, width)
    lo[:, 1] = np.clip(lo[:, 1], 0, height)
    hi[:, 0] = np.clip(hi[:, 0], -1, width - 1)
    hi[:, 1] = np.clip(hi[:, 1], -1, height - 1)
    return lo, hi


@njit(parallel=True, cache=True)
def _raster_numba(xy, inv_z, faces, face_ids, lo, hi, width, height):
    face_buf = np.full((height, width), -1, dtype=np.int64)
    depth = np.full((height, width), np.inf)
    bary = np.zeros((height, width, 3))
    n_tiles = (height + TILE_ROWS - 1) // TILE_ROWS
    for tile in prange(n_tiles):
        r0 = tile * TILE_ROWS
        r1 = min(r0 + TILE_ROWS, height)
        for f in range(faces.shape[0]):
            y_lo = max(lo[f, 1], r0)
            y_hi = min(hi[f, 1], r1 - 1)
            if y_lo > y_hi or lo[f, 0] > hi[f, 0]:
                continue
            i0 = faces[f, 0]
            i1 = faces[f, 1]
            i2 = faces[f, 2]
            x0 = xy[i0, 0]
            y0 = xy[i0, 1]
            x1 = xy[i1, 0]
            y1 = xy[i1, 1]
            x2 = xy[i2, 0]
            y2 = xy[i2, 1]
            area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
            if area == 0.0:
                continue
            for py in range(y_lo, y_hi + 1):
                cy = py + 0.5
                for px in range(lo[f, 0], hi[f, 0] + 1):
                    cx = px + 0.5
                    w0 = (x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1)
                    w1 = (x0 - x2) * (cy - y2) - (y0 - y2) * (cx - x2)
                    w2 = (x1 - x0) * (cy - y0) - (y1 - y0) * (cx - x0)
                    if area > 0.0:
                        if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                            continue
                    else:
                        if w0 > 0.0 or w1 > 0.0 or w2 > 0.0:
                            continue
                    a0 = (w0 / area) * inv_z[i0]
                    a1 = (w1 / area) * inv_z[i1]
                    a2 = (w2 / area) * inv_z[i2]
                    s = a0 + a1 + a2
                    if not s > 0.0:
                        continue
                    z = 1.0 / s
                    if z < depth[py, px]:
                        depth[py, px] = z
                        face_buf[py, px] = face_ids[f]
                        bary[py, px, 0] = a0 / s
                        bary[py, px, 1] = a1 / s
                        bary[py, px, 2] = a2 / s
    return face_buf, bary, depth


def _raster_numpy(xy, inv_z, faces, face_ids, lo, hi, width, height):
    face_buf = np.full((height, width), -1, dtype=np.int64)
    depth = np.full((height, width), np.inf)
    bary = np.zeros((height, width, 3))
    for f in range(faces.shape[0]):
        if lo[f, 0] > hi[f, 0] or lo[f, 1] > hi[f, 1]:
            continue
        i0, i1, i2 = faces[f]
        x0, y0 = xy[i0]
        x1, y1 = xy[i1]
        x2, y2 = xy[i2]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0:
            continue
        cy = np.arange(lo[f, 1], hi[f, 1] + 1)[:, None] + 0.5
        cx = np.arange(lo[f, 0], hi[f, 0] + 1)[None, :] + 0.5
        w0 = (x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1)
        w1 = (x0 - x2) * (cy - y2) - (y0 - y2) * (cx - x2)
        w2 = (x1 - x0) * (cy - y0) - (y1 - y0) * (cx - x0)
        if area > 0.0:
            inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        else:
            inside = (w0 <= 0.0) & (w1 <= 0.0) & (w2 <= 0.0)
        a0 = (w0 / area) * inv_z[i0]
        a1 = (w1 / area) * inv_z[i1]
        a2 = (w2 / area) * inv_z[i2]
        s = a0 + a1 + a2
        inside &= s > 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            z = 1.0 / s
        ys = slice(lo[f, 1], hi[f, 1] + 1)
        xs = slice(lo[f, 0], hi[f, 0] + 1)
        win = inside & (z < depth[ys, xs])
        if not win.any():
            continue
        depth[ys, xs][win] = z[win]
        face_buf[ys, xs][win] = face_ids[f]
        with np.errstate(divide="ignore", invalid="ignore"):
            bary[ys, xs, 0][win] = (a0 / s)[win]
            bary[ys, xs, 1][win] = (a1 / s)[win]
            bary[ys, xs, 2][win] = (a2 / s)[win]
    return face_buf, bary, depth


def rasterize_triangles(xy, inv_z, faces, width, height, face_ids=None, backend=None):
    """Scan-convert triangles given in pixel space.

    Returns ``(face, bary, depth)`` where ``face`` is -1 on uncovered pixels
    and ``depth`` is ``inf`` there.
    """
    xy = np.ascontiguousarray(xy, dtype=np.float64)
    inv_z = np.ascontiguousarray(inv_z, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int64).reshape(-1, 3)
    if face_ids is None:
        face_ids = np.arange(len(faces), dtype=np.int64)
    face_ids = np.ascontiguousarray(face_ids, dtype=np.int64)
    width = int(width)
    height = int(height)
    if len(faces) == 0:
        return (np.full((height, width), -1, dtype=np.int64),
                np.zeros((height, width, 3)), np.full((height, width), np.inf))
    lo, hi = _triangle_boxes(xy, faces, width, height)
    if backend is None:
        backend = _accel.backend_name()
    impl = _raster_numba if backend == "numba" else _raster_numpy
    return impl(xy, inv_z, faces, face_ids, lo, hi, width, height)
