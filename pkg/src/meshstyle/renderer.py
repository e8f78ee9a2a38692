"""Unlit perspective rendering of textured meshes with a background mask."""
import math
from dataclasses import dataclass

import numpy as np

from .kernels import rasterize_triangles

BACKGROUND = 0.5
FLAT_ALBEDO = 0.7
RING_RADIUS_FACTOR = 1.8
RING_FOV_DEG = 40.0


@dataclass(frozen=True, eq=False)
class Camera:
    position: np.ndarray
    target: np.ndarray
    up: np.ndarray = (0.0, 1.0, 0.0)
    fov_deg: float = RING_FOV_DEG
    resolution: int = 256

    def __post_init__(self):
        for name in ("position", "target", "up"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64).reshape(3))
        if np.allclose(self.position, self.target, rtol=0.0, atol=0.0):
            raise ValueError("camera position equals its target")
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError("field of view must lie in (0, 180) degrees")
        if int(self.resolution) < 1:
            raise ValueError("resolution must be positive")

    def basis(self):
        """Rows: right, up, forward (unit vectors, right-handed image frame)."""
        forward = self.target - self.position
        forward = forward / np.linalg.norm(forward)
        right = np.cross(forward, self.up)
        if np.linalg.norm(right) < 1e-12:
            # looking along the up vector; pick any perpendicular
            right = np.cross(forward, [1.0, 0.0, 0.0] if abs(forward[0]) < 0.9 else [0.0, 0.0, 1.0])
        right = right / np.linalg.norm(right)
        up = np.cross(right, forward)
        return np.stack([right, up, forward])

    def to_view(self, points):
        return (np.asarray(points, dtype=np.float64) - self.position) @ self.basis().T

    def project(self, points):
        """Pixel coordinates (x right, y down) and view depth of world points."""
        v = self.to_view(points)
        z = v[:, 2]
        f = 1.0 / math.tan(math.radians(self.fov_deg) / 2.0)
        res = int(self.resolution)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_ndc = f * v[:, 0] / z
            y_ndc = f * v[:, 1] / z
        xy = np.stack([(x_ndc + 1.0) * 0.5 * res, (1.0 - y_ndc) * 0.5 * res], axis=1)
        return xy, z

    def to_dict(self):
        return {"position": self.position.tolist(), "target": self.target.tolist(),
                "up": self.up.tolist(), "fov_deg": self.fov_deg, "resolution": int(self.resolution)}


@dataclass(frozen=True, eq=False)
class RenderOutput:
    rgb: np.ndarray    # (H, W, 3)
    mask: np.ndarray   # (H, W) bool
    depth: np.ndarray  # (H, W), inf on background
    face: np.ndarray   # (H, W) winning face id, -1 on background
    bary: np.ndarray   # (H, W, 3) perspective-correct barycentrics


def camera_ring(mesh, views, elevation_deg=20.0, resolution=256):
    """``views`` cameras evenly spaced in azimuth (0 deg looks from +z) around the bbox centre."""
    if views < 1:
        raise ValueError("need at least one view")
    lo, hi = mesh.bbox()
    diag = float(np.linalg.norm(hi - lo))
    if not diag > 0:
        raise ValueError("mesh has zero extent; cannot place cameras")
    center = 0.5 * (lo + hi)
    radius = RING_RADIUS_FACTOR * diag
    el = math.radians(elevation_deg)
    cams = []
    for k in range(views):
        az = 2.0 * math.pi * k / views
        offset = radius * np.array([math.cos(el) * math.sin(az), math.sin(el), math.cos(el) * math.cos(az)])
        cams.append(Camera(center + offset, center, (0.0, 1.0, 0.0), RING_FOV_DEG, resolution))
    return cams


def sample_bilinear(texture, uv):
    """Bilinear lookup with clamp-to-edge; ``uv`` (..., 2) with v pointing up."""
    img = texture.pixels if hasattr(texture, "pixels") else np.asarray(texture)
    h, w = img.shape[:2]
    x = uv[..., 0] * w - 0.5
    y = (1.0 - uv[..., 1]) * h - 0.5
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    xa = np.clip(x0, 0, w - 1)
    xb = np.clip(x0 + 1, 0, w - 1)
    ya = np.clip(y0, 0, h - 1)
    yb = np.clip(y0 + 1, 0, h - 1)
    top = img[ya, xa] * (1.0 - fx) + img[ya, xb] * fx
    bottom = img[yb, xa] * (1.0 - fx) + img[yb, xb] * fx
    return top * (1.0 - fy) + bottom * fy


def rasterize(mesh, texture, cam, backend=None):
    """Render one view: z-buffered, perspective-correct uvs, unlit albedo, grey background.

    Triangles with any vertex at or behind the near plane are skipped.
    """
    if texture is not None and not mesh.has_uvs:
        raise ValueError("mesh has no uvs but a texture was given")
    res = int(cam.resolution)
    xy, z = cam.project(mesh.vertices)
    near = 1e-6 * float(np.linalg.norm(cam.target - cam.position))
    faces = mesh.faces
    visible = np.all(z[faces] > near, axis=1)
    keep = np.flatnonzero(visible)
    safe_z = np.where(z > near, z, 1.0)
    inv_z = 1.0 / safe_z
    xy = np.where(np.isfinite(xy), xy, 0.0)
    face, bary, depth = rasterize_triangles(xy, inv_z, faces[keep], res, res, face_ids=keep,
                                            backend=backend)
    mask = face >= 0
    rgb = np.full((res, res, 3), BACKGROUND)
    if mask.any():
        f = face[mask]
        b = bary[mask]
        if texture is None:
            rgb[mask] = FLAT_ALBEDO
        else:
            corner_uv = mesh.uvs[mesh.face_uvs[f]]  # (k, 3, 2)
            uv = np.einsum("kc,kcd->kd", b, corner_uv)
            rgb[mask] = sample_bilinear(texture, uv)
    return RenderOutput(rgb=rgb, mask=mask, depth=depth, face=face, bary=bary)


def render_all(mesh, texture, cams, backend=None):
    return [rasterize(mesh, texture, cam, backend=backend) for cam in cams]


def projected_sphere_area(radius, distance, fov_deg, resolution):
    """Pixel area of a sphere's silhouette seen head-on from ``distance``."""
    half = math.asin(radius / distance)
    r_px = math.tan(half) / math.tan(math.radians(fov_deg) / 2.0) * resolution / 2.0
    return math.pi * r_px * r_px
