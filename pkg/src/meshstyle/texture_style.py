"""Colour-statistics texture transfer and masked multi-view content/style losses.

The texture transform is one global colour-space affine ``c -> clip(L c + b)``.
Render-space losses compare masked colour moments of Gaussian pyramid levels
(style) and blurred luminance (content). Blurs that feed masked statistics are
mask-normalised, so pixels outside the mask never leak into them.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .asset_io import TextureImage
from .kernels import rasterize_triangles

log = logging.getLogger(__name__)

LUMA = np.array([0.299, 0.587, 0.114])
WCT_EPS = 1e-6
MIN_MASKED_PIXELS = 4
BLUR_SIGMA = 1.0
BLUR_RADIUS = 2
MASK_KEEP = 0.5


@dataclass(frozen=True, eq=False)
class ColorTransform:
    linear: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        lin = np.array(self.linear, dtype=np.float64).reshape(3, 3)
        b = np.array(self.bias, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(lin)) and np.all(np.isfinite(b))):
            raise ValueError("colour transform entries must be finite")
        lin.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "bias", b)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_params(cls, params):
        params = np.asarray(params, dtype=np.float64).reshape(12)
        return cls(params[:9].reshape(3, 3), params[9:])

    def params(self):
        return np.concatenate([self.linear.ravel(), self.bias])

    def apply_unclamped(self, colors):
        return np.asarray(colors, dtype=np.float64) @ self.linear.T + self.bias

    def apply(self, colors):
        return np.clip(self.apply_unclamped(colors), 0.0, 1.0)

    def to_dict(self):
        return {"linear": self.linear.tolist(), "bias": self.bias.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["linear"], d["bias"])


@dataclass(frozen=True, eq=False)
class ColorStats:
    mean: np.ndarray
    covariance: np.ndarray
    pixel_count: int


def _pixels(image):
    if isinstance(image, TextureImage):
        return image.pixels
    if hasattr(image, "rgb"):
        return image.rgb
    return np.asarray(image, dtype=np.float64)


# --- texture space --------------------------------------------------------------


def uv_coverage_mask(mesh, texture_size):
    """Texels whose centre lies inside at least one face's uv triangle."""
    if not mesh.has_uvs:
        raise ValueError("mesh has no uvs")
    if isinstance(texture_size, (tuple, list)):
        h, w = int(texture_size[0]), int(texture_size[1])
    else:
        h = w = int(texture_size)
    uv = mesh.uvs
    xy = np.stack([uv[:, 0] * w, (1.0 - uv[:, 1]) * h], axis=1)
    face, _, _ = rasterize_triangles(xy, np.ones(len(uv)), mesh.face_uvs, w, h)
    return face >= 0


def color_stats(image, mask):
    """Masked mean and population covariance of RGB values."""
    px = _pixels(image)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != px.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image {px.shape[:2]}")
    sel = px[mask]
    n = len(sel)
    if n < MIN_MASKED_PIXELS:
        raise ValueError(f"need at least {MIN_MASKED_PIXELS} masked pixels, got {n}")
    # shift by one sample first: constant regions then give exactly zero covariance
    shifted = sel - sel[0]
    offset = shifted.mean(axis=0)
    d = shifted - offset
    cov = d.T @ d / n
    cov = 0.5 * (cov + cov.T)
    return ColorStats(sel[0] + offset, cov, n)


def _sym_power(cov, power):
    evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
    evals = np.clip(evals, 0.0, None)
    with np.errstate(divide="ignore"):
        scaled = np.where(evals > 0, evals ** power, 0.0)
    return (evecs * scaled) @ evecs.T


def solve_wct(src, tgt, eps=WCT_EPS):
    """Whitening-colouring affine taking ``src`` moments to ``tgt`` moments.

    ``eps * I`` is added to the source covariance only when its smallest
    eigenvalue is below ``eps``; otherwise the map is exact.
    """
    cov_s = src.covariance
    if np.linalg.eigvalsh(cov_s).min() < eps:
        cov_s = cov_s + eps * np.eye(3)
    linear = _sym_power(tgt.covariance, 0.5) @ _sym_power(cov_s, -0.5)
    bias = tgt.mean - linear @ src.mean
    return ColorTransform(linear, bias)


def apply_color_transform(texture, mask, t):
    """Transform and clamp masked texels; others are copied unchanged."""
    px = _pixels(texture)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != px.shape[:2]:
        raise ValueError("mask dimensions do not match the texture")
    out = np.array(px, copy=True)
    out[mask] = t.apply(px[mask])
    return TextureImage(out)


# --- image pyramid --------------------------------------------------------------


def gaussian_kernel():
    x = np.arange(-BLUR_RADIUS, BLUR_RADIUS + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / BLUR_SIGMA) ** 2)
    return k / k.sum()


_KERNEL = gaussian_kernel()


def blur(img):
    """Separable 5x5 Gaussian (sigma 1) with edge replication, over the first two axes."""
    out = ndimage.correlate1d(np.asarray(img, dtype=np.float64), _KERNEL, axis=0, mode="nearest")
    return ndimage.correlate1d(out, _KERNEL, axis=1, mode="nearest")


def masked_blur(img, mask):
    """``blur(img * mask) / blur(mask)``; zero where no masked pixel is in reach."""
    img = np.asarray(img, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)
    den = blur(m)
    mw = m[..., None] if img.ndim == 3 else m
    num = blur(img * mw)
    dw = den[..., None] if img.ndim == 3 else den
    out = np.zeros_like(num)
    np.divide(num, dw, out=out, where=dw > 0)
    return out


def downsample(img):
    return img[::2, ::2]


def pyramid_levels(rgb, mask, levels):
    """``[(image, mask), ...]`` with level 0 the input; later levels masked blur + stride 2.

    Stops early (with a warning) once the mask has fewer than four pixels.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    img = np.asarray(rgb, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)
    out = [(img, m)]
    for level in range(1, levels):
        if min(img.shape[:2]) < 2:
            log.warning("pyramid truncated at level %d: image too small", level)
            break
        img = downsample(masked_blur(img, m))
        m = downsample(blur(m.astype(np.float64))) >= MASK_KEEP
        if m.sum() < MIN_MASKED_PIXELS:
            log.warning("pyramid truncated at level %d: mask emptied", level)
            break
        out.append((img, m))
    return out


def pyramid_features(rgb, mask, levels=4):
    """Masked colour statistics per pyramid level."""
    return [color_stats(img, m) for img, m in pyramid_levels(rgb, mask, levels)]


def _stats_distance(a, b):
    dm = a.mean - b.mean
    dc = a.covariance - b.covariance
    return float(dm @ dm + np.sum(dc * dc))


def style_loss(a, b):
    """Sum over views and shared levels of squared mean and covariance differences."""
    if not a or not b or len(a) != len(b):
        raise ValueError("style loss needs two non-empty, equally long view lists")
    total = 0.0
    for fa, fb in zip(a, b):
        for la, lb in zip(fa, fb):
            total += _stats_distance(la, lb)
    return total


def _render_parts(r):
    if hasattr(r, "rgb"):
        return r.rgb, r.mask
    return r


def luminance(rgb):
    return np.asarray(rgb, dtype=np.float64) @ LUMA


def content_loss(a, b):
    """Mean over views of the masked-blurred luminance MSE on the intersection of both masks."""
    if len(a) != len(b):
        raise ValueError("content loss needs matching view lists")
    if not a:
        raise ValueError("content loss needs at least one view")
    total = 0.0
    for ra, rb in zip(a, b):
        rgb_a, mask_a = _render_parts(ra)
        rgb_b, mask_b = _render_parts(rb)
        both = mask_a & mask_b
        if not both.any():
            log.warning("content loss: view with disjoint masks contributes 0")
            continue
        diff = masked_blur(luminance(rgb_a), mask_a) - masked_blur(luminance(rgb_b), mask_b)
        total += float(np.mean(diff[both] ** 2))
    return total / len(a)


# --- analytic gradients for the colour transform -------------------------------------


class _LinearLevel:
    """One pyramid level written as ``I = C L^T + s b^T + K`` in the transform parameters."""

    __slots__ = ("colors", "coverage", "const", "mask")

    def __init__(self, colors, coverage, const, mask):
        self.colors = colors
        self.coverage = coverage
        self.const = const
        self.mask = mask

    def image(self, t):
        return self.colors @ t.linear.T + self.coverage[..., None] * t.bias + self.const

    def down(self):
        m = downsample(blur(self.mask.astype(np.float64))) >= MASK_KEEP
        return _LinearLevel(downsample(masked_blur(self.colors, self.mask)),
                            downsample(masked_blur(self.coverage, self.mask)),
                            downsample(masked_blur(self.const, self.mask)), m)


class RenderStyleObjective:
    """``beta * content + gamma * style`` for renders recoloured by a global affine.

    Built from renders of the current geometry with the *unstylised* texture:
    each foreground pixel's colour ``c`` becomes ``L c + b`` (no clamping), the
    background stays fixed. All moments are then affine in ``(L, b)`` and the
    gradient is exact for this model.
    """

    def __init__(self, base_renders, content_refs, style_refs, beta, gamma, levels=4,
                 background=0.5):
        self.beta = beta
        self.gamma = gamma
        self.views = []
        for r, ref, target_feats in zip(base_renders, content_refs, style_refs):
            rgb, mask = _render_parts(r)
            ref_rgb, ref_mask = _render_parts(ref)
            fg = mask.astype(np.float64)
            colors = np.where(mask[..., None], rgb, 0.0)
            const = np.where(mask[..., None], 0.0, np.broadcast_to(background, rgb.shape))
            level = _LinearLevel(colors, fg, const, mask)
            pyramid = [level]
            for _ in range(1, levels):
                nxt = level.down()
                if nxt.mask.sum() < MIN_MASKED_PIXELS:
                    break
                pyramid.append(nxt)
                level = nxt
            n_lv = min(len(pyramid), len(target_feats))
            both = mask & ref_mask
            content = None
            if both.any():
                content = (masked_blur(colors, mask)[both], masked_blur(fg, mask)[both],
                           masked_blur(luminance(const), mask)[both],
                           masked_blur(luminance(ref_rgb), ref_mask)[both])
            self.views.append((pyramid[:n_lv], target_feats[:n_lv], content))

    def value_and_grad(self, t):
        """Return ``(content, style, grad)`` with ``grad`` shaped like ``ColorTransform.params``."""
        g_lin = np.zeros((3, 3))
        g_b = np.zeros(3)
        style = 0.0
        content = 0.0
        lin = t.linear
        for pyramid, targets, cterm in self.views:
            for level, tgt in zip(pyramid, targets):
                img = level.image(t)
                sel = level.mask
                x = img[sel]
                n = len(x)
                mu = x.mean(axis=0)
                d = x - mu
                cov = d.T @ d / n
                cov = 0.5 * (cov + cov.T)
                dmu = mu - tgt.mean
                dcov = cov - tgt.covariance
                style += float(dmu @ dmu + np.sum(dcov * dcov))
                gx = (2.0 / n) * dmu + (4.0 / n) * (d @ dcov)  # dLoss/dI per masked pixel
                g_lin += self.gamma * gx.T @ level.colors[sel]
                g_b += self.gamma * gx.T @ level.coverage[sel]
            if cterm is not None:
                cb, sb, kb, ref = cterm
                lum = cb @ (lin.T @ LUMA) + sb * (t.bias @ LUMA) + kb
                r = lum - ref
                m = len(r)
                content += float(np.mean(r * r))
                dl = (2.0 / m) * r
                g_lin += (self.beta / len(self.views)) * np.outer(LUMA, dl @ cb)
                g_b += (self.beta / len(self.views)) * LUMA * float(dl @ sb)
        content /= len(self.views)
        return content, style, np.concatenate([g_lin.ravel(), g_b])

    def value(self, t):
        c, s, _ = self.value_and_grad(t)
        return self.beta * c + self.gamma * s
