"""Deterministic image resampling: area-average down, bilinear up.

Both kernels are separable and built from explicit weight matrices, so a
result is a pair of matrix products per channel and reproducible to the bit
across platforms. Intensities round half-up back to uint8.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DegenerateDimensions


def _as_image(img) -> np.ndarray:
    a = np.asarray(img)
    if a.ndim != 3:
        raise DegenerateDimensions(f"image must be HxWxC, got shape {a.shape}")
    return a


def _to_u8(x: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(x, 0.0, 255.0) + 0.5).astype(np.uint8)


def _area_weights(n_out: int, n_in: int) -> np.ndarray:
    """Row i holds the normalized overlap of output cell i with input cells."""
    r = n_in / n_out
    w = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = i * r, (i + 1) * r
        j0, j1 = int(math.floor(lo)), int(math.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / r


def _bilinear_weights(n_out: int, n_in: int) -> np.ndarray:
    """Pixel-center linear interpolation weights, edge-clamped."""
    w = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        src = (i + 0.5) * scale - 0.5
        src = min(max(src, 0.0), n_in - 1.0)
        j = int(math.floor(src))
        t = src - j
        if j + 1 < n_in:
            w[i, j] = 1.0 - t
            w[i, j + 1] = t
        else:
            w[i, j] = 1.0
    return w


def downsample(img, s: float) -> np.ndarray:
    """Area-average to (floor(s*H), floor(s*W)); s=1 is the identity."""
    a = _as_image(img)
    if not (0.0 < s <= 1.0):
        raise DegenerateDimensions(f"scale must lie in (0, 1], got {s}")
    if s == 1.0:
        return a.copy()
    h, w = a.shape[:2]
    oh, ow = int(math.floor(s * h)), int(math.floor(s * w))
    if oh < 1 or ow < 1:
        raise DegenerateDimensions(f"scale {s} collapses {h}x{w} below 1x1")
    wh = _area_weights(oh, h)
    ww = _area_weights(ow, w)
    out = np.einsum("ij,jkc,lk->ilc", wh, a.astype(float), ww)
    return _to_u8(out)


def upsample(img, target_h: int, target_w: int) -> np.ndarray:
    """Bilinear resize to (target_h, target_w); identity when dims match."""
    a = _as_image(img)
    if target_h < 1 or target_w < 1:
        raise DegenerateDimensions(f"target {target_h}x{target_w} below 1x1")
    h, w = a.shape[:2]
    if (h, w) == (target_h, target_w):
        return a.copy()
    wh = _bilinear_weights(target_h, h)
    ww = _bilinear_weights(target_w, w)
    out = np.einsum("ij,jkc,lk->ilc", wh, a.astype(float), ww)
    return _to_u8(out)
