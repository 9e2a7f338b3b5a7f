"""Image containers and low-level image operations.

Images are plain numpy arrays of floats in [0, 1]:

* colour images have shape ``(H, W, 3)`` (RGB),
* scalar images have shape ``(H, W)``,
* gradient fields have shape ``(H, W, 2)`` with ``[..., 0] = d/dx`` (columns)
  and ``[..., 1] = d/dy`` (rows).

Positions are always given as ``(x, y)`` = ``(column, row)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


def as_float_image(img: np.ndarray) -> np.ndarray:
    """Convert an 8-bit or float array to float64 in [0, 1]."""
    img = np.asarray(img)
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    if img.dtype == np.uint16:
        return img.astype(np.float64) / 65535.0
    out = img.astype(np.float64)
    if not np.all(np.isfinite(out)):
        raise ValueError("image contains non-finite samples")
    return out


def to_gray(img: np.ndarray) -> np.ndarray:
    """Luma (Rec. 601) of an RGB image; scalar images pass through."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return img[..., 0] * 0.299 + img[..., 1] * 0.587 + img[..., 2] * 0.114


def to_match_image(img: np.ndarray) -> np.ndarray:
    """Return the (saturation, value) channels of the HSV transform.

    Hue is discarded. A scalar image is treated as gray, so its saturation is 0.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return np.stack([np.zeros_like(img), img], axis=-1)
    vmax = img.max(axis=-1)
    vmin = img.min(axis=-1)
    sat = np.zeros_like(vmax)
    nz = vmax > 0
    sat[nz] = (vmax[nz] - vmin[nz]) / vmax[nz]
    return np.clip(np.stack([sat, vmax], axis=-1), 0.0, 1.0)


def bilinear(img: np.ndarray, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised bilinear sampling with border clamping.

    Args:
        img: ``(H, W)`` or ``(H, W, C)`` array.
        x, y: arrays of column / row positions (broadcastable).

    Returns:
        ``(values, oob)`` where ``oob`` flags positions outside
        ``[0, W-1] x [0, H-1]``. Those are sampled at the clamped position.
    """
    h, w = img.shape[:2]
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    oob = (x < 0) | (x > w - 1) | (y < 0) | (y > h - 1)
    xc = np.clip(x, 0, w - 1)
    yc = np.clip(y, 0, h - 1)
    x0 = np.minimum(np.floor(xc).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(yc).astype(np.intp), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy, oob


def bilinear_sample(img: np.ndarray, pos) -> tuple[float, bool]:
    """Sample a scalar image at one ``(x, y)`` position.

    Returns the interpolated value and the out-of-bounds flag.
    """
    val, oob = bilinear(img, pos[0], pos[1])
    return float(val), bool(oob)


def spatial_gradient(img: np.ndarray) -> np.ndarray:
    """Central differences inside, one-sided differences on the border."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 2:
        raise ValueError(f"gradient needs a 2-D image of at least 2x2, got {img.shape}")
    gy, gx = np.gradient(img)
    return np.stack([gx, gy], axis=-1)


@dataclass(frozen=True)
class SmoothingChoice:
    """Edge-preserving pre-smoothing used before computing edge weights.

    ``kind`` is ``"none"`` or ``"l0"``. The ``l0`` variant runs a fixed number
    of half-quadratic splitting rounds of L0 gradient minimisation, with the
    penalty weight starting at ``2 * lam`` and multiplied by ``kappa`` each round.
    """

    kind: str = "l0"
    kappa: float = 2.0
    lam: float = 0.02
    iters: int = 8

    def __post_init__(self):
        if self.kind not in ("none", "l0"):
            raise ValueError(f"unknown smoothing kind {self.kind!r}")
        if self.kappa <= 1 or self.lam <= 0 or self.iters < 1:
            raise ValueError("l0 smoothing needs kappa > 1, lam > 0, iters >= 1")


def l0_smooth(img: np.ndarray, lam: float = 0.02, kappa: float = 2.0, iters: int = 8) -> np.ndarray:
    """Approximate L0 gradient minimisation (half-quadratic, FFT solve).

    Uses periodic forward differences, so it is exact on the torus and
    close enough elsewhere for edge-weight computation.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    dx = np.zeros((h, w))
    dx[0, 0], dx[0, -1] = -1.0, 1.0
    dy = np.zeros((h, w))
    dy[0, 0], dy[-1, 0] = -1.0, 1.0
    fdx = np.fft.fft2(dx)
    fdy = np.fft.fft2(dy)
    denom_grad = np.abs(fdx) ** 2 + np.abs(fdy) ** 2
    f_img = np.fft.fft2(img)
    s = img.copy()
    beta = 2.0 * lam
    for _ in range(iters):
        gh = np.roll(s, -1, axis=1) - s
        gv = np.roll(s, -1, axis=0) - s
        keep = gh ** 2 + gv ** 2 >= lam / beta
        gh = np.where(keep, gh, 0.0)
        gv = np.where(keep, gv, 0.0)
        num = f_img + beta * (np.conj(fdx) * np.fft.fft2(gh) + np.conj(fdy) * np.fft.fft2(gv))
        s = np.real(np.fft.ifft2(num / (1.0 + beta * denom_grad)))
        beta *= kappa
    return s


def edge_weights(img: np.ndarray, tau: float, smoothing: SmoothingChoice | None = None) -> np.ndarray:
    """Regularisation weights ``exp(-|grad I0|^2 / tau^2)`` in (0, 1].

    ``I0`` is ``img`` after the configured pre-smoothing.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    smoothing = smoothing or SmoothingChoice()
    img = to_gray(img)
    if smoothing.kind == "l0":
        img = l0_smooth(img, smoothing.lam, smoothing.kappa, smoothing.iters)
    g = spatial_gradient(img)
    beta = np.exp(-(g[..., 0] ** 2 + g[..., 1] ** 2) / tau ** 2)
    # keep strictly positive so the weight stays in (0, 1]
    return np.maximum(beta, np.finfo(np.float64).tiny)


def build_pyramid(img: np.ndarray, levels: int, sigma: float = 1.0, min_size: int = 8) -> list[np.ndarray]:
    """Gaussian pyramid, finest level first, halving at each level.

    Levels that would be smaller than ``min_size`` on either side are dropped.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    pyr = [np.asarray(img, dtype=np.float64)]
    for _ in range(levels - 1):
        cur = pyr[-1]
        if min(cur.shape[:2]) // 2 < min_size:
            break
        sig = (sigma, sigma) + (0,) * (cur.ndim - 2)
        blurred = ndimage.gaussian_filter(cur, sig, mode="nearest")
        pyr.append(blurred[::2, ::2])
    return pyr
