"""Synthetic image pairs with known flow and occlusion, shared by the tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass
class SyntheticPair:
    img1: np.ndarray
    img2: np.ndarray
    flow: np.ndarray
    occ: np.ndarray


def colour_texture(height: int, width: int, seed: int = 0, sigma: float = 1.5) -> np.ndarray:
    """Smooth random RGB texture with each channel stretched to [0, 1]."""
    rng = np.random.default_rng(seed)
    chans = []
    for _ in range(3):
        t = ndimage.gaussian_filter(rng.random((height, width)), sigma)
        chans.append((t - t.min()) / (t.max() - t.min()))
    return np.stack(chans, -1)


def sinusoid_texture(height: int, width: int, seed: int = 0, n: int = 12, fmax: float = 0.12,
                     A=None, b=(0.0, 0.0)) -> np.ndarray:
    """Sum of random sinusoids evaluated at ``A^-1 (x - b)``.

    The value at any real position is known analytically, so warped frames
    carry no resampling error.
    """
    rng = np.random.default_rng(seed)
    fr = rng.uniform(-fmax, fmax, (n, 2))
    ph = rng.uniform(0, 2 * np.pi, n)
    am = rng.uniform(0.5, 1.0, n)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    Ai = np.linalg.inv(np.eye(2) if A is None else np.asarray(A, dtype=np.float64))
    px = Ai[0, 0] * (xx - b[0]) + Ai[0, 1] * (yy - b[1])
    py = Ai[1, 0] * (xx - b[0]) + Ai[1, 1] * (yy - b[1])
    v = sum(am[k] * np.sin(2 * np.pi * (fr[k, 0] * px + fr[k, 1] * py) + ph[k]) for k in range(n))
    return np.clip(0.5 + v / am.sum(), 0.0, 1.0)


def translation_pair(size: int = 64, t=(3, 2), seed: int = 0) -> SyntheticPair:
    """Colour texture under an integer global translation ``t = (tx, ty)``."""
    tx, ty = t
    pad = max(abs(tx), abs(ty)) + 2
    big = colour_texture(size + 2 * pad, size + 2 * pad, seed)
    img1 = big[pad:pad + size, pad:pad + size]
    img2 = big[pad - ty:pad - ty + size, pad - tx:pad - tx + size]
    flow = np.zeros((size, size, 2))
    flow[..., 0], flow[..., 1] = tx, ty
    return SyntheticPair(img1, img2, flow, np.zeros((size, size), np.uint8))


def affine_pair(size: int = 64, A=((1.02, 0.01), (-0.01, 0.98)), b=(1.5, -1.0), seed: int = 0) -> SyntheticPair:
    """Analytic colour texture under a global affine warp ``p -> A (p - c) + c + b``.

    ``c`` is the image centre, so the linear part does not push content far
    out of the frame.
    """
    A = np.asarray(A, dtype=np.float64)
    c = np.array([(size - 1) / 2.0, (size - 1) / 2.0])
    off = c + np.asarray(b) - A @ c
    img1 = np.stack([sinusoid_texture(size, size, seed + k) for k in range(3)], -1)
    img2 = np.stack([sinusoid_texture(size, size, seed + k, A=A, b=off) for k in range(3)], -1)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    p = np.stack([xx, yy], -1)
    flow = p @ A.T + off - p
    return SyntheticPair(img1, img2, flow, np.zeros((size, size), np.uint8))


def two_layer_pair(size: int = 96, fg_motion=(8, 0), bg_motion=(-2, 0), box=(24, 28, 40, 40),
                   seed: int = 0) -> SyntheticPair:
    """Textured square translating over a textured background.

    ``box = (x0, y0, width, height)`` is the square in frame 1. The
    occlusion map marks frame-1 pixels hidden in frame 2: background covered
    by the moved square or pushed out of the frame.
    """
    fx, fy = fg_motion
    bx, by = bg_motion
    pad = max(abs(bx), abs(by)) + 2
    # the layers differ in brightness and saturation, as distinct objects usually do
    bg = 0.1 + 0.45 * colour_texture(size + 2 * pad, size + 2 * pad, seed)[..., :1]
    bg = bg * np.array([1.0, 0.95, 0.9])
    t = colour_texture(size, size, seed + 100, sigma=1.2)
    fg = np.stack([0.55 + 0.45 * t[..., 0], 0.45 + 0.45 * t[..., 1], 0.1 * t[..., 2]], -1)
    x0, y0, bw, bh = box
    yy, xx = np.mgrid[0:size, 0:size]

    def inside(x, y, ox, oy):
        return (x >= x0 + ox) & (x < x0 + ox + bw) & (y >= y0 + oy) & (y < y0 + oy + bh)

    fg1 = inside(xx, yy, 0, 0)
    fg2 = inside(xx, yy, fx, fy)
    img1 = bg[pad:pad + size, pad:pad + size].copy()
    img1[fg1] = fg[yy[fg1] - y0, xx[fg1] - x0]
    img2 = bg[pad - by:pad - by + size, pad - bx:pad - bx + size].copy()
    img2[fg2] = fg[yy[fg2] - y0 - fy, xx[fg2] - x0 - fx]
    flow = np.zeros((size, size, 2))
    flow[..., 0] = np.where(fg1, fx, bx)
    flow[..., 1] = np.where(fg1, fy, by)
    tx, ty = xx + flow[..., 0], yy + flow[..., 1]
    out = (tx < 0) | (tx > size - 1) | (ty < 0) | (ty > size - 1)
    covered = ~fg1 & inside(tx, ty, fx, fy)
    return SyntheticPair(img1, img2, flow, (covered | out).astype(np.uint8))
