"""Occlusion cues and exemplar-based extension of candidate sets."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import ndimage

from .candidates import CAMERA, EXEMPLAR, CandidateSet
from .imaging import to_match_image
from .patches import Correspondence, PatchSpec, SearchStrategy, match_patches

KERNEL_MODES = ("discrete", "raw", "peak")


def backward_correspondences(forward: list[Correspondence], f1, f2,
                             search: SearchStrategy | None = None) -> list[Correspondence]:
    """Best match back into frame 1 of every forward-matched patch."""
    out = []
    for corr in forward:
        ox, oy = corr.source.origin
        tx, ty = corr.translation
        matched = PatchSpec((ox + tx, oy + ty), corr.source.size)
        out.append(match_patches(matched, f2, f1, n=1, search=search)[0])
    return out


def patch_occlusion_map(forward: list[Correspondence], backward: list[Correspondence],
                        nu: float, width: int, height: int):
    """Forward-backward consistency test on patches.

    A patch is occluded when ``|T_f + T_b| > nu``. Returns the pixel map
    (1 inside any occluded patch) and the ``(x, y)`` centres of the occluded
    patches as an ``(N, 2)`` array.
    """
    occ = np.zeros((height, width), dtype=np.uint8)
    centers = []
    for f, b in zip(forward, backward, strict=True):
        s = np.add(f.translation, b.translation)
        if np.hypot(*s) > nu:
            x0, y0, x1, y1 = f.source.rect(width, height)
            occ[y0:y1, x0:x1] = 1
            centers.append(f.source.center(width, height))
    return occ, np.array(centers, dtype=np.float64).reshape(-1, 2)


def _lattice_gauss_norm(sigma: float) -> float:
    r = int(np.ceil(12 * sigma)) + 2
    k = np.arange(-r, r + 1, dtype=np.float64)
    s = np.exp(-k * k / (2 * sigma * sigma)).sum()
    return s * s


def parzen_confidence(centers, sigma: float, width: int, height: int, mode: str = "discrete") -> np.ndarray:
    """Gaussian kernel density of occluded-patch centres.

    ``mode="discrete"`` normalises each kernel to unit sum over the integer
    lattice, so the map is a probability mass over pixels. ``mode="raw"``
    uses ``(1 / sigma) * K(d / sigma)`` with ``K`` the standard 2-D normal
    density. ``mode="peak"`` rescales the density so that its maximum is 1.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if mode not in KERNEL_MODES:
        raise ValueError(f"unknown normalisation {mode!r}")
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    out = np.zeros((height, width))
    if len(centers) == 0:
        return out
    norm = _lattice_gauss_norm(sigma) if mode == "discrete" else 2 * np.pi * sigma
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    for cx, cy in centers:
        gx = np.exp(-(xs - cx) ** 2 / (2 * sigma ** 2))
        gy = np.exp(-(ys - cy) ** 2 / (2 * sigma ** 2))
        out += np.outer(gy, gx)
    out /= norm * len(centers)
    if mode == "peak":
        out /= out.max()
    return out


@dataclass
class SearchBand:
    """Visible pixels near the occluded region; ``degenerate`` when all is occluded."""

    mask: np.ndarray
    degenerate: bool = False

    @property
    def empty(self) -> bool:
        return not self.mask.any()


def build_search_band(occ: np.ndarray, band_radius: int) -> SearchBand:
    """Visible pixels within Chebyshev distance ``band_radius`` of the occluded set."""
    if band_radius < 1:
        raise ValueError("band_radius must be >= 1")
    occ = np.asarray(occ).astype(bool)
    if occ.all():
        warnings.warn("every pixel is occluded; exemplar search band is empty", RuntimeWarning, stacklevel=2)
        return SearchBand(np.zeros_like(occ), degenerate=True)
    near = ndimage.maximum_filter(occ.astype(np.uint8), size=2 * band_radius + 1, mode="constant") > 0
    return SearchBand(near & ~occ)


@njit(cache=True)
def _exemplar_kernel(f, qy, qx, by, bx, half, exclude):
    h, w, nc = f.shape
    nq = qy.size
    nb = by.size
    out = np.full((nq, 2), -1, dtype=np.int64)
    for q in range(nq):
        y0, x0 = qy[q], qx[q]
        best = np.inf
        best_d2 = np.inf
        best_y = -1
        best_x = -1
        for b in range(nb):
            y1, x1 = by[b], bx[b]
            if max(abs(y1 - y0), abs(x1 - x0)) <= exclude[q]:
                continue
            total = 0.0
            n = 0
            for dy in range(-half, half + 1):
                ya, yb = y0 + dy, y1 + dy
                if ya < 0 or ya >= h or yb < 0 or yb >= h:
                    continue
                for dx in range(-half, half + 1):
                    xa, xb = x0 + dx, x1 + dx
                    if xa < 0 or xa >= w or xb < 0 or xb >= w:
                        continue
                    for c in range(nc):
                        total += abs(f[ya, xa, c] - f[yb, xb, c])
                    n += 1
            if n == 0:
                continue
            cost = total / n
            d2 = (y1 - y0) ** 2 + (x1 - x0) ** 2
            better = cost < best
            if cost == best:
                if d2 < best_d2:
                    better = True
                elif d2 == best_d2 and (y1 < best_y or (y1 == best_y and x1 < best_x)):
                    better = True
            if better:
                best = cost
                best_d2 = d2
                best_y = y1
                best_x = x1
        out[q, 0] = best_x
        out[q, 1] = best_y
    return out


def exemplar_match(img1, occ, band: SearchBand, patch_size: int = 11, query=None,
                   exclude_radius=None) -> np.ndarray:
    """Nearest band pixel in HSV saturation/value appearance for each query pixel.

    Args:
        img1: colour (or scalar) first frame.
        occ: occlusion map; the default query set is its occluded pixels.
        band: search band.
        patch_size: odd side of the compared patches (border-clipped, cost
            normalised by the number of compared pixels).
        query: optional boolean mask replacing the default query set.
        exclude_radius: optional ``(H, W)`` int map; band pixels within this
            Chebyshev distance of the query are skipped.

    Returns:
        ``(H, W, 2)`` int array of ``(x, y)`` matches, ``-1`` where undefined.
        Ties go to the closest band pixel, then the first in raster order.
    """
    if band.empty:
        raise ValueError("exemplar search band is empty")
    f = np.ascontiguousarray(to_match_image(img1))
    h, w = f.shape[:2]
    q = np.asarray(occ).astype(bool) if query is None else np.asarray(query).astype(bool)
    qy, qx = np.nonzero(q)
    by, bx = np.nonzero(band.mask)
    if exclude_radius is None:
        excl = np.full(qy.size, -1, dtype=np.int64)
    else:
        excl = np.asarray(exclude_radius, dtype=np.int64)[qy, qx]
    res = _exemplar_kernel(f, qy.astype(np.int64), qx.astype(np.int64), by.astype(np.int64),
                           bx.astype(np.int64), patch_size // 2, excl)
    m = np.full((h, w, 2), -1, dtype=np.int64)
    m[qy, qx] = res
    return m


def extend_candidates(cands: CandidateSet, occ, match: np.ndarray | None, cam: np.ndarray) -> CandidateSet:
    """Copy exemplar candidates into occluded pixels, then add the camera vector everywhere.

    ``match`` may be ``None`` (or undefined on some occluded pixels) when no
    exemplar search was possible; those pixels only gain the camera vector.
    """
    out = cands.copy()
    h, w = cands.shape
    occ = np.asarray(occ).astype(bool)
    if match is not None:
        oy, ox = np.nonzero(occ & (match[..., 0] >= 0))
        sx, sy = match[oy, ox, 0], match[oy, ox, 1]
        out.exemplar_source[oy, ox, 0] = sx
        out.exemplar_source[oy, ox, 1] = sy
        src_count = cands.count[sy, sx]
        for k in range(int(src_count.max()) if src_count.size else 0):
            sel = src_count > k
            slots = out.insert(oy[sel], ox[sel], cands.vectors[sy[sel], sx[sel], k], EXEMPLAR)
            out.exemplar_slots[oy[sel], ox[sel], k] = slots
    yy, xx = np.mgrid[0:h, 0:w]
    out.camera_slot = out.insert(yy, xx, np.asarray(cam, dtype=np.float64).reshape(-1, 2), CAMERA).reshape(h, w)
    return out
