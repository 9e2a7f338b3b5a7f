"""Robust parametric motion estimation.

Affine models are fitted per patch pair and the 8-parameter quadratic model
on the whole frame, both by coarse-to-fine incremental IRLS with the Tukey
biweight.

Parameter layouts (flow ``(u, v)`` at coordinates ``(x1, x2)``):

* affine ``(a1..a6)``: ``u = a1 + a2 x1 + a3 x2``, ``v = a4 + a5 x1 + a6 x2``
* quadratic ``(c1, l1, l2, c2, l3, l4, q1, q2)``:
  ``u = c1 + l1 x1 + l2 x2 + q1 x1^2 + q2 x1 x2``,
  ``v = c2 + l3 x1 + l4 x2 + q1 x1 x2 + q2 x2^2``.
  The first six entries therefore read as an affine model.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .imaging import bilinear, build_pyramid, spatial_gradient

TUKEY_C = 4.685
MAD_TO_SIGMA = 1.4826


@dataclass(frozen=True)
class RobustConfig:
    """IRLS settings.

    ``tukey_scale=None`` selects the MAD rule: ``c = 4.685 * 1.4826 * MAD``
    of the current residuals, re-estimated every pass but never allowed to
    grow within a pyramid level (which keeps the robust energy monotone).
    """

    tukey_scale: float | None = None
    min_scale: float = 1e-4
    max_irls_iters: int = 20
    pyramid_levels: int = 3
    convergence_tol: float = 1e-3
    interp_order: int = 3

    def __post_init__(self):
        if self.max_irls_iters < 1 or self.pyramid_levels < 1:
            raise ValueError("max_irls_iters and pyramid_levels must be >= 1")
        if self.convergence_tol <= 0 or self.min_scale <= 0:
            raise ValueError("convergence_tol and min_scale must be positive")
        if self.tukey_scale is not None and self.tukey_scale <= 0:
            raise ValueError("tukey_scale must be positive")
        if self.interp_order not in (1, 3):
            raise ValueError("interp_order must be 1 (bilinear) or 3 (cubic spline)")


@dataclass
class ParametricFit:
    """Result of an IRLS fit.

    ``trace`` holds one ``(level, energy_before, energy_after, scale)`` tuple
    per accepted or rejected IRLS pass; energies use the Tukey rho at the
    pass's scale.
    """

    theta: np.ndarray
    low_confidence: bool = False
    center: tuple[float, float] = (0.0, 0.0)
    trace: list = field(default_factory=list)


def affine_flow_at(theta, x) -> np.ndarray:
    """Evaluate an affine model at ``x = (x1, x2)`` (arrays broadcast)."""
    a = np.asarray(theta, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([a[0] + a[1] * x1 + a[2] * x2, a[3] + a[4] * x1 + a[5] * x2], axis=-1)


def quadratic_flow_at(theta, x) -> np.ndarray:
    q = np.asarray(theta, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    x1, x2 = x[..., 0], x[..., 1]
    u = q[0] + q[1] * x1 + q[2] * x2 + q[6] * x1 * x1 + q[7] * x1 * x2
    v = q[3] + q[4] * x1 + q[5] * x2 + q[6] * x1 * x2 + q[7] * x2 * x2
    return np.stack([u, v], axis=-1)


def camera_flow_field(q, width: int, height: int) -> np.ndarray:
    """Quadratic motion field on the pixel grid, shape ``(H, W, 2)``."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    return quadratic_flow_at(q, np.stack([xx, yy], axis=-1))


def tukey_rho(r, c: float):
    """Tukey biweight penalty, saturating at ``c^2 / 6``."""
    r = np.asarray(r, dtype=np.float64)
    z = np.minimum((r / c) ** 2, 1.0)
    return c * c / 6.0 * (1.0 - (1.0 - z) ** 3)


def tukey_weight(r, c: float):
    """IRLS weight ``psi(r) / r = (1 - (r/c)^2)^2`` inside the cutoff, 0 outside."""
    r = np.asarray(r, dtype=np.float64)
    z = (r / c) ** 2
    return np.where(z <= 1.0, (1.0 - z) ** 2, 0.0)


def _design(coords: np.ndarray, n_params: int) -> np.ndarray:
    """Jacobian of the flow w.r.t. the parameters, shape ``(N, 2, p)``."""
    x1, x2 = coords[:, 0], coords[:, 1]
    one, zero = np.ones_like(x1), np.zeros_like(x1)
    rows_u = [one, x1, x2, zero, zero, zero]
    rows_v = [zero, zero, zero, one, x1, x2]
    if n_params == 8:
        rows_u += [x1 * x1, x1 * x2]
        rows_v += [x1 * x2, x2 * x2]
    return np.stack([np.stack(rows_u, -1), np.stack(rows_v, -1)], axis=1)


class _Level:
    """Pixels of one pyramid level prepared for IRLS."""

    def __init__(self, i1_vals, pix, coords, img2, offset, frame_origin, scale, frame_shape, order):
        self.i1 = i1_vals
        self.pix = pix            # positions in img2 coordinates (before warping)
        self.coords = coords      # model coordinates
        self.order = order
        grad2 = spatial_gradient(img2)
        if order == 3:
            self.img2 = ndimage.spline_filter(img2, order=3, mode="nearest")
            self.grad2 = [ndimage.spline_filter(grad2[..., k], order=3, mode="nearest") for k in range(2)]
        else:
            self.img2 = img2
            self.grad2 = grad2
        self.offset = offset      # constant displacement added before the model
        self.frame_origin = frame_origin  # img2 origin in full-res frame-2 pixels
        self.scale = scale        # full-res pixels per level pixel
        self.frame_shape = frame_shape

    def sample(self, img, pos):
        if self.order == 1:
            return bilinear(img, pos[:, 0], pos[:, 1])[0]
        h, w = img.shape
        xy = [np.clip(pos[:, 1], 0, h - 1), np.clip(pos[:, 0], 0, w - 1)]
        return ndimage.map_coordinates(img, xy, order=3, mode="nearest", prefilter=False)

    def gradient(self, pos):
        if self.order == 1:
            return bilinear(self.grad2, pos[:, 0], pos[:, 1])[0]
        return np.stack([self.sample(g, pos) for g in self.grad2], -1)

    def residuals(self, flow):
        pos = self.pix + self.offset + flow
        vals = self.sample(self.img2, pos)
        full = self.frame_origin + pos * self.scale
        h, w = self.frame_shape
        oob = (full[:, 0] < 0) | (full[:, 0] > w - 1) | (full[:, 1] < 0) | (full[:, 1] > h - 1)
        r = vals - self.i1
        if not np.all(np.isfinite(r)):
            raise FloatingPointError("non-finite residuals in IRLS")
        return r, oob, pos


def _energy(r, oob, c):
    # out-of-bounds pixels keep the cost of their border-clamped residual, so
    # the energy stays continuous when a pixel crosses the frame edge
    return float(tukey_rho(r, c).sum())


def _irls_level(lvl: _Level, theta, n_params, cfg: RobustConfig, level_idx, trace):
    J = _design(lvl.coords, n_params)
    c_prev = np.inf
    low_conf = False
    for _ in range(cfg.max_irls_iters):
        flow = np.einsum("nkp,p->nk", J, theta)
        r, oob, pos = lvl.residuals(flow)
        valid = ~oob
        if valid.sum() < n_params:
            low_conf = True
            break
        if cfg.tukey_scale is not None:
            c = cfg.tukey_scale
        else:
            mad = np.median(np.abs(r[valid] - np.median(r[valid])))
            c = min(c_prev, max(cfg.min_scale, TUKEY_C * MAD_TO_SIGMA * mad))
        c_prev = c
        wts = tukey_weight(r, c) * valid
        g = lvl.gradient(pos)
        A = np.einsum("nk,nkp->np", g, J)
        sw = np.sqrt(wts)
        M = A * sw[:, None]
        if np.count_nonzero(wts) < n_params:
            low_conf = True
            break
        # column scaling keeps the polynomial terms well conditioned
        norms = np.linalg.norm(M, axis=0)
        if np.any(norms <= 1e-12):
            low_conf = True
            break
        Ms = M / norms
        sv = np.linalg.svd(Ms, compute_uv=False)
        if sv[-1] < 1e-8 * sv[0]:
            low_conf = True
            break
        delta = np.linalg.lstsq(Ms, -(r * sw), rcond=None)[0] / norms
        e_old = _energy(r, oob, c)
        step = 1.0
        accepted = False
        while step >= 1.0 / 64:
            cand = theta + step * delta
            r_new, oob_new, _ = lvl.residuals(np.einsum("nkp,p->nk", J, cand))
            e_new = _energy(r_new, oob_new, c)
            if e_new <= e_old:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            trace.append((level_idx, e_old, e_old, c))
            break
        trace.append((level_idx, e_old, e_new, c))
        theta = cand
        if np.linalg.norm(step * delta) < cfg.convergence_tol:
            break
    return theta, low_conf


def _scale_theta(theta, factor, coord_factor):
    """Re-express a model when flow and coordinates are both scaled.

    ``flow' = factor * flow(x' / coord_factor)``.
    """
    t = np.array(theta, dtype=np.float64)
    t[[0, 3]] *= factor
    t[[1, 2, 4, 5]] *= factor / coord_factor
    if t.size == 8:
        t[[6, 7]] *= factor / coord_factor ** 2
    return t


def _fit(pyr1, pyr2, regions, offset0, center0, n_params, cfg, frame_shape, origin2):
    """Shared coarse-to-fine driver.

    ``regions`` gives, per level, the slice of the level-1 image holding the
    support; ``offset0`` is the constant full-res displacement between img1
    and img2 coordinates.
    """
    theta = np.zeros(n_params)
    trace: list = []
    low = False
    levels = len(pyr1)
    for lev in range(levels - 1, -1, -1):
        f = 2.0 ** lev
        ys, xs = regions[lev]
        im1 = pyr1[lev]
        yy, xx = np.mgrid[ys, xs]
        pix = np.stack([xx.ravel(), yy.ravel()], -1).astype(np.float64)
        i1_vals = im1[yy, xx].ravel()
        coords = pix - np.asarray(center0) / f
        lvl = _Level(i1_vals, pix, coords, pyr2[lev], np.asarray(offset0) / f,
                     np.asarray(origin2, dtype=np.float64), f, frame_shape, cfg.interp_order)
        if lev != levels - 1:
            theta = _scale_theta(theta, 2.0, 2.0)
        theta, low = _irls_level(lvl, theta, n_params, cfg, lev, trace)
        if low and lev == 0:
            break
    return theta, low, trace


def _levels_for(size: int, wanted: int, min_size: int = 8) -> int:
    n = 1
    while n < wanted and size / 2 ** n >= min_size:
        n += 1
    return n


def estimate_affine(frame1, frame2, patch, w_init=(0, 0), cfg: RobustConfig | None = None) -> ParametricFit:
    """Fit the affine refinement of an integer patch correspondence.

    Args:
        frame1, frame2: scalar images.
        patch: object with ``origin`` ``(x, y)`` and ``size``, or a tuple
            ``(x0, y0, size)``; clipped to the frame.
        w_init: integer translation from frame-1 patch to frame-2 patch.
        cfg: IRLS settings.

    Returns:
        The refinement model in coordinates relative to the (clipped) patch
        centre. ``w_init`` is not included. A textureless patch returns a
        zero model with ``low_confidence`` set.
    """
    cfg = cfg or RobustConfig()
    frame1 = np.asarray(frame1, dtype=np.float64)
    frame2 = np.asarray(frame2, dtype=np.float64)
    h, w = frame1.shape
    if hasattr(patch, "origin"):
        (x0, y0), size = patch.origin, patch.size
    else:
        x0, y0, size = patch
    x0c, y0c = max(int(x0), 0), max(int(y0), 0)
    x1c, y1c = min(int(x0) + size, w), min(int(y0) + size, h)
    pw, ph = x1c - x0c, y1c - y0c
    if pw < 8 or ph < 8:
        raise ValueError("affine fit needs a patch with at least 8x8 valid pixels")
    center = (x0c + (pw - 1) / 2.0, y0c + (ph - 1) / 2.0)
    tx, ty = int(round(w_init[0])), int(round(w_init[1]))
    levels = _levels_for(min(pw, ph), cfg.pyramid_levels)
    margin = 4 * 2 ** (levels - 1)
    # frame-2 crop around the displaced patch, clamp-extended at the border
    cy = np.clip(np.arange(y0c + ty - margin, y1c + ty + margin), 0, frame2.shape[0] - 1)
    cx = np.clip(np.arange(x0c + tx - margin, x1c + tx + margin), 0, frame2.shape[1] - 1)
    crop2 = frame2[np.ix_(cy, cx)]
    crop1 = frame1[y0c:y1c, x0c:x1c]
    pyr1 = build_pyramid(crop1, levels, min_size=1)
    pyr2 = build_pyramid(crop2, levels, min_size=1)
    regions = [(slice(0, p.shape[0]), slice(0, p.shape[1])) for p in pyr1]
    # crop1 pixel (i, j) sits at crop2 pixel (i + margin, j + margin)
    local_center = (center[0] - x0c, center[1] - y0c)
    origin2 = (x0c + tx - margin, y0c + ty - margin)
    theta, low, trace = _fit(pyr1, pyr2, regions, (margin, margin), local_center, 6, cfg,
                             frame2.shape, origin2)
    if low:
        theta = np.zeros(6)
    return ParametricFit(theta=theta, low_confidence=low, center=center, trace=trace)


def estimate_dominant_quadratic(i1, i2, cfg: RobustConfig | None = None) -> ParametricFit:
    """Robust 8-parameter quadratic fit of the dominant motion over the frame.

    Coordinates are image-global pixel positions ``(x, y)``.
    """
    cfg = cfg or RobustConfig(pyramid_levels=4)
    i1 = np.asarray(i1, dtype=np.float64)
    i2 = np.asarray(i2, dtype=np.float64)
    if i1.shape != i2.shape:
        raise ValueError("frames differ in size")
    if min(i1.shape) < 32:
        raise ValueError("dominant motion estimation needs frames of at least 32x32")
    pyr1 = build_pyramid(i1, cfg.pyramid_levels)
    pyr2 = build_pyramid(i2, cfg.pyramid_levels)
    regions = [(slice(0, p.shape[0]), slice(0, p.shape[1])) for p in pyr1]
    theta, low, trace = _fit(pyr1, pyr2, regions, (0.0, 0.0), (0.0, 0.0), 8, cfg, i2.shape, (0.0, 0.0))
    if low:
        theta = np.zeros(8)
    return ParametricFit(theta=theta, low_confidence=low, center=(0.0, 0.0), trace=trace)
