"""Bilateral weighted median filtering of flow fields."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass(frozen=True)
class MedianConfig:
    """Window radius, spatial and colour sigmas, occlusion-aware support."""

    radius: int = 7
    sigma_s: float = 7.0
    sigma_c: float = 0.1
    occlusion_aware: bool = True

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("radius must be >= 1")
        if self.sigma_s <= 0 or self.sigma_c <= 0:
            raise ValueError("sigmas must be positive")


def weighted_median(values, weights) -> float:
    """Smallest value whose cumulative weight reaches half the total."""
    values = np.asarray(values, dtype=np.float64).ravel()
    weights = np.asarray(weights, dtype=np.float64).ravel()
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    k = int(np.searchsorted(cum, 0.5 * cum[-1], side="left"))
    return float(values[order][min(k, len(values) - 1)])


@njit(cache=True)
def _wmf(flow, guide, occ, radius, sigma_s, sigma_c, aware):
    h, w, _ = flow.shape
    nc = guide.shape[2]
    out = np.empty_like(flow)
    n_max = (2 * radius + 1) ** 2
    vals = np.empty(n_max)
    wts = np.empty(n_max)
    for y in range(h):
        for x in range(w):
            for comp in range(2):
                n = 0
                total = 0.0
                for dy in range(-radius, radius + 1):
                    yy = y + dy
                    if yy < 0 or yy >= h:
                        continue
                    for dx in range(-radius, radius + 1):
                        xx = x + dx
                        if xx < 0 or xx >= w:
                            continue
                        if aware and occ[y, x] == 0 and occ[yy, xx] != 0:
                            continue
                        dc = 0.0
                        for c in range(nc):
                            d = guide[yy, xx, c] - guide[y, x, c]
                            dc += d * d
                        wt = np.exp(-(dx * dx + dy * dy) / (2.0 * sigma_s * sigma_s)
                                    - dc / (2.0 * sigma_c * sigma_c))
                        vals[n] = flow[yy, xx, comp]
                        wts[n] = wt
                        total += wt
                        n += 1
                order = np.argsort(vals[:n], kind="mergesort")
                half = 0.5 * total
                acc = 0.0
                pick = vals[order[n - 1]]
                for k in range(n):
                    acc += wts[order[k]]
                    if acc >= half:
                        pick = vals[order[k]]
                        break
                out[y, x, comp] = pick
    return out


def weighted_median_filter(flow, guide, occ=None, cfg: MedianConfig | None = None) -> np.ndarray:
    """Per-component weighted median with bilateral weights.

    Weights are ``exp(-|dx|^2 / 2 sigma_s^2) * exp(-|dI|^2 / 2 sigma_c^2)``
    with ``dI`` measured on ``guide``. With ``occlusion_aware`` set, occluded
    support pixels are ignored when filtering a visible pixel.
    """
    cfg = cfg or MedianConfig()
    flow = np.ascontiguousarray(flow, dtype=np.float64)
    guide = np.asarray(guide, dtype=np.float64)
    if guide.ndim == 2:
        guide = guide[..., None]
    if guide.shape[:2] != flow.shape[:2]:
        raise ValueError("guide and flow differ in size")
    occ = np.zeros(flow.shape[:2], np.uint8) if occ is None else np.asarray(occ).astype(np.uint8)
    return _wmf(flow, np.ascontiguousarray(guide), occ, cfg.radius, cfg.sigma_s, cfg.sigma_c,
                cfg.occlusion_aware)
