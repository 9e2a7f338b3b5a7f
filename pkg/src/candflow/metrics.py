"""Endpoint-error metrics and the best-candidate oracle."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .candidates import CandidateSet
from .io import unknown_mask

BOUNDARY_DISTANCE = 10.0
FAST_MOTION = 40.0


def epe_map(est, gt) -> np.ndarray:
    """Per-pixel endpoint error ``|est - gt|``."""
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape:
        raise ValueError(f"flow shapes differ: {est.shape} vs {gt.shape}")
    return np.linalg.norm(est - gt, axis=-1)


def occlusion_boundary(occ) -> np.ndarray:
    """Occluded pixels with at least one visible 4-neighbour."""
    occ = np.asarray(occ).astype(bool)
    visible_nb = ndimage.binary_dilation(~occ, structure=ndimage.generate_binary_structure(2, 1),
                                         border_value=0)
    return occ & visible_nb


def near_boundary(occ, distance: float = BOUNDARY_DISTANCE) -> np.ndarray:
    """Pixels within Euclidean ``distance`` of an occlusion boundary pixel."""
    b = occlusion_boundary(occ)
    if not b.any():
        return np.zeros(b.shape, dtype=bool)
    return ndimage.distance_transform_edt(~b) <= distance


@dataclass
class EvalReport:
    """Mean endpoint errors per pixel category; ``None`` marks an empty or unavailable category."""

    epe_all: float | None
    epe_matched: float | None
    epe_unmatched: float | None
    epe_d0_10: float | None
    epe_s40_plus: float | None
    n_all: int
    n_matched: int | None
    n_unmatched: int | None
    n_d0_10: int | None
    n_s40_plus: int

    def to_dict(self) -> dict:
        return asdict(self)

    def lines(self) -> list[str]:
        out = []
        for key in ("all", "matched", "unmatched", "d0_10", "s40_plus"):
            v = getattr(self, f"epe_{key}")
            n = getattr(self, f"n_{key}")
            out.append(f"epe_{key:<9} {'absent' if v is None else f'{v:.6f}'}  (pixels: {'-' if n is None else n})")
        return out


def _mean(e, mask):
    n = int(mask.sum())
    return (float(e[mask].mean()) if n else None), n


def eval_metrics(est, gt, occ_gt=None) -> EvalReport:
    """EPE report; unknown ground-truth pixels are excluded from every category."""
    e = epe_map(est, gt)
    valid = ~unknown_mask(gt)
    all_, n_all = _mean(e, valid)
    gt_norm = np.linalg.norm(np.where(valid[..., None], gt, 0.0), axis=-1)
    s40, n_s40 = _mean(e, valid & (gt_norm > FAST_MOTION))
    if occ_gt is None:
        return EvalReport(all_, None, None, None, s40, n_all, None, None, None, n_s40)
    occ = np.asarray(occ_gt).astype(bool)
    if occ.shape != e.shape:
        raise ValueError("occlusion map and flow differ in size")
    m, n_m = _mean(e, valid & ~occ)
    u, n_u = _mean(e, valid & occ)
    d, n_d = _mean(e, valid & near_boundary(occ))
    return EvalReport(all_, m, u, d, s40, n_all, n_m, n_u, n_d, n_s40)


def best_candidate_flow(cands: CandidateSet, gt) -> np.ndarray:
    """Per pixel, the candidate closest to ``gt``; ties go to the earliest slot."""
    gt = np.asarray(gt, dtype=np.float64)
    d = np.linalg.norm(cands.vectors - gt[:, :, None, :], axis=-1)
    valid = np.arange(cands.capacity)[None, None, :] < cands.count[..., None]
    d = np.where(valid, d, np.inf)
    k = np.argmin(d, axis=-1)
    return cands.gather(k)
