"""End-to-end two-frame flow estimation.

Stage order:

1. N-best patch matching over several patch sizes, each match refined by a
   robust affine fit, giving per-pixel candidate sets.
2. Occlusion cues from forward-backward patch consistency, a density map of
   occluded patches, exemplar matches for occluded pixels and the dominant
   (camera) motion, used to extend the candidate sets.
3. Aggregation by fusion moves with joint occlusion estimation.
4. Bilateral weighted median post-processing.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .aggregation import AggregationInputs, AggregationResult, FrameData, aggregate
from .candidates import CandidateSet, collect_candidates
from .config import RunConfig
from .imaging import SmoothingChoice, as_float_image, edge_weights, to_gray, to_match_image
from .occlusion import (backward_correspondences, build_search_band, exemplar_match, extend_candidates,
                        parzen_confidence, patch_occlusion_map)
from .parametric import RobustConfig, camera_flow_field, estimate_affine, estimate_dominant_quadratic
from .patches import PatchSet, SearchStrategy, build_patch_set, match_patch_set
from .postproc import MedianConfig, weighted_median_filter

log = logging.getLogger(__name__)


@dataclass
class CandidateStage:
    """Outputs of the candidate-generation stage."""

    patch_set: PatchSet
    correspondences: dict
    initial: CandidateSet
    extended: CandidateSet
    occ_patch: np.ndarray
    centers: np.ndarray
    omega: np.ndarray
    exemplar: np.ndarray | None
    camera: np.ndarray


@dataclass
class FlowResult:
    flow: np.ndarray
    occ: np.ndarray
    raw_flow: np.ndarray
    stage: CandidateStage
    aggregation: AggregationResult


def _search(cfg: RunConfig) -> SearchStrategy:
    m = cfg.matching
    return SearchStrategy(m.strategy, m.radius, m.iters, m.seed, m.min_overlap)


def _check_frames(img1, img2):
    img1, img2 = as_float_image(img1), as_float_image(img2)
    if img1.shape[:2] != img2.shape[:2]:
        raise ValueError("frames differ in size")
    if min(img1.shape[:2]) < 32:
        raise ValueError("frames must be at least 32x32")
    return img1, img2


def build_candidates(img1, img2, cfg: RunConfig | None = None) -> CandidateStage:
    """Run patch matching, affine refinement and the occlusion-driven extension."""
    cfg = (cfg or RunConfig()).validate()
    img1, img2 = _check_frames(img1, img2)
    g1, g2 = to_gray(img1), to_gray(img2)
    f1, f2 = to_match_image(img1), to_match_image(img2)
    h, w = g1.shape
    pc = cfg.patches
    sizes = tuple(sorted(pc.sizes))
    ps = build_patch_set(w, h, sizes, pc.overlap)
    search = _search(cfg)
    corr = match_patch_set(ps, f1, f2, pc.n_matches, pc.min_sep, search)
    log.info("matched %d patches", len(corr))

    rc = RobustConfig(pyramid_levels=cfg.parametric.pyramid_levels,
                      max_irls_iters=cfg.parametric.max_irls_iters,
                      interp_order=cfg.parametric.interp_order)
    fits = {}
    for pi, lst in corr.items():
        for mi, c in enumerate(lst):
            fits[(pi, mi)] = estimate_affine(g1, g2, ps.specs[pi], c.translation, rc)
    initial = collect_candidates(ps, corr, fits)

    s1 = sizes[0]
    fwd = [corr[i][0] for i in ps.indices_of_size(s1)]
    bwd = backward_correspondences(fwd, f1, f2, search)
    oc = cfg.occlusion
    occ_p, centers = patch_occlusion_map(fwd, bwd, oc.nu, w, h)
    omega = parzen_confidence(centers, oc.sigma or float(s1), w, h, oc.kernel)
    exemplar = None
    if occ_p.any():
        band = build_search_band(occ_p, oc.band_radius)
        if not band.empty:
            exemplar = exemplar_match(img1, occ_p, band, oc.exemplar_patch)
        else:
            log.warning("exemplar search band is empty; occluded pixels only gain the camera candidate")

    qcfg = RobustConfig(pyramid_levels=cfg.parametric.quadratic_levels,
                        max_irls_iters=cfg.parametric.max_irls_iters,
                        interp_order=cfg.parametric.interp_order)
    camera = camera_flow_field(estimate_dominant_quadratic(g1, g2, qcfg).theta, w, h)
    extended = extend_candidates(initial, occ_p, exemplar, camera)
    return CandidateStage(ps, corr, initial, extended, occ_p, centers, omega, exemplar, camera)


def estimate_flow(img1, img2, cfg: RunConfig | None = None, verbose: bool = False, emit=None,
                  stage: CandidateStage | None = None) -> FlowResult:
    """Estimate the flow from ``img1`` to ``img2`` and the occlusion map of ``img1``."""
    cfg = (cfg or RunConfig()).validate()
    img1, img2 = _check_frames(img1, img2)
    stage = stage or build_candidates(img1, img2, cfg)
    ac, oc = cfg.aggregation, cfg.occlusion
    params = ac.energy_params()
    sm = cfg.smoothing
    beta = edge_weights(img1, params.tau, SmoothingChoice(sm.kind, sm.kappa, sm.lam, sm.iters))
    h, w = stage.camera.shape[:2]
    match0 = stage.exemplar if stage.exemplar is not None else np.full((h, w, 2), -1, np.int64)
    inputs = AggregationInputs(stage.extended, stage.patch_set, FrameData.from_images(img1, img2), img1,
                               stage.omega, beta, stage.camera, oc.band_radius, oc.exemplar_patch,
                               oc.self_exclusion)
    occ0 = stage.occ_patch if ac.occlusion else np.zeros((h, w), np.uint8)
    agg = aggregate(inputs, params, occ0, match0, ac.iterations, verbose=verbose, emit=emit)
    flow = agg.flow
    if cfg.median.enabled:
        md = cfg.median
        flow = weighted_median_filter(flow, img1, agg.occ,
                                      MedianConfig(md.radius, md.sigma_s, md.sigma_c, md.occlusion_aware))
    return FlowResult(flow, agg.occ, agg.flow, stage, agg)
