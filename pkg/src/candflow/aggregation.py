"""Global aggregation of candidate flows with joint occlusion estimation.

The flow ``w`` and the occlusion map ``o`` minimise

    E(w, o) = sum_x (1 - o) rho_vis + lambda1 o rho_occ + lambda2 omega o
              + lambda3 sum_<x,y> beta(x) phi(w(x) - w(y))
              + lambda4 sum_<x,y> [o(x) != o(y)]

over 8-connected cliques, with ``w(x)`` restricted to the candidate set of
each pixel. Minimisation alternates QPBO fusion moves over ``w`` and an exact
min cut over ``o``.

Because all flow values are candidate slots, the visibility cost of every
``(pixel, slot)`` pair is computed once and moves work on slot indices.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .candidates import CandidateSet
from .discrete import UNLABELED, BinaryMRF, max_flow_solve, qpbo_solve
from .imaging import bilinear, spatial_gradient, to_gray
from .occlusion import build_search_band, exemplar_match
from .patches import PatchSet

log = logging.getLogger(__name__)

PROFILES = {
    "sintel": dict(lambda1=5.0, lambda2=50.0, lambda3=500.0, lambda4=20.0),
    "middlebury": dict(lambda1=2.0, lambda2=10.0, lambda3=250.0, lambda4=4.5),
}
REG_PENALTIES = ("l1-of-norm", "as-printed-sq")
MONOTONE_SLACK = 1e-9


@dataclass(frozen=True)
class EnergyParams:
    """Weights of the aggregation energy.

    ``intensity_scale`` multiplies the data residuals; with 255 the data term
    is measured in 8-bit grey levels, the scale the profile weights were
    designed for, while images stay normalised to [0, 1].
    """

    lambda1: float = 5.0
    lambda2: float = 50.0
    lambda3: float = 500.0
    lambda4: float = 20.0
    gamma: float = 1.0
    tau: float = 0.02
    intensity_scale: float = 255.0
    reg_penalty: str = "l1-of-norm"
    oob_percentile: float = 90.0

    def __post_init__(self):
        vals = (self.lambda1, self.lambda2, self.lambda3, self.lambda4, self.gamma, self.intensity_scale)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ValueError("energy weights must be finite and non-negative")
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ValueError("tau must be positive")
        if self.reg_penalty not in REG_PENALTIES:
            raise ValueError(f"reg_penalty must be one of {REG_PENALTIES}")
        if not 0 <= self.oob_percentile <= 100:
            raise ValueError("oob_percentile must lie in [0, 100]")

    @classmethod
    def profile(cls, name: str, **overrides) -> "EnergyParams":
        try:
            base = PROFILES[name]
        except KeyError:
            raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
        return cls(**{**base, **overrides})

    def without_occlusion(self) -> "EnergyParams":
        """Ablation setting: occlusion terms and occlusion smoothness switched off."""
        return replace(self, lambda1=0.0, lambda2=0.0, lambda4=0.0)


@dataclass
class FrameData:
    """Scalar frames with their gradients, as used by the data term."""

    i1: np.ndarray
    i2: np.ndarray
    g1: np.ndarray
    g2: np.ndarray

    @classmethod
    def from_images(cls, img1, img2) -> "FrameData":
        i1, i2 = to_gray(img1), to_gray(img2)
        if i1.shape != i2.shape:
            raise ValueError("frames differ in size")
        return cls(i1, i2, spatial_gradient(i1), spatial_gradient(i2))

    @property
    def shape(self) -> tuple[int, int]:
        return self.i1.shape


def rho_vis_field(frames: FrameData, flow: np.ndarray, gamma: float, scale: float = 1.0,
                  rho_oob: float = np.nan) -> tuple[np.ndarray, np.ndarray]:
    """Visibility data cost of a whole flow field.

    Returns the cost map and the out-of-frame mask; out-of-frame pixels get
    ``rho_oob``.
    """
    h, w = frames.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    tx = xx + flow[..., 0]
    ty = yy + flow[..., 1]
    v2, oob = bilinear(frames.i2, tx, ty)
    gx, _ = bilinear(frames.g2[..., 0], tx, ty)
    gy, _ = bilinear(frames.g2[..., 1], tx, ty)
    r = np.abs(v2 - frames.i1)
    if gamma:
        r = r + gamma * (np.abs(gx - frames.g1[..., 0]) + np.abs(gy - frames.g1[..., 1]))
    r = scale * r
    return np.where(oob, rho_oob, r), oob


def rho_vis(x, w_x, frames: FrameData, gamma: float, scale: float = 1.0, rho_oob: float = np.nan) -> float:
    """Visibility data cost at one pixel ``x = (col, row)`` for vector ``w_x``."""
    px, py = int(x[0]), int(x[1])
    tx = np.array([px + float(w_x[0])])
    ty = np.array([py + float(w_x[1])])
    v2, oob = bilinear(frames.i2, tx, ty)
    if oob[0]:
        return float(rho_oob)
    r = abs(v2[0] - frames.i1[py, px])
    if gamma:
        gx, _ = bilinear(frames.g2[..., 0], tx, ty)
        gy, _ = bilinear(frames.g2[..., 1], tx, ty)
        r += gamma * (abs(gx[0] - frames.g1[py, px, 0]) + abs(gy[0] - frames.g1[py, px, 1]))
    return float(scale * r)


def rho_occ(w_x, frozen) -> float:
    """Squared distance to the exemplar reference vector."""
    if frozen is None:
        raise ValueError("exemplar reference undefined for this pixel")
    d = np.subtract(w_x, frozen, dtype=np.float64)
    return float(d @ d)


def grid_cliques(height: int, width: int):
    """8-neighbourhood cliques, each unordered pair once.

    Returns ``(a, b, weight)`` with flat pixel indices; ``a`` precedes ``b`` in
    raster order and carries the edge weight; diagonals are scaled by
    ``1/sqrt(2)``.
    """
    idx = np.arange(height * width).reshape(height, width)
    pairs = [
        (idx[:, :-1], idx[:, 1:], 1.0),
        (idx[:-1, :], idx[1:, :], 1.0),
        (idx[:-1, :-1], idx[1:, 1:], 1.0 / math.sqrt(2.0)),
        (idx[:-1, 1:], idx[1:, :-1], 1.0 / math.sqrt(2.0)),
    ]
    a = np.concatenate([p[0].ravel() for p in pairs])
    b = np.concatenate([p[1].ravel() for p in pairs])
    wt = np.concatenate([np.full(p[0].size, p[2]) for p in pairs])
    return a, b, wt


def _penalty(d: np.ndarray, kind: str) -> np.ndarray:
    sq = (d ** 2).sum(axis=-1)
    return sq if kind == "as-printed-sq" else np.sqrt(sq)


@dataclass
class EnergyTerms:
    data_visible: float
    data_occluded: float
    occlusion_prior: float
    flow_smoothness: float
    occlusion_smoothness: float

    @property
    def total(self) -> float:
        return (self.data_visible + self.data_occluded + self.occlusion_prior
                + self.flow_smoothness + self.occlusion_smoothness)


def reference_field(flow: np.ndarray, match: np.ndarray | None, fallback: np.ndarray) -> np.ndarray:
    """Per-pixel exemplar reference ``w(m(x))``, or ``fallback`` where ``m`` is undefined."""
    ref = np.array(fallback, dtype=np.float64, copy=True)
    if match is not None:
        ok = match[..., 0] >= 0
        ref[ok] = flow[match[ok][:, 1], match[ok][:, 0]]
    return ref


def energy_terms(flow, occ, rho, ref, params: EnergyParams, omega, beta) -> EnergyTerms:
    """Energy terms given the visibility cost map ``rho`` and exemplar references ``ref``."""
    h, w = occ.shape
    o = np.asarray(occ).astype(bool)
    a, b, wt = grid_cliques(h, w)
    fl = flow.reshape(-1, 2)
    cw = beta.ravel()[a] * wt
    d_occ = ((flow - ref) ** 2).sum(-1)
    of = o.ravel()
    return EnergyTerms(
        data_visible=float(rho[~o].sum()),
        data_occluded=float(params.lambda1 * d_occ[o].sum()),
        occlusion_prior=float(params.lambda2 * omega[o].sum()),
        flow_smoothness=float(params.lambda3 * (cw * _penalty(fl[a] - fl[b], params.reg_penalty)).sum()),
        occlusion_smoothness=float(params.lambda4 * (wt * (of[a] != of[b])).sum()),
    )


def energy_total(flow, occ, match, frames: FrameData, params: EnergyParams, omega, beta,
                 rho_oob: float = 0.0, fallback=None) -> float:
    """Total aggregation energy of ``(flow, occ)``.

    ``match`` is the ``(H, W, 2)`` exemplar map (``-1`` where undefined);
    occluded pixels without a match are compared against ``fallback``
    (default: zero flow).
    """
    flow = np.asarray(flow, dtype=np.float64)
    rho, _ = rho_vis_field(frames, flow, params.gamma, params.intensity_scale, rho_oob)
    fb = np.zeros_like(flow) if fallback is None else fallback
    ref = reference_field(flow, match, fb)
    return energy_terms(flow, occ, rho, ref, params, omega, beta).total


# ---------------------------------------------------------------- proposals

@dataclass
class Proposal:
    """A full field of candidate slot indices with a description."""

    slots: np.ndarray
    label: str


def non_overlapping_groups(patch_set: PatchSet, size: int) -> list[list[int]]:
    """Greedy first-fit partition of one size's patches into disjoint tilings.

    With regular strides this yields one group per overlap phase.
    """
    w, h = patch_set.width, patch_set.height
    groups: list[tuple[list[int], np.ndarray]] = []
    for i in patch_set.indices_of_size(size):
        x0, y0, x1, y1 = patch_set.specs[i].rect(w, h)
        for members, mask in groups:
            if not mask[y0:y1, x0:x1].any():
                members.append(i)
                mask[y0:y1, x0:x1] = True
                break
        else:
            mask = np.zeros((h, w), dtype=bool)
            mask[y0:y1, x0:x1] = True
            groups.append(([i], mask))
    return [g[0] for g in groups]


def build_proposals(cands: CandidateSet, patch_set: PatchSet, occ_init=None) -> list[Proposal]:
    """Deterministic proposal sweep covering every candidate of every pixel.

    Order: overlap phase (outer), patch size (round robin), match index
    (inner). Each tiling yields a local proposal and, when exemplar copies
    exist, an exemplar proposal in which pixels of ``occ_init`` take the copy
    of their exemplar source's proposed candidate. Pixels covered by a patch
    without the requested match get the camera candidate; pixels outside the
    tiling are marked ``-1`` (keep current). A final proposal is the camera
    field.
    """
    h, w = cands.shape
    model_of = {(m.patch_index, m.match_index): k for k, m in enumerate(cands.models)}
    n_match = 1 + max((m.match_index for m in cands.models), default=0)
    groups = {s: non_overlapping_groups(patch_set, s) for s in patch_set.sizes}
    n_phase = max(len(g) for g in groups.values())
    occ0 = np.zeros((h, w), dtype=bool) if occ_init is None else np.asarray(occ_init).astype(bool)
    src = cands.exemplar_source
    has_ex = occ0 & (src[..., 0] >= 0)
    ey, ex = np.nonzero(has_ex)
    sx, sy = src[ey, ex, 0], src[ey, ex, 1]
    n_local = cands.count.copy()
    if has_ex.any():
        # exemplar_slots are indexed by the source's slots, all of which are local
        n_local = np.where(cands.kind == 0, 1, 0).sum(-1)
    out = []
    for phase in range(n_phase):
        for s in patch_set.sizes:
            if phase >= len(groups[s]):
                continue
            for mi in range(n_match):
                slots = np.full((h, w), -1, dtype=np.int64)
                for pi in groups[s][phase]:
                    x0, y0, x1, y1 = patch_set.specs[pi].rect(w, h)
                    k = model_of.get((pi, mi))
                    if k is None:
                        slots[y0:y1, x0:x1] = cands.camera_slot[y0:y1, x0:x1]
                    else:
                        slots[y0:y1, x0:x1] = cands.model_slots[k]
                out.append(Proposal(slots, f"size={s} phase={phase} match={mi} local"))
                if has_ex.any():
                    ex_slots = slots.copy()
                    ks = slots[sy, sx]
                    ok = (ks >= 0) & (ks < n_local[sy, sx])
                    picked = cands.exemplar_slots[ey[ok], ex[ok], ks[ok]]
                    ex_slots[ey[ok], ex[ok]] = picked
                    if np.any(ex_slots != slots):
                        out.append(Proposal(ex_slots, f"size={s} phase={phase} match={mi} exemplar"))
    if np.all(cands.camera_slot >= 0):
        out.append(Proposal(cands.camera_slot.copy(), "camera"))
    return out


# ------------------------------------------------------------------ solver

@dataclass
class TraceEntry:
    iteration: int
    step: str
    index: int
    before: float
    after: float
    accepted: bool = True

    def line(self) -> str:
        return (f"iteration={self.iteration} step={self.step} move={self.index} "
                f"energy_before={self.before:.9g} energy_after={self.after:.9g} "
                f"accepted={int(self.accepted)}")


@dataclass
class AggregationInputs:
    """Everything the alternating minimisation needs besides the state."""

    cands: CandidateSet
    patch_set: PatchSet
    frames: FrameData
    image1: np.ndarray
    omega: np.ndarray
    beta: np.ndarray
    camera: np.ndarray
    band_radius: int = 10
    exemplar_patch: int = 11
    self_exclusion: int = 5


@dataclass
class AggregationState:
    slots: np.ndarray
    occ: np.ndarray
    match: np.ndarray
    iteration: int = 0
    trace: list[TraceEntry] = field(default_factory=list)


class EnergyIncrease(AssertionError):
    """Raised when a step that must not increase the energy does."""


class _Model:
    """Cached per-run quantities: visibility costs of every candidate slot."""

    def __init__(self, inp: AggregationInputs, params: EnergyParams):
        self.inp = inp
        self.params = params
        c = inp.cands
        h, w = c.shape
        k = c.capacity
        rho = np.empty((h, w, k))
        oob = np.zeros((h, w, k), dtype=bool)
        for j in range(k):
            rho[..., j], oob[..., j] = rho_vis_field(inp.frames, c.vectors[:, :, j], params.gamma,
                                                     params.intensity_scale)
        valid = np.arange(k)[None, None, :] < c.count[..., None]
        inb = valid & ~oob
        self.rho_oob = float(np.percentile(rho[inb], params.oob_percentile)) if inb.any() else 0.0
        rho[oob] = self.rho_oob
        self.rho = rho
        self.yy, self.xx = np.mgrid[0:h, 0:w]
        self.cliques = grid_cliques(h, w)
        a, _, wt = self.cliques
        self.clique_w = inp.beta.ravel()[a] * wt

    def flow(self, slots):
        return self.inp.cands.vectors[self.yy, self.xx, slots]

    def rho_of(self, slots):
        return self.rho[self.yy, self.xx, slots]

    def terms(self, slots, occ, match) -> EnergyTerms:
        fl = self.flow(slots)
        ref = reference_field(fl, match, self.inp.camera)
        return energy_terms(fl, occ, self.rho_of(slots), ref, self.params, self.inp.omega, self.inp.beta)

    def energy(self, slots, occ, match) -> float:
        return self.terms(slots, occ, match).total


def fuse_move(state: AggregationState, prop: Proposal, model: _Model, frozen_ref: np.ndarray,
              index: int = 0) -> AggregationState:
    """One QPBO fusion move between the current field and ``prop``.

    The exemplar term uses the frozen reference vectors ``frozen_ref``; the
    move's objective under that freezing never increases (checked). The move
    is committed only when the full energy does not increase either.
    """
    p = model.params
    cur = state.slots
    new = np.where(prop.slots >= 0, prop.slots, cur)
    if np.array_equal(new, cur):
        e = model.energy(cur, state.occ, state.match)
        state.trace.append(TraceEntry(state.iteration, "fuse", index, e, e))
        return state
    occ = state.occ.astype(bool)
    f0, f1 = model.flow(cur), model.flow(new)
    u0 = np.where(occ, p.lambda1 * ((f0 - frozen_ref) ** 2).sum(-1), model.rho_of(cur))
    u1 = np.where(occ, p.lambda1 * ((f1 - frozen_ref) ** 2).sum(-1), model.rho_of(new))
    a, b, _ = model.cliques
    cw = p.lambda3 * model.clique_w
    g0, g1 = f0.reshape(-1, 2), f1.reshape(-1, 2)
    pair = np.empty((len(a), 2, 2))
    pair[:, 0, 0] = cw * _penalty(g0[a] - g0[b], p.reg_penalty)
    pair[:, 0, 1] = cw * _penalty(g0[a] - g1[b], p.reg_penalty)
    pair[:, 1, 0] = cw * _penalty(g1[a] - g0[b], p.reg_penalty)
    pair[:, 1, 1] = cw * _penalty(g1[a] - g1[b], p.reg_penalty)
    mrf = BinaryMRF(np.stack([u0.ravel(), u1.ravel()], -1), np.stack([a, b], -1), pair)
    labels = qpbo_solve(mrf)
    labels[labels == UNLABELED] = 0
    zero = np.zeros(mrf.n_nodes, dtype=np.int64)
    e_frozen_before, e_frozen_after = mrf.energy(zero), mrf.energy(labels)
    if e_frozen_after > e_frozen_before + MONOTONE_SLACK * max(1.0, abs(e_frozen_before)):
        raise EnergyIncrease(f"fusion move increased its objective: {e_frozen_before} -> {e_frozen_after}")
    fused = np.where(labels.reshape(cur.shape) == 1, new, cur)
    e_before = model.energy(cur, state.occ, state.match)
    e_after = model.energy(fused, state.occ, state.match)
    accepted = e_after <= e_before
    state.trace.append(TraceEntry(state.iteration, "fuse", index, e_before,
                                  e_after if accepted else e_before, accepted))
    if accepted:
        state.slots = fused
    return state


def _exemplar_for_region(model: _Model, occ: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Exemplar matches on ``query`` against the band of ``occ``; ``-1`` where impossible."""
    h, w = occ.shape
    m = np.full((h, w, 2), -1, dtype=np.int64)
    if not query.any():
        return m
    band = build_search_band(occ, model.inp.band_radius)
    if band.empty:
        return m
    excl = np.where(occ, -1, model.inp.self_exclusion)
    return exemplar_match(model.inp.image1, occ, band, model.inp.exemplar_patch, query=query,
                          exclude_radius=excl)


def estimate_occlusion(state: AggregationState, model: _Model, index: int = 0) -> AggregationState:
    """Exact min-cut update of the occlusion map for the current flow.

    Pixels already occluded keep their exemplar match; visible pixels within
    ``band_radius`` of the occluded set get one from the current band
    (skipping their own neighbourhood). Visible pixels left without a match
    stay visible, since their occluded-state cost is undefined.
    """
    p = model.params
    occ = state.occ.astype(bool)
    h, w = occ.shape
    near = ndimage.maximum_filter(occ.astype(np.uint8), size=2 * model.inp.band_radius + 1,
                                  mode="constant") > 0
    m_ext = _exemplar_for_region(model, occ, near & ~occ)
    m_ext[occ] = state.match[occ]
    fl = model.flow(state.slots)
    ref = reference_field(fl, m_ext, model.inp.camera)
    u0 = model.rho_of(state.slots)
    u1 = p.lambda1 * ((fl - ref) ** 2).sum(-1) + p.lambda2 * model.inp.omega
    a, b, wt = model.cliques
    # a visible pixel without an exemplar has no occluded-state cost; keep it
    # visible by making label 1 dearer than anything its cliques could save
    blocked = (~occ & (m_ext[..., 0] < 0)).ravel()
    if blocked.any():
        incident = np.bincount(a, wt, h * w) + np.bincount(b, wt, h * w)
        u1 = u1.ravel().copy()
        u0f = u0.ravel()
        u1[blocked] = np.maximum(u1[blocked], u0f[blocked] + p.lambda4 * incident[blocked] + 1.0)
        u1 = u1.reshape(h, w)
    pair = np.zeros((len(a), 2, 2))
    pair[:, 0, 1] = pair[:, 1, 0] = p.lambda4 * wt
    mrf = BinaryMRF(np.stack([u0.ravel(), u1.ravel()], -1), np.stack([a, b], -1), pair)
    labels, _ = max_flow_solve(mrf)
    new_occ = labels.reshape(h, w).astype(np.uint8)
    e_before = model.energy(state.slots, state.occ, state.match)
    new_match = np.where(new_occ[..., None] == 1, m_ext, -1)
    e_after = model.energy(state.slots, new_occ, new_match)
    if e_after > e_before + MONOTONE_SLACK * max(1.0, abs(e_before)):
        raise EnergyIncrease(f"occlusion step increased the energy: {e_before} -> {e_after}")
    state.trace.append(TraceEntry(state.iteration, "occlusion", index, e_before, e_after))
    state.occ = new_occ
    state.match = new_match
    return state


def refresh_exemplars(state: AggregationState, model: _Model, index: int = 0) -> AggregationState:
    """Recompute exemplar matches for the occluded pixels from the current map."""
    occ = state.occ.astype(bool)
    e_before = model.energy(state.slots, state.occ, state.match)
    state.match = _exemplar_for_region(model, occ, occ)
    e_after = model.energy(state.slots, state.occ, state.match)
    state.trace.append(TraceEntry(state.iteration, "exemplar", index, e_before, e_after))
    return state


@dataclass
class AggregationResult:
    flow: np.ndarray
    occ: np.ndarray
    slots: np.ndarray
    match: np.ndarray
    trace: list[TraceEntry]
    rho_oob: float
    energy: float


def aggregate(inp: AggregationInputs, params: EnergyParams, occ_init, match_init,
              iterations: int = 3, verbose: bool = False, proposals: list[Proposal] | None = None,
              emit=None, init: str = "data") -> AggregationResult:
    """Alternating minimisation: proposal sweep, occlusion cut, exemplar refresh.

    Args:
        inp: candidate set, frames and weight maps.
        params: energy weights.
        occ_init: initial occlusion map (patch-level cue).
        match_init: initial exemplar map, ``(H, W, 2)`` with ``-1`` where
            undefined, or ``None``.
        iterations: outer iterations.
        verbose: emit one trace line per step through ``emit`` (default: logging).
        proposals: override the proposal sweep.
        emit: callable receiving trace lines when ``verbose`` is set.
        init: starting field, ``"data"`` (per-pixel candidate with the lowest
            visibility cost) or ``"camera"``.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    model = _Model(inp, params)
    c = inp.cands
    occ = np.asarray(occ_init).astype(np.uint8)
    if match_init is None:
        match_init = np.full(occ.shape + (2,), -1, dtype=np.int64)
    match = np.where(occ[..., None] == 1, np.asarray(match_init, dtype=np.int64), -1)
    props = proposals if proposals is not None else build_proposals(c, inp.patch_set, occ)
    if init == "camera":
        start = np.where(c.camera_slot >= 0, c.camera_slot, 0)
    elif init == "data":
        valid = np.arange(c.capacity)[None, None, :] < c.count[..., None]
        start = np.argmin(np.where(valid, model.rho, np.inf), axis=-1)
    else:
        raise ValueError(f"unknown initialisation {init!r}")
    state = AggregationState(start, occ, match)
    say = emit or log.info
    seen = 0

    def report():
        nonlocal seen
        if verbose:
            for t in state.trace[seen:]:
                say(t.line())
        seen = len(state.trace)

    for it in range(iterations):
        state.iteration = it
        frozen = reference_field(model.flow(state.slots), state.match, inp.camera)
        for k, prop in enumerate(props):
            fuse_move(state, prop, model, frozen, k)
        report()
        estimate_occlusion(state, model)
        refresh_exemplars(state, model)
        report()
    final = model.energy(state.slots, state.occ, state.match)
    return AggregationResult(model.flow(state.slots), state.occ, state.slots, state.match,
                             state.trace, model.rho_oob, final)
