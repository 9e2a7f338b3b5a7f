"""Per-pixel motion candidate sets.

Candidates are stored densely as ``vectors[y, x, k]`` for ``k < count[y, x]``
together with provenance links, so that proposals can be expressed as slot
indices and every proposed vector is bit-identical to a stored candidate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .parametric import affine_flow_at
from .patches import Correspondence, PatchSet

LOCAL, EXEMPLAR, CAMERA = 0, 1, 2
DEDUP_TOL = 1e-6


@dataclass
class CandidateModel:
    """One patch correspondence with its affine refinement."""

    patch_index: int
    match_index: int
    translation: tuple[int, int]
    theta: np.ndarray
    center: tuple[float, float]
    rect: tuple[int, int, int, int]

    def evaluate(self) -> np.ndarray:
        """Candidate vectors over the clipped patch rectangle, ``(h, w, 2)``."""
        x0, y0, x1, y1 = self.rect
        yy, xx = np.mgrid[y0:y1, x0:x1].astype(np.float64)
        local = np.stack([xx - self.center[0], yy - self.center[1]], -1)
        return np.asarray(self.translation, dtype=np.float64) + affine_flow_at(self.theta, local)


@dataclass
class CandidateSet:
    """Candidate vectors with provenance.

    Attributes:
        vectors: ``(H, W, K, 2)`` padded candidate storage.
        count: ``(H, W)`` number of valid slots per pixel.
        kind: ``(H, W, K)`` provenance tag of each slot (LOCAL, EXEMPLAR, CAMERA).
        models: generating patch models; ``model_slots[i]`` maps the model's
            rectangle to slot indices.
        exemplar_source: ``(H, W, 2)`` ``(x, y)`` of the exemplar pixel whose
            candidates were copied, ``-1`` where none.
        exemplar_slots: ``(H, W, K)`` slot of the copy of the source's slot ``k``.
        camera_slot: ``(H, W)`` slot of the camera candidate, ``-1`` if absent.
    """

    vectors: np.ndarray
    count: np.ndarray
    kind: np.ndarray
    models: list[CandidateModel] = field(default_factory=list)
    model_slots: list[np.ndarray] = field(default_factory=list)
    exemplar_source: np.ndarray | None = None
    exemplar_slots: np.ndarray | None = None
    camera_slot: np.ndarray | None = None

    @classmethod
    def empty(cls, height: int, width: int, capacity: int = 8) -> "CandidateSet":
        return cls(
            vectors=np.zeros((height, width, capacity, 2)),
            count=np.zeros((height, width), dtype=np.int64),
            kind=np.full((height, width, capacity), -1, dtype=np.int8),
            exemplar_source=np.full((height, width, 2), -1, dtype=np.int64),
            exemplar_slots=np.full((height, width, capacity), -1, dtype=np.int64),
            camera_slot=np.full((height, width), -1, dtype=np.int64),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.count.shape

    @property
    def capacity(self) -> int:
        return self.vectors.shape[2]

    def copy(self) -> "CandidateSet":
        return CandidateSet(
            self.vectors.copy(), self.count.copy(), self.kind.copy(), list(self.models),
            [s.copy() for s in self.model_slots], self.exemplar_source.copy(),
            self.exemplar_slots.copy(), self.camera_slot.copy())

    def _grow(self, needed: int):
        if needed <= self.capacity:
            return
        new_cap = max(needed, 2 * self.capacity)
        h, w = self.shape
        pad = new_cap - self.capacity
        self.vectors = np.concatenate([self.vectors, np.zeros((h, w, pad, 2))], axis=2)
        self.kind = np.concatenate([self.kind, np.full((h, w, pad), -1, np.int8)], axis=2)
        self.exemplar_slots = np.concatenate([self.exemplar_slots, np.full((h, w, pad), -1, np.int64)], axis=2)

    def insert(self, ys, xs, vecs, kind: int) -> np.ndarray:
        """Add one vector at each listed pixel, merging near-duplicates.

        Pixels must be distinct. Returns the slot used at each pixel.
        """
        ys = np.asarray(ys, dtype=np.int64).ravel()
        xs = np.asarray(xs, dtype=np.int64).ravel()
        vecs = np.asarray(vecs, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(vecs)):
            raise ValueError("candidate vectors must be finite")
        cnt = self.count[ys, xs]
        existing = self.vectors[ys, xs]  # (n, K, 2)
        diff = np.abs(existing - vecs[:, None, :]).max(axis=-1)
        valid = np.arange(self.capacity)[None, :] < cnt[:, None]
        match = (diff <= DEDUP_TOL) & valid
        has = match.any(axis=1)
        slots = np.where(has, match.argmax(axis=1), cnt)
        new = ~has
        if new.any():
            self._grow(int(cnt[new].max()) + 1)
            self.vectors[ys[new], xs[new], slots[new]] = vecs[new]
            self.kind[ys[new], xs[new], slots[new]] = kind
            self.count[ys[new], xs[new]] += 1
        return slots

    def add_model(self, model: CandidateModel) -> None:
        x0, y0, x1, y1 = model.rect
        yy, xx = np.mgrid[y0:y1, x0:x1]
        slots = self.insert(yy, xx, model.evaluate(), LOCAL)
        self.models.append(model)
        self.model_slots.append(slots.reshape(y1 - y0, x1 - x0))

    def at(self, x: int, y: int) -> np.ndarray:
        return self.vectors[y, x, :self.count[y, x]].copy()

    def gather(self, slots: np.ndarray) -> np.ndarray:
        """Flow field ``(H, W, 2)`` picking slot ``slots[y, x]`` at each pixel."""
        h, w = self.shape
        yy, xx = np.mgrid[0:h, 0:w]
        return self.vectors[yy, xx, slots]

    def contains(self, flow: np.ndarray) -> np.ndarray:
        """Exact per-pixel membership of ``flow`` in the candidate sets."""
        eq = np.all(self.vectors == flow[:, :, None, :], axis=-1)
        valid = np.arange(self.capacity)[None, None, :] < self.count[..., None]
        return np.any(eq & valid, axis=-1)

    def canonical(self, x: int, y: int, decimals: int = 6) -> list[tuple[float, float]]:
        """Sorted, rounded candidate list at one pixel (order independent)."""
        return sorted({(round(float(u), decimals) + 0.0, round(float(v), decimals) + 0.0)
                       for u, v in self.at(x, y)})


def collect_candidates(patch_set: PatchSet, correspondences: dict[int, list[Correspondence]],
                       fits: dict[tuple[int, int], "object"]) -> CandidateSet:
    """Assemble ``C(x)`` from every patch correspondence and its affine fit.

    Args:
        patch_set: the patch set the correspondences refer to.
        correspondences: patch index -> ordered correspondences.
        fits: ``(patch index, match index)`` -> object with ``theta`` and
            ``center`` (see :class:`~candflow.parametric.ParametricFit`).
    """
    w, h = patch_set.width, patch_set.height
    cs = CandidateSet.empty(h, w)
    for pi in sorted(correspondences):
        spec = patch_set.specs[pi]
        for mi, corr in enumerate(correspondences[pi]):
            fit = fits[(pi, mi)]
            cs.add_model(CandidateModel(pi, mi, corr.translation, np.asarray(fit.theta, dtype=np.float64),
                                        tuple(fit.center), spec.rect(w, h)))
    if np.any(cs.count == 0):
        raise AssertionError("pixel not covered by any patch candidate")
    return cs
