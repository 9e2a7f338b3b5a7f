"""Multi-size overlapping patch sets and N-best patch correspondences."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit


@dataclass(frozen=True)
class PatchSpec:
    """Square patch with top-left ``origin = (x, y)`` and side ``size``."""

    origin: tuple[int, int]
    size: int

    def rect(self, width: int, height: int) -> tuple[int, int, int, int]:
        """Clipped ``(x0, y0, x1, y1)`` with exclusive upper bounds."""
        x0, y0 = max(self.origin[0], 0), max(self.origin[1], 0)
        return x0, y0, min(self.origin[0] + self.size, width), min(self.origin[1] + self.size, height)

    def center(self, width: int, height: int) -> tuple[int, int]:
        x0, y0, x1, y1 = self.rect(width, height)
        return (x0 + x1 - 1) // 2, (y0 + y1 - 1) // 2


def _round_half_up(v: float) -> int:
    return int(np.floor(v + 0.5))


def patch_stride(size: int, overlap: float) -> int:
    return max(1, _round_half_up((1.0 - overlap) * size))


def _positions(extent: int, size: int, stride: int) -> list[int]:
    if size >= extent:
        return [0]
    pos = list(range(0, extent - size + 1, stride))
    if pos[-1] != extent - size:
        pos.append(extent - size)
    return pos


@dataclass
class PatchSet:
    """All patches of every size; ``specs`` is ordered by size, then row, then column."""

    width: int
    height: int
    sizes: tuple[int, ...]
    overlap: float
    specs: list[PatchSpec] = field(default_factory=list)

    def indices_of_size(self, size: int) -> list[int]:
        return [i for i, p in enumerate(self.specs) if p.size == size]

    def covering(self, x: int, y: int) -> list[int]:
        out = []
        for i, p in enumerate(self.specs):
            x0, y0, x1, y1 = p.rect(self.width, self.height)
            if x0 <= x < x1 and y0 <= y < y1:
                out.append(i)
        return out

    def coverage_count(self, size: int | None = None) -> np.ndarray:
        cnt = np.zeros((self.height, self.width), dtype=np.int64)
        for p in self.specs:
            if size is None or p.size == size:
                x0, y0, x1, y1 = p.rect(self.width, self.height)
                cnt[y0:y1, x0:x1] += 1
        return cnt


def build_patch_set(width: int, height: int, sizes, overlap: float) -> PatchSet:
    """Overlapping square patches of each size, clamped to cover the border."""
    sizes = tuple(int(s) for s in sizes)
    if not sizes:
        raise ValueError("at least one patch size is required")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must lie in [0, 1)")
    if min(sizes) < 1 or width < 1 or height < 1:
        raise ValueError("sizes and dimensions must be positive")
    ps = PatchSet(width, height, sizes, overlap)
    for s in sizes:
        stride = patch_stride(s, overlap)
        for y in _positions(height, s, stride):
            for x in _positions(width, s, stride):
                ps.specs.append(PatchSpec((x, y), s))
    return ps


def sad_distance(a, b) -> float:
    """Sum of absolute differences over pixels and channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"patch shapes differ: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


@dataclass(frozen=True)
class Correspondence:
    """Integer translation of ``source`` into the second frame with its cost.

    The cost is the SAD divided by the number of patch pixels that land
    inside the second frame.
    """

    source: PatchSpec
    translation: tuple[int, int]
    cost: float


@dataclass(frozen=True)
class SearchStrategy:
    """``exhaustive`` (optionally within ``radius``) or ``randomized``."""

    kind: str = "exhaustive"
    radius: int | None = None
    iters: int = 5
    seed: int = 0
    min_overlap: float = 0.5

    def __post_init__(self):
        if self.kind not in ("exhaustive", "randomized"):
            raise ValueError(f"unknown search strategy {self.kind!r}")
        if self.radius is not None and self.radius < 0:
            raise ValueError("radius must be non-negative")
        if not 0.0 < self.min_overlap <= 1.0:
            raise ValueError("min_overlap must lie in (0, 1]")


@njit(cache=True)
def _patch_cost(f1, f2, x0, y0, x1, y1, tx, ty, min_valid):
    h2, w2 = f2.shape[0], f2.shape[1]
    nc = f1.shape[2]
    total = 0.0
    n = 0
    for y in range(max(y0, -ty), min(y1, h2 - ty)):
        for x in range(max(x0, -tx), min(x1, w2 - tx)):
            for c in range(nc):
                total += abs(f1[y, x, c] - f2[y + ty, x + tx, c])
            n += 1
    if n < min_valid or n == 0:
        return np.inf
    return total / n


@njit(cache=True)
def _cost_map(f1, f2, x0, y0, x1, y1, txmin, txmax, tymin, tymax, min_valid):
    out = np.full((tymax - tymin + 1, txmax - txmin + 1), np.inf)
    for ty in range(tymin, tymax + 1):
        for tx in range(txmin, txmax + 1):
            out[ty - tymin, tx - txmin] = _patch_cost(f1, f2, x0, y0, x1, y1, tx, ty, min_valid)
    return out


def _translation_box(rect, shape2, radius):
    x0, y0, x1, y1 = rect
    h2, w2 = shape2
    txmin, txmax = -(x1 - 1), w2 - 1 - x0
    tymin, tymax = -(y1 - 1), h2 - 1 - y0
    if radius is not None:
        txmin, txmax = max(txmin, -radius), min(txmax, radius)
        tymin, tymax = max(tymin, -radius), min(tymax, radius)
    return txmin, txmax, tymin, tymax


def _select_separated(ts: np.ndarray, costs: np.ndarray, n: int, min_sep: float):
    """Greedy N-best with a minimum Euclidean separation between translations.

    ``ts`` and ``costs`` must already be in preference order.
    """
    chosen: list[int] = []
    for k in range(len(costs)):
        if not np.isfinite(costs[k]):
            break
        t = ts[k]
        if all(np.hypot(*(t - ts[j])) >= min_sep for j in chosen):
            chosen.append(k)
            if len(chosen) == n:
                break
    return chosen


def _preference_order(ts: np.ndarray, costs: np.ndarray) -> np.ndarray:
    # cost first, then shorter translation, then row-major translation order
    norm2 = ts[:, 0] ** 2 + ts[:, 1] ** 2
    return np.lexsort((ts[:, 0], ts[:, 1], norm2, costs))


def _exhaustive(src: PatchSpec, f1, f2, n, min_sep, search: SearchStrategy):
    h, w = f1.shape[:2]
    rect = src.rect(w, h)
    x0, y0, x1, y1 = rect
    area = (x1 - x0) * (y1 - y0)
    min_valid = max(1, int(np.ceil(search.min_overlap * area)))
    txmin, txmax, tymin, tymax = _translation_box(rect, f2.shape[:2], search.radius)
    cmap = _cost_map(f1, f2, x0, y0, x1, y1, txmin, txmax, tymin, tymax, min_valid)
    tyy, txx = np.mgrid[tymin:tymax + 1, txmin:txmax + 1]
    ts = np.stack([txx.ravel(), tyy.ravel()], -1)
    costs = cmap.ravel()
    finite = np.isfinite(costs)
    ts, costs = ts[finite], costs[finite]
    order = _preference_order(ts, costs)
    ts, costs = ts[order], costs[order]
    chosen = _select_separated(ts, costs, n, min_sep)
    return [Correspondence(src, (int(ts[k, 0]), int(ts[k, 1])), float(costs[k])) for k in chosen]


class _BestList:
    """Top-n translations for one patch under the separation constraint."""

    def __init__(self, n, min_sep):
        self.n = n
        self.min_sep = min_sep
        self.items: list[tuple[float, float, int, int]] = []  # (cost, |t|^2, ty, tx)

    def key(self, cost, tx, ty):
        return (cost, tx * tx + ty * ty, ty, tx)

    def offer(self, cost, tx, ty):
        if not np.isfinite(cost):
            return
        new = self.key(cost, tx, ty)
        clash = []
        for it in self.items:
            if it[3] == tx and it[2] == ty:
                return
            if np.hypot(it[3] - tx, it[2] - ty) < self.min_sep:
                clash.append(it)
        if clash:
            if all(new < c for c in clash):
                self.items = [it for it in self.items if it not in clash]
            else:
                return
        self.items.append(new)
        self.items.sort()
        del self.items[self.n:]


def _randomized(specs: list[PatchSpec], f1, f2, n, min_sep_of, search: SearchStrategy):
    """PatchMatch-style propagation and random search over one patch size."""
    h, w = f1.shape[:2]
    h2, w2 = f2.shape[:2]
    rng = np.random.default_rng(search.seed)
    xs = sorted({p.origin[0] for p in specs})
    ys = sorted({p.origin[1] for p in specs})
    grid = {(ys.index(p.origin[1]), xs.index(p.origin[0])): i for i, p in enumerate(specs)}
    rects = [p.rect(w, h) for p in specs]
    boxes = [_translation_box(r, (h2, w2), search.radius) for r in rects]
    min_valid = [max(1, int(np.ceil(search.min_overlap * (r[2] - r[0]) * (r[3] - r[1])))) for r in rects]
    best = [_BestList(n, min_sep_of(p)) for p in specs]

    def cost(i, tx, ty):
        x0, y0, x1, y1 = rects[i]
        return _patch_cost(f1, f2, x0, y0, x1, y1, tx, ty, min_valid[i])

    def offer(i, tx, ty):
        txmin, txmax, tymin, tymax = boxes[i]
        if txmin <= tx <= txmax and tymin <= ty <= tymax:
            best[i].offer(cost(i, tx, ty), tx, ty)

    for i in range(len(specs)):
        offer(i, 0, 0)
        txmin, txmax, tymin, tymax = boxes[i]
        for _ in range(n + 2):
            offer(i, int(rng.integers(txmin, txmax + 1)), int(rng.integers(tymin, tymax + 1)))

    order = sorted(grid)
    radius0 = max(w2, h2)
    for it in range(search.iters):
        forward = it % 2 == 0
        step = 1 if forward else -1
        for gy, gx in (order if forward else order[::-1]):
            i = grid[(gy, gx)]
            for nb in ((gy, gx - step), (gy - step, gx)):
                j = grid.get(nb)
                if j is not None:
                    for _, _, ty, tx in list(best[j].items):
                        offer(i, tx, ty)
            for _, _, ty, tx in list(best[i].items):
                r = radius0
                while r >= 1:
                    offer(i, tx + int(rng.integers(-r, r + 1)), ty + int(rng.integers(-r, r + 1)))
                    r //= 2
    return [[Correspondence(specs[i], (tx, ty), float(c)) for c, _, ty, tx in best[i].items]
            for i in range(len(specs))]


def match_patches(src: PatchSpec, f1, f2, n: int = 2, min_sep: float | None = None,
                  search: SearchStrategy | None = None) -> list[Correspondence]:
    """Up to ``n`` best translations of ``src`` from ``f1`` into ``f2``.

    Results are in non-decreasing cost order and pairwise at least
    ``min_sep`` apart (default: half the patch side).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    search = search or SearchStrategy()
    min_sep = src.size / 2.0 if min_sep is None else min_sep
    f1 = np.ascontiguousarray(f1, dtype=np.float64)
    f2 = np.ascontiguousarray(f2, dtype=np.float64)
    if search.kind == "exhaustive":
        return _exhaustive(src, f1, f2, n, min_sep, search)
    return _randomized([src], f1, f2, n, lambda p: min_sep, search)[0]


def match_patch_set(patch_set: PatchSet, f1, f2, n: int = 2, min_sep: float | None = None,
                    search: SearchStrategy | None = None, sizes=None) -> dict[int, list[Correspondence]]:
    """Match every patch (optionally only some sizes); keys are patch indices."""
    search = search or SearchStrategy()
    f1 = np.ascontiguousarray(f1, dtype=np.float64)
    f2 = np.ascontiguousarray(f2, dtype=np.float64)
    out: dict[int, list[Correspondence]] = {}
    for s in (sizes or patch_set.sizes):
        idx = patch_set.indices_of_size(s)
        specs = [patch_set.specs[i] for i in idx]
        sep = s / 2.0 if min_sep is None else min_sep
        if search.kind == "exhaustive":
            res = [_exhaustive(p, f1, f2, n, sep, search) for p in specs]
        else:
            sub = SearchStrategy("randomized", search.radius, search.iters, search.seed + s, search.min_overlap)
            res = _randomized(specs, f1, f2, n, lambda p: sep, sub)
        out.update(zip(idx, res))
    return out
