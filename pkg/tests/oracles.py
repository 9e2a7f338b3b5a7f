"""Independent reference implementations used as test oracles."""
from __future__ import annotations

import itertools

import numpy as np

from candflow.discrete import BinaryMRF


def all_labelings(n: int) -> np.ndarray:
    """Every binary labeling of ``n`` nodes, shape ``(2**n, n)``."""
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64).reshape(-1, n)


def enumerate_energies(mrf: BinaryMRF) -> tuple[np.ndarray, np.ndarray]:
    """Energies of all labelings, summed term by term in plain Python order."""
    labs = all_labelings(mrf.n_nodes)
    e = np.zeros(len(labs))
    for r, lab in enumerate(labs):
        tot = 0.0
        for i in range(mrf.n_nodes):
            tot += mrf.unary[i, lab[i]]
        for k, (i, j) in enumerate(mrf.edges):
            tot += mrf.pairwise[k, lab[i], lab[j]]
        e[r] = tot
    return labs, e


def energy_table(mrf: BinaryMRF) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`enumerate_energies` for instances up to about 20 nodes."""
    n = mrf.n_nodes
    codes = np.arange(2 ** n, dtype=np.int64)
    labs = (codes[:, None] >> np.arange(n - 1, -1, -1)) & 1
    e = mrf.unary[np.arange(n), labs].sum(axis=1)
    for k, (i, j) in enumerate(mrf.edges):
        e = e + mrf.pairwise[k][labs[:, i], labs[:, j]]
    return labs, e


def global_optima(mrf: BinaryMRF, tol: float = 1e-9) -> tuple[float, np.ndarray]:
    labs, e = enumerate_energies(mrf)
    best = e.min()
    return float(best), labs[e <= best + tol]


def random_mrf(rng: np.random.Generator, n: int, submodular: bool, density: float = 0.5,
               integer: bool = False) -> BinaryMRF:
    """Random pairwise MRF on ``n`` nodes.

    Submodular instances draw a Potts-like table plus arbitrary per-node
    offsets; mixed instances draw every table entry freely.
    """
    def draw(size, lo, hi):
        v = rng.uniform(lo, hi, size)
        return np.round(v) if integer else v

    unary = draw((n, 2), -5, 5)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < density]
    if rng.random() < 0.5:
        pairs = [(j, i) for i, j in pairs]
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    m = len(edges)
    if submodular:
        a, d = draw(m, -3, 3), draw(m, -3, 3)
        slack = draw(m, 0, 4)
        b = draw(m, -3, 3)
        c = a + d - b + slack
        pair = np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], 1)
    else:
        pair = draw((m, 2, 2), -4, 4)
    return BinaryMRF(unary, edges, pair)
