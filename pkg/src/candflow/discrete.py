"""Binary pairwise MRF solvers.

:func:`max_flow_solve` minimises submodular energies exactly with a min cut.
:func:`qpbo_solve` handles arbitrary binary pairwise energies through the
roof-dual (doubled graph) construction and returns a partial labeling with the
persistence property.

Label convention: label 0 = source side of the cut, label 1 = sink side.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _graph

UNLABELED = -1


@dataclass
class BinaryMRF:
    """Energy ``sum_i unary[i, x_i] + sum_k pairwise[k, x_i, x_j]``.

    Attributes:
        unary: ``(n, 2)`` costs.
        edges: ``(m, 2)`` node index pairs ``(i, j)``, ``i != j``, no duplicates.
        pairwise: ``(m, 2, 2)`` costs indexed ``[k, x_i, x_j]``.
    """

    unary: np.ndarray
    edges: np.ndarray
    pairwise: np.ndarray

    def __post_init__(self):
        self.unary = np.asarray(self.unary, dtype=np.float64).reshape(-1, 2)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.pairwise = np.asarray(self.pairwise, dtype=np.float64).reshape(-1, 2, 2)
        if self.edges.shape[0] != self.pairwise.shape[0]:
            raise ValueError("edges and pairwise tables differ in length")
        if not (np.all(np.isfinite(self.unary)) and np.all(np.isfinite(self.pairwise))):
            raise ValueError("MRF costs must be finite")
        if self.edges.size:
            if self.edges.min() < 0 or self.edges.max() >= self.n_nodes:
                raise ValueError("edge endpoint out of range")
            if np.any(self.edges[:, 0] == self.edges[:, 1]):
                raise ValueError("self-loop in edge list")

    @property
    def n_nodes(self) -> int:
        return self.unary.shape[0]

    def energy(self, labels) -> float:
        x = np.asarray(labels, dtype=np.int64)
        e = self.unary[np.arange(self.n_nodes), x].sum()
        if self.edges.size:
            i, j = self.edges[:, 0], self.edges[:, 1]
            e += self.pairwise[np.arange(len(i)), x[i], x[j]].sum()
        return float(e)

    def check_unique_edges(self):
        key = np.sort(self.edges, axis=1)
        if len(np.unique(key, axis=0)) != len(key):
            raise ValueError("duplicate edges")


def is_submodular(mrf: BinaryMRF, tol: float = 0.0) -> bool:
    """True iff ``p(0,0) + p(1,1) <= p(0,1) + p(1,0) + tol`` on every edge."""
    p = mrf.pairwise
    return bool(np.all(p[:, 0, 0] + p[:, 1, 1] <= p[:, 0, 1] + p[:, 1, 0] + tol))


def _linear_form(mrf: BinaryMRF):
    """Rewrite the energy as ``const + sum a_i x_i + sum w_k (1 - x_i) x_j``."""
    n = mrf.n_nodes
    const = mrf.unary[:, 0].sum()
    a = mrf.unary[:, 1] - mrf.unary[:, 0]
    p = mrf.pairwise
    A, B, C, D = p[:, 0, 0], p[:, 0, 1], p[:, 1, 0], p[:, 1, 1]
    const += A.sum()
    a = a.copy()
    if mrf.edges.size:
        np.add.at(a, mrf.edges[:, 0], C - A)
        np.add.at(a, mrf.edges[:, 1], D - C)
    w = B + C - A - D
    return const, a, w


def max_flow_solve(mrf: BinaryMRF) -> tuple[np.ndarray, float]:
    """Exact minimiser of a submodular binary MRF.

    Among optimal labelings the one with the fewest 1 labels is returned.
    Returns the labeling and its energy. Raises ``ValueError`` when an edge
    violates submodularity by more than the capacity epsilon.
    """
    const, a, w = _linear_form(mrf)
    if np.any(w < -_graph.EPS):
        raise ValueError("max_flow_solve requires a submodular energy")
    n = mrf.n_nodes
    s, t = n, n + 1
    nodes = np.arange(n)
    pos = a > 0
    tails = [np.full(pos.sum(), s), nodes[~pos]]
    heads = [nodes[pos], np.full((~pos).sum(), t)]
    caps = [a[pos], -a[~pos]]
    if mrf.edges.size:
        keep = w > 0
        tails.append(mrf.edges[keep, 0])
        heads.append(mrf.edges[keep, 1])
        caps.append(w[keep])
    g = _graph.FlowGraph(n + 2, np.concatenate(tails), np.concatenate(heads), np.concatenate(caps))
    _, res = g.max_flow(s, t)
    # smallest sink set: ties resolve to label 0
    sink_side = _graph.reaching(g.n, g.start, g.adj, g.head, res > _graph.EPS, t)
    labels = np.where(sink_side[:n], 1, 0).astype(np.int64)
    return labels, mrf.energy(labels)


def qpbo_solve(mrf: BinaryMRF) -> np.ndarray:
    """Roof-dual partial labeling.

    Returns an int array with values 0, 1 or :data:`UNLABELED`. Labeled nodes
    agree with at least one global minimiser, and replacing the labeled
    entries of any labeling never increases its energy.
    """
    const, a, w = _linear_form(mrf)
    n = mrf.n_nodes
    s, t = 2 * n, 2 * n + 1
    nodes = np.arange(n)
    bar = nodes + n
    blocks = []

    def arc_pair(u, v, c, u_bar, v_bar):
        # arc u -> v and its mirror v_bar -> u_bar, each with half the cost
        u, v, u_bar, v_bar = (np.broadcast_to(np.asarray(z, dtype=np.int64), np.shape(c)) for z in (u, v, u_bar, v_bar))
        blocks.append((u, v, np.asarray(c, dtype=np.float64) / 2))
        blocks.append((v_bar, u_bar, np.asarray(c, dtype=np.float64) / 2))

    if mrf.edges.size:
        i, j = mrf.edges[:, 0], mrf.edges[:, 1]
        neg = w < 0
        # w (1-xi) xj with w < 0  ==  w xj + |w| xi xj
        np.add.at(a, j[neg], w[neg])
        sub = w > 0
        arc_pair(i[sub], j[sub], w[sub], i[sub] + n, j[sub] + n)
        # xi xj is the cut of arc i_bar -> j
        arc_pair(i[neg] + n, j[neg], -w[neg], i[neg], j[neg] + n)
    pos = a > 0
    negu = a < 0
    # a xi (a > 0): s -> i, mirror i_bar -> t
    arc_pair(s, nodes[pos], a[pos], t, bar[pos])
    # |a| (1 - xi): i -> t, mirror s -> i_bar
    arc_pair(nodes[negu], t, -a[negu], bar[negu], s)

    tails = np.concatenate([b[0] for b in blocks])
    heads = np.concatenate([b[1] for b in blocks])
    caps = np.concatenate([b[2] for b in blocks])
    mirror_arc = []
    offset = 0
    for k in range(0, len(blocks), 2):
        size = len(blocks[k][2])
        idx = np.arange(size) + offset
        mirror_arc += [idx + size, idx]
        offset += 2 * size
    mirror_arc = np.concatenate(mirror_arc).astype(np.int64)
    return _qpbo_labels(n, tails, heads, caps, mirror_arc)


def _qpbo_labels(n: int, tails, heads, caps, mirror_arc) -> np.ndarray:
    s, t = 2 * n, 2 * n + 1
    g = _graph.FlowGraph(2 * n + 2, tails, heads, caps)
    _, res = g.max_flow(s, t)

    # symmetrised residual: stored edge 2a+r mirrors stored edge 2*mirror(a)+r
    is_open = res > _graph.EPS
    stored = np.arange(len(res))
    mirror_edge = 2 * mirror_arc[stored // 2] + (stored & 1)
    open_edge = is_open | is_open[mirror_edge]

    from_s = _graph.reachable_from(g.n, g.start, g.adj, g.head, open_edge, s)
    to_t = _graph.reaching(g.n, g.start, g.adj, g.head, open_edge, t)
    side = np.full(g.n, -1, dtype=np.int64)  # 0 = source, 1 = sink
    side[from_s] = 0
    side[to_t] = 1

    active = side < 0
    if active.any():
        comp = _graph.strong_components(g.n, g.start, g.adj, g.head, open_edge, active)
        act = np.flatnonzero(active)
        mirror_node = np.where(act < n, act + n, act - n)
        n_comp = comp.max() + 1
        comp_mirror = np.full(n_comp, -1, dtype=np.int64)
        comp_mirror[comp[act]] = comp[mirror_node]
        comp_side = np.full(n_comp, -1, dtype=np.int64)
        # ids come in reverse topological order: walk sources first
        for c in range(n_comp - 1, -1, -1):
            if comp_side[c] >= 0 or comp_mirror[c] == c:
                continue
            comp_side[c] = 1
            comp_side[comp_mirror[c]] = 0
        side[act] = comp_side[comp[act]]

    labels = np.full(n, UNLABELED, dtype=np.int64)
    prim = side[:n]
    mir = side[n:2 * n]
    labels[(prim == 0) & (mir == 1)] = 0
    labels[(prim == 1) & (mir == 0)] = 1
    return labels


def dump_mrf(mrf: BinaryMRF, path) -> None:
    """Write the MRF to a line-based text file.

    Format::

        nodes <n>
        u <i> <cost0> <cost1>
        edges <m>
        p <i> <j> <c00> <c01> <c10> <c11>
    """
    lines = [f"nodes {mrf.n_nodes}"]
    lines += [f"u {i} {c0!r} {c1!r}" for i, (c0, c1) in enumerate(mrf.unary.tolist())]
    lines.append(f"edges {len(mrf.edges)}")
    for (i, j), p in zip(mrf.edges.tolist(), mrf.pairwise.reshape(-1, 4).tolist()):
        lines.append(f"p {i} {j} " + " ".join(repr(v) for v in p))
    Path(path).write_text("\n".join(lines) + "\n")


def load_mrf(path) -> BinaryMRF:
    """Inverse of :func:`dump_mrf`."""
    unary, edges, pair = [], [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "u":
            unary.append((float(parts[2]), float(parts[3])))
        elif parts[0] == "p":
            edges.append((int(parts[1]), int(parts[2])))
            pair.append([float(v) for v in parts[3:7]])
    return BinaryMRF(np.array(unary).reshape(-1, 2), np.array(edges, dtype=np.int64).reshape(-1, 2),
                     np.array(pair).reshape(-1, 2, 2))
