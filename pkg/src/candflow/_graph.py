"""Numba kernels for max-flow and residual-graph analysis.

Graphs use a paired-edge layout: arc ``k`` is stored as edge ``2k``
(tail -> head) and its reverse ``2k + 1``; ``e ^ 1`` is always the partner.
"""
from __future__ import annotations

import numpy as np
from numba import njit

EPS = 1e-9


class FlowGraph:
    """Directed capacitated graph in CSR form, ready for :func:`max_flow`."""

    def __init__(self, n_nodes: int, tails, heads, caps, rev_caps=None):
        tails = np.asarray(tails, dtype=np.int64)
        heads = np.asarray(heads, dtype=np.int64)
        caps = np.asarray(caps, dtype=np.float64)
        rev_caps = np.zeros_like(caps) if rev_caps is None else np.asarray(rev_caps, dtype=np.float64)
        m = tails.size
        self.n = int(n_nodes)
        self.tail = np.empty(2 * m, dtype=np.int64)
        self.head = np.empty(2 * m, dtype=np.int64)
        self.cap = np.empty(2 * m, dtype=np.float64)
        self.tail[0::2], self.tail[1::2] = tails, heads
        self.head[0::2], self.head[1::2] = heads, tails
        self.cap[0::2], self.cap[1::2] = caps, rev_caps
        order = np.argsort(self.tail, kind="stable")
        self.adj = order.astype(np.int64)
        counts = np.bincount(self.tail, minlength=self.n)
        self.start = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(counts, out=self.start[1:])

    def max_flow(self, s: int, t: int) -> tuple[float, np.ndarray]:
        """Run Dinic's algorithm; returns the flow value and residual capacities."""
        res = self.cap.copy()
        flow = _dinic(self.n, self.start, self.adj, self.head, res, s, t, EPS)
        return flow, res


@njit(cache=True)
def _bfs_levels(n, start, adj, head, res, s, eps, level, queue):
    level[:] = -1
    level[s] = 0
    qh = 0
    qt = 0
    queue[qt] = s
    qt += 1
    while qh < qt:
        u = queue[qh]
        qh += 1
        for k in range(start[u], start[u + 1]):
            e = adj[k]
            v = head[e]
            if level[v] < 0 and res[e] > eps:
                level[v] = level[u] + 1
                queue[qt] = v
                qt += 1


@njit(cache=True)
def _dinic(n, start, adj, head, res, s, t, eps):
    level = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    it = np.empty(n, dtype=np.int64)
    path = np.empty(n, dtype=np.int64)
    total = 0.0
    while True:
        _bfs_levels(n, start, adj, head, res, s, eps, level, queue)
        if level[t] < 0:
            break
        for u in range(n):
            it[u] = start[u]
        depth = 0
        u = s
        while True:
            if u == t:
                bottleneck = np.inf
                for i in range(depth):
                    if res[path[i]] < bottleneck:
                        bottleneck = res[path[i]]
                first_sat = -1
                for i in range(depth):
                    e = path[i]
                    res[e] -= bottleneck
                    res[e ^ 1] += bottleneck
                    if first_sat < 0 and res[e] <= eps:
                        first_sat = i
                total += bottleneck
                depth = first_sat
                u = s if depth == 0 else head[path[depth - 1]]
                continue
            advanced = False
            while it[u] < start[u + 1]:
                e = adj[it[u]]
                v = head[e]
                if res[e] > eps and level[v] == level[u] + 1:
                    path[depth] = e
                    depth += 1
                    u = v
                    advanced = True
                    break
                it[u] += 1
            if not advanced:
                level[u] = -1
                if depth == 0:
                    break
                depth -= 1
                e = path[depth]
                u = head[e ^ 1]
                it[u] += 1
    return total


@njit(cache=True)
def reachable_from(n, start, adj, head, open_edge, src):
    """Nodes reachable from ``src`` along edges with ``open_edge`` set."""
    seen = np.zeros(n, dtype=np.bool_)
    stack = np.empty(n, dtype=np.int64)
    seen[src] = True
    sp = 1
    stack[0] = src
    while sp > 0:
        sp -= 1
        u = stack[sp]
        for k in range(start[u], start[u + 1]):
            e = adj[k]
            v = head[e]
            if open_edge[e] and not seen[v]:
                seen[v] = True
                stack[sp] = v
                sp += 1
    return seen


@njit(cache=True)
def reaching(n, start, adj, head, open_edge, dst):
    """Nodes that can reach ``dst`` along edges with ``open_edge`` set."""
    seen = np.zeros(n, dtype=np.bool_)
    stack = np.empty(n, dtype=np.int64)
    seen[dst] = True
    sp = 1
    stack[0] = dst
    while sp > 0:
        sp -= 1
        v = stack[sp]
        for k in range(start[v], start[v + 1]):
            e_in = adj[k] ^ 1  # edge u -> v
            u = head[adj[k]]
            if open_edge[e_in] and not seen[u]:
                seen[u] = True
                stack[sp] = u
                sp += 1
    return seen


@njit(cache=True)
def strong_components(n, start, adj, head, open_edge, active):
    """Iterative Tarjan over the ``active`` nodes.

    Returns ``comp`` (−1 for inactive nodes). Component ids are assigned in
    completion order, which is a reverse topological order of the
    condensation.
    """
    index = np.full(n, -1, dtype=np.int64)
    low = np.zeros(n, dtype=np.int64)
    onstack = np.zeros(n, dtype=np.bool_)
    comp = np.full(n, -1, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    call_node = np.empty(n, dtype=np.int64)
    call_it = np.empty(n, dtype=np.int64)
    sp = 0
    counter = 0
    n_comp = 0
    for root in range(n):
        if not active[root] or index[root] >= 0:
            continue
        cp = 0
        call_node[0] = root
        call_it[0] = start[root]
        index[root] = counter
        low[root] = counter
        counter += 1
        stack[sp] = root
        sp += 1
        onstack[root] = True
        while cp >= 0:
            u = call_node[cp]
            pushed = False
            while call_it[cp] < start[u + 1]:
                e = adj[call_it[cp]]
                call_it[cp] += 1
                v = head[e]
                if not open_edge[e] or not active[v]:
                    continue
                if index[v] < 0:
                    index[v] = counter
                    low[v] = counter
                    counter += 1
                    stack[sp] = v
                    sp += 1
                    onstack[v] = True
                    cp += 1
                    call_node[cp] = v
                    call_it[cp] = start[v]
                    pushed = True
                    break
                elif onstack[v]:
                    if index[v] < low[u]:
                        low[u] = index[v]
            if pushed:
                continue
            if low[u] == index[u]:
                while True:
                    sp -= 1
                    w = stack[sp]
                    onstack[w] = False
                    comp[w] = n_comp
                    if w == u:
                        break
                n_comp += 1
            cp -= 1
            if cp >= 0:
                parent = call_node[cp]
                if low[u] < low[parent]:
                    low[parent] = low[u]
    return comp
