"""Ideal Pegasus P_m qubit/coupler graph.

Qubits carry coordinates (u, w, k, z): orientation u, perpendicular tile
offset w in [0, m), qubit offset k in [0, 12), parallel tile offset z in
[0, m-1). Every coordinate is a node (no yield map), so P_m has 24*m*(m-1)
nodes and the linear index is ``((u*m + w)*12 + k)*(m-1) + z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

EXTERNAL = 0
ODD = 1
INTERNAL = 2
EDGE_KINDS = {EXTERNAL: "external", ODD: "odd", INTERNAL: "internal"}

# Shift offsets of the standard Pegasus definition, one per qubit offset k,
# for vertical (u=0) and horizontal (u=1) qubits respectively.
VERTICAL_OFFSETS = (2, 2, 2, 2, 10, 10, 10, 10, 6, 6, 6, 6)
HORIZONTAL_OFFSETS = (6, 6, 6, 6, 2, 2, 2, 2, 10, 10, 10, 10)


class PegasusCoord(NamedTuple):
    u: int
    w: int
    k: int
    z: int


def coord_to_linear(c, m: int) -> int:
    u, w, k, z = c
    if not (u in (0, 1) and 0 <= w < m and 0 <= k < 12 and 0 <= z < m - 1):
        raise ValueError(f"coordinate {tuple(c)} out of range for P_{m}")
    return ((u * m + w) * 12 + k) * (m - 1) + z


def linear_to_coord(q: int, m: int) -> PegasusCoord:
    if not 0 <= q < 24 * m * (m - 1):
        raise ValueError(f"node {q} out of range for P_{m}")
    q, z = divmod(q, m - 1)
    q, k = divmod(q, 12)
    u, w = divmod(q, m)
    return PegasusCoord(u, w, k, z)


@dataclass(frozen=True, eq=False)
class PegasusGraph:
    m: int
    edges: np.ndarray          # (n_edges, 2), a < b, lexicographically sorted
    edge_kind: np.ndarray      # (n_edges,)
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.indptr.size - 1

    @property
    def nodes(self) -> range:
        return range(self.n_nodes)

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    def neighbors(self, q: int) -> np.ndarray:
        return self.indices[self.indptr[q]:self.indptr[q + 1]]

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def has_edge(self, a: int, b: int) -> bool:
        nb = self.neighbors(a)
        i = np.searchsorted(nb, b)
        return bool(i < nb.size and nb[i] == b)

    def coord(self, q: int) -> PegasusCoord:
        return linear_to_coord(q, self.m)

    def kind_of(self, a: int, b: int) -> int:
        a, b = min(a, b), max(a, b)
        keys = self.edges[:, 0] * self.n_nodes + self.edges[:, 1]
        i = np.searchsorted(keys, a * self.n_nodes + b)
        if i >= keys.size or keys[i] != a * self.n_nodes + b:
            raise KeyError((a, b))
        return int(self.edge_kind[i])


def _csr(n, edges):
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((dst, src))
    indptr = np.zeros(n + 1, dtype=np.intp)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return indptr, np.ascontiguousarray(dst[order], dtype=np.intp)


def from_edges(m: int, n_nodes: int, edges, kinds) -> PegasusGraph:
    edges = np.asarray(edges, dtype=np.intp).reshape(-1, 2)
    edges = np.sort(edges, axis=1)
    kinds = np.asarray(kinds, dtype=np.int8)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges, kinds = edges[order], kinds[order]
    indptr, indices = _csr(n_nodes, edges)
    for arr in (edges, kinds, indptr, indices):
        arr.setflags(write=False)
    return PegasusGraph(m, edges, kinds, indptr, indices)


def build_pegasus(m: int) -> PegasusGraph:
    if int(m) != m or m < 2:
        raise ValueError(f"Pegasus size m must be an integer >= 2, got {m}")
    m = int(m)
    m1 = m - 1
    lin = lambda u, w, k, z: ((u * m + w) * 12 + k) * m1 + z  # noqa: E731
    edges, kinds = [], []
    for u in (0, 1):
        for w in range(m):
            for k in range(12):
                for z in range(m1 - 1):
                    edges.append((lin(u, w, k, z), lin(u, w, k, z + 1)))
                    kinds.append(EXTERNAL)
            for k in range(0, 12, 2):
                for z in range(m1):
                    edges.append((lin(u, w, k, z), lin(u, w, k + 1, z)))
                    kinds.append(ODD)
    off0, off1 = VERTICAL_OFFSETS, HORIZONTAL_OFFSETS
    for w in range(m):
        for kk in range(12):
            # the horizontal partner's z = w - (k < off1[kk]) must stay in [0, m-1)
            k_lo = 0 if w else off1[kk]
            k_hi = 12 if w < m1 else off1[kk]
            for k in range(k_lo, k_hi):
                for z in range(m1):
                    v = lin(0, w, k, z)
                    h = lin(1, z + (kk < off0[k]), kk, w - (k < off1[kk]))
                    edges.append((v, h))
                    kinds.append(INTERNAL)
    return from_edges(m, 24 * m * m1, edges, kinds)


def contains_k4(graph) -> tuple[int, int, int, int] | None:
    """First 4-clique in node order, or None."""
    n = graph.n_nodes
    nbr = [set(graph.neighbors(q).tolist()) for q in range(n)]
    for a in range(n):
        na = sorted(x for x in nbr[a] if x > a)
        for i, b in enumerate(na):
            common = [c for c in na[i + 1:] if c in nbr[b]]
            for j, c in enumerate(common):
                for d in common[j + 1:]:
                    if d in nbr[c]:
                        return a, b, c, d
    return None


def write_edgelist(graph: PegasusGraph, path) -> None:
    lines = [f"{a} {b} {EDGE_KINDS[int(k)]}"
             for (a, b), k in zip(graph.edges.tolist(), graph.edge_kind.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edgelist(path, m: int) -> PegasusGraph:
    names = {v: k for k, v in EDGE_KINDS.items()}
    edges, kinds = [], []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            a, b, kind = line.split()
            edges.append((int(a), int(b)))
            kinds.append(names[kind])
    return from_edges(m, 24 * m * (m - 1), edges, kinds)
