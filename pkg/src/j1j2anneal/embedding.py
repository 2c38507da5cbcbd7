"""Minor embedding of logical problems into Pegasus, and chain statistics.

The embedder follows the Cai-Macready-Roy scheme: every chain is grown from a
root qubit along node-weighted shortest paths to the chains of its already
placed neighbours, qubits shared by several chains are made exponentially
expensive, and chains are torn up and re-routed one at a time until no qubit
is shared. Once valid, further passes keep the best embedding by
(longest chain, total qubits).
"""

from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._backend import kernels
from .lattice import ProblemGraph

CHAIN = 2  # bond kind of intra-chain couplers in embedded problems

_WEIGHT_CAP = 2.0 ** 40


class EmbeddingNotFound(RuntimeError):
    """No valid embedding within the restart budget.

    ``unplaced`` counts logical sites whose chains still overlapped another
    chain in the best attempt.
    """

    def __init__(self, message, unplaced: int, tries: int):
        super().__init__(message)
        self.unplaced = unplaced
        self.tries = tries


class InvalidEmbedding(ValueError):
    def __init__(self, violation):
        super().__init__(violation.message)
        self.violation = violation


@dataclass(frozen=True)
class Embedding:
    chains: tuple[tuple[int, ...], ...]
    chain_strength: float = 1.0

    def __post_init__(self):
        chains = tuple(tuple(sorted(int(q) for q in c)) for c in self.chains)
        if any(len(c) == 0 for c in chains):
            raise ValueError("every chain needs at least one qubit")
        if not self.chain_strength > 0:
            raise ValueError("chain_strength must be > 0")
        object.__setattr__(self, "chains", chains)

    @property
    def n_sites(self) -> int:
        return len(self.chains)

    def sizes(self) -> np.ndarray:
        return np.array([len(c) for c in self.chains], dtype=np.intp)

    def qubits(self) -> list[int]:
        return sorted(q for c in self.chains for q in c)


@dataclass(frozen=True)
class ChainStats:
    counts: dict[int, int]
    max_chain: int
    total_qubits: int

    def count(self, size: int) -> int:
        return self.counts.get(size, 0)

    def to_csv(self) -> str:
        return "N,count\n" + "".join(f"{n},{c}\n" for n, c in sorted(self.counts.items()))


@dataclass(frozen=True)
class Violation:
    kind: str  # "disjointness" | "connectivity" | "coverage" | "range" | "size"
    sites: tuple[int, ...]
    message: str
    bond: tuple[int, int] | None = None


TORQUE_PREFACTOR = 1.414


def default_chain_strength(source: ProblemGraph) -> float:
    """Uniform torque compensation: 1.414 * rms(coupling) * sqrt(mean degree).

    This is the annealer vendor's stock heuristic; 1.0 for a problem without bonds.
    """
    if source.n_bonds == 0:
        return 1.0
    rms = math.sqrt(float(np.mean(np.square(source.coupling))))
    return TORQUE_PREFACTOR * rms * math.sqrt(2.0 * source.n_bonds / source.n_sites)


def _largest_component(target) -> np.ndarray:
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components
    n = target.n_nodes
    adj = csr_matrix((np.ones(target.indices.size), target.indices, target.indptr), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    return np.flatnonzero(labels == np.argmax(np.bincount(labels)))


def _logical_adjacency(source: ProblemGraph) -> list[list[int]]:
    adj = [[] for _ in range(source.n_sites)]
    for a, b in zip(source.bond_a.tolist(), source.bond_b.tolist()):
        adj[a].append(b)
        adj[b].append(a)
    return [sorted(x) for x in adj]


def _connected(chain, target) -> bool:
    members = set(chain)
    start = next(iter(members))
    seen = {start}
    stack = [start]
    while stack:
        q = stack.pop()
        for p in target.neighbors(q).tolist():
            if p in members and p not in seen:
                seen.add(p)
                stack.append(p)
    return len(seen) == len(members)


def verify_embedding(source: ProblemGraph, target, emb: Embedding) -> Violation | None:
    """Return the first violated embedding invariant, or None when valid."""
    if emb.n_sites != source.n_sites:
        return Violation("size", (), f"embedding has {emb.n_sites} chains for "
                                     f"{source.n_sites} sites")
    owner = {}
    for site, chain in enumerate(emb.chains):
        for q in chain:
            if not 0 <= q < target.n_nodes:
                return Violation("range", (site,), f"site {site} uses qubit {q} "
                                                   "outside the target")
            if q in owner:
                return Violation("disjointness", (owner[q], site),
                                 f"sites {owner[q]} and {site} share qubit {q}")
            owner[q] = site
    for site, chain in enumerate(emb.chains):
        if not _connected(chain, target):
            return Violation("connectivity", (site,), f"chain of site {site} is disconnected")
    for a, b in zip(source.bond_a.tolist(), source.bond_b.tolist()):
        cb = set(emb.chains[b])
        if not any(p in cb for q in emb.chains[a] for p in target.neighbors(q).tolist()):
            return Violation("coverage", (a, b), f"no coupler realizes bond ({a}, {b})",
                             bond=(a, b))
    return None


def chain_stats(emb: Embedding) -> ChainStats:
    sizes = emb.sizes()
    counts = Counter(sizes.tolist())
    return ChainStats(dict(sorted(counts.items())), int(sizes.max()), int(sizes.sum()))


class _Embedder:
    """Two phases: negotiate overlaps away, then shorten chains without overlap."""

    BETA0 = 2.0
    BETA_GROW = 1.25
    BETA_MAX = 64.0
    DENSITY = 0.4  # layout tiles per lattice site along each axis

    def __init__(self, adj, target, rng, usable):
        self.adj = adj
        self.rng = rng
        self.n = len(adj)
        self.indptr = target.indptr
        self.indices = target.indices
        self.use = np.zeros(target.n_nodes, dtype=np.int64)
        self.history = np.zeros(target.n_nodes)
        self.chains: list[list[int] | None] = [None] * self.n
        self.usable = usable
        self.beta = self.BETA0

    def remove(self, v):
        if self.chains[v] is not None:
            self.use[self.chains[v]] -= 1
            self.chains[v] = None

    def commit(self, v, chain):
        self.chains[v] = chain
        self.use[chain] += 1

    def _pred(self, q, d, w):
        # smallest-index predecessor keeps paths independent of the Dijkstra backend
        nb = self.indices[self.indptr[q]:self.indptr[q + 1]]
        return int(nb[d[nb] + w[q] == d[q]].min())

    def route(self, v, w, limit=math.inf, exact=False):
        """Grow a chain for v from the cheapest root.

        Distances beyond ``limit`` are not explored. The cheapest root has every
        neighbour distance <= its own total, so whenever the best total found is
        <= limit the result equals the unbounded search. Otherwise the search is
        repeated unbounded when ``exact`` is set, else None is returned.
        """
        placed = [u for u in self.adj[v] if self.chains[u] is not None]
        if not placed:
            cand = self.use[self.usable]
            free = self.usable[cand == cand.min()]
            return [int(free[self.rng.integers(free.size)])]
        if exact:
            for bound in (8.0, 32.0, 128.0):
                if bound < limit:
                    chain = self._route(placed, w, bound)
                    if chain is not None:
                        return chain
        return self._route(placed, w, limit)

    def _route(self, placed, w, limit):
        dists = []
        total = w.copy()
        for u in placed:
            d = kernels.node_weighted_distances(
                self.indptr, self.indices, w,
                np.asarray(self.chains[u], dtype=np.intp), limit)
            dists.append(d)
            total += np.maximum(d - w, 0.0)
        root = int(np.argmin(total))
        if not total[root] <= limit:
            return None
        chain = {root}
        for d in dists:
            q = root
            while d[q] != 0.0:
                chain.add(q)
                q = self._pred(q, d, w)
        return self._prune(chain, [(d == 0.0) | (d == w) for d in dists])

    def _prune(self, chain, touch):
        members = set(chain)
        changed = True
        while changed and len(members) > 1:
            changed = False
            for q in sorted(members, reverse=True):
                inside = sum(p in members for p in
                             self.indices[self.indptr[q]:self.indptr[q + 1]].tolist())
                if inside > 1:
                    continue
                idx = np.fromiter(members - {q}, dtype=np.intp)
                if all(t[idx].any() for t in touch):
                    members.discard(q)
                    changed = True
                    break
        return sorted(members)

    def negotiate_weights(self):
        return np.minimum((1.0 + self.history) * self.beta ** self.use, _WEIGHT_CAP)

    def overlap_sites(self):
        shared = self.use > 1
        return [v for v, c in enumerate(self.chains) if shared[c].any()]

    def seed_from_layout(self, coords, m):
        """One qubit per site in the Pegasus tile under its scaled lattice position."""
        side = int(coords.max()) + 1
        tiles = max(1, min(m - 2, math.ceil(side * self.DENSITY)))
        taken = set()
        for v in range(self.n):
            x, y = (int(c) * tiles // side + 1 for c in coords[v])
            x, y = min(x, m - 2), min(y, m - 2)
            tile = [((0 * m + x) * 12 + k) * (m - 1) + y for k in range(12)]
            tile += [((1 * m + y) * 12 + k) * (m - 1) + x for k in range(12)]
            free = [q for q in tile if q not in taken] or tile
            q = free[int(self.rng.integers(len(free)))]
            taken.add(q)
            self.commit(v, [q])
        # every chain must be routed to its neighbours once before overlaps are judged
        for v in self.rng.permutation(self.n).tolist():
            self.remove(v)
            self.commit(v, self.route(v, self.negotiate_weights(), exact=True))

    def initial(self):
        start = int(self.rng.integers(self.n))
        seen = np.zeros(self.n, dtype=bool)
        order = []
        for s in [start] + list(range(self.n)):
            if seen[s]:
                continue
            seen[s] = True
            queue = deque([s])
            while queue:
                v = queue.popleft()
                order.append(v)
                for u in self.rng.permutation(self.adj[v]).tolist():
                    if not seen[u]:
                        seen[u] = True
                        queue.append(u)
        for v in order:
            self.commit(v, self.route(v, self.negotiate_weights(), exact=True))

    def negotiate(self, max_rounds):
        for _ in range(max_rounds):
            if not self.overlap_sites():
                return True
            self.history += np.maximum(self.use - 1, 0)
            self.beta = min(self.beta * self.BETA_GROW, self.BETA_MAX)
            for v in self.rng.permutation(self.n).tolist():
                self.remove(v)
                self.commit(v, self.route(v, self.negotiate_weights(), exact=True))
        return not self.overlap_sites()

    def score(self):
        sizes = [len(c) for c in self.chains]
        return max(sizes), sum(sizes)

    def shorten(self, max_no_improve):
        best = self.score()
        stall = 0
        while stall < max_no_improve:
            # longest chains first, ties in seeded random order
            order = self.rng.permutation(self.n)
            order = order[np.argsort([-len(self.chains[v]) for v in order], kind="stable")]
            for v in order.tolist():
                old = self.chains[v]
                self.remove(v)
                w = np.where(self.use > 0, _WEIGHT_CAP, 1.0)
                new = self.route(v, w, limit=float(len(old)))
                if new is None or len(new) > len(old) or (self.use[new] > 0).any():
                    new = old
                self.commit(v, new)
            score = self.score()
            if score < best:
                best, stall = score, 0
            else:
                stall += 1

    def _snapshot(self):
        return list(self.chains), self.use.copy(), self.history.copy(), self.beta

    def _restore(self, snap):
        chains, use, history, self.beta = snap
        self.chains, self.use, self.history = list(chains), use.copy(), history.copy()

    IMPROVE_ROUNDS = 8

    def improve(self, max_no_improve):
        """Rip up a longest chain, let it overlap, renegotiate; keep only improvements."""
        best = self.score()
        snap = self._snapshot()
        stall = 0
        while stall < max_no_improve:
            sizes = np.array([len(c) for c in self.chains])
            longest = np.flatnonzero(sizes == sizes.max())
            v = int(longest[self.rng.integers(longest.size)])
            self.history[:] = 0.0
            self.beta = self.BETA0
            self.remove(v)
            self.commit(v, self.route(v, self.negotiate_weights(), exact=True))
            if self.negotiate(self.IMPROVE_ROUNDS):
                self.shorten(1)
                score = self.score()
                if score < best:
                    best, snap, stall = score, self._snapshot(), 0
                    continue
            self._restore(snap)
            stall += 1

    def run(self, max_no_improve, max_rounds, coords=None, m=None):
        if coords is not None and m is not None and m >= 3:
            self.seed_from_layout(coords, m)
        else:
            self.initial()
        if not self.negotiate(max_rounds):
            return None, len(self.overlap_sites())
        self.shorten(max_no_improve)
        self.improve(max_no_improve)
        return [list(c) for c in self.chains], 0


def find_embedding(source: ProblemGraph, target, tries: int = 10, max_no_improve: int = 4,
                   seed: int = 0, chain_strength: float | None = None,
                   max_rounds: int = 60) -> Embedding:
    """Embed ``source`` into ``target``; deterministic for a given seed.

    Raises :class:`EmbeddingNotFound` when ``tries`` independent restarts all
    end with overlapping chains.
    """
    if source.n_sites > target.n_nodes:
        raise EmbeddingNotFound(
            f"{source.n_sites} sites cannot fit on {target.n_nodes} qubits",
            source.n_sites, 0)
    if chain_strength is None:
        chain_strength = default_chain_strength(source)
    adj = _logical_adjacency(source)
    rng = np.random.default_rng(seed)
    usable = _largest_component(target)
    m = getattr(target, "m", None)
    fewest_unplaced = source.n_sites
    for _ in range(max(tries, 1)):
        embedder = _Embedder(adj, target, rng, usable)
        best, unplaced = embedder.run(max_no_improve, max_rounds, source.coords, m)
        if best is not None:
            emb = Embedding(tuple(tuple(c) for c in best), chain_strength)
            violation = verify_embedding(source, target, emb)
            if violation is not None:  # pragma: no cover - guards the heuristic
                raise InvalidEmbedding(violation)
            return emb
        fewest_unplaced = min(fewest_unplaced, unplaced)
    raise EmbeddingNotFound(
        f"no embedding after {tries} tries ({fewest_unplaced} sites still overlapping)",
        fewest_unplaced, tries)


def embed_problem(source: ProblemGraph, emb: Embedding, target,
                  chain_strength: float | None = None) -> ProblemGraph:
    """Physical problem over the used qubits; ``labels`` holds the qubit ids."""
    violation = verify_embedding(source, target, emb)
    if violation is not None:
        raise InvalidEmbedding(violation)
    strength = emb.chain_strength if chain_strength is None else chain_strength
    if not strength > 0:
        raise ValueError("chain_strength must be > 0")
    qubits = np.array(emb.qubits(), dtype=np.intp)
    pos = {int(q): i for i, q in enumerate(qubits)}
    a, b, c, kinds = [], [], [], []
    for chain in emb.chains:
        members = set(chain)
        for q in chain:
            for p in target.neighbors(q).tolist():
                if p > q and p in members:
                    a.append(pos[q])
                    b.append(pos[p])
                    c.append(-strength)
                    kinds.append(CHAIN)
    src_kinds = source.kinds if source.kinds is not None else np.zeros(source.n_bonds)
    for (sa, sb, coup), kind in zip(source.bonds(), src_kinds.tolist()):
        cb = set(emb.chains[sb])
        q, p = min((min(q, p), max(q, p)) for q in emb.chains[sa]
                   for p in target.neighbors(q).tolist() if p in cb)
        a.append(pos[q])
        b.append(pos[p])
        c.append(coup)
        kinds.append(kind)
    fields = np.zeros(qubits.size)
    for site, chain in enumerate(emb.chains):
        for q in chain:
            fields[pos[q]] = source.fields[site] / len(chain)
    order = np.lexsort((b, a))
    return ProblemGraph(qubits.size, np.asarray(a)[order], np.asarray(b)[order],
                        np.asarray(c)[order], fields, kinds=np.asarray(kinds)[order],
                        labels=qubits)


def write_embedding(emb: Embedding, path) -> None:
    lines = [f"# chain_strength = {emb.chain_strength!r}"]
    lines += [f"{site}: " + " ".join(map(str, c)) for site, c in enumerate(emb.chains)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_embedding(path) -> Embedding:
    strength = 1.0
    chains = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line.lstrip("# ").partition("=")
            if key.strip() == "chain_strength":
                strength = float(value)
            continue
        site, _, rest = line.partition(":")
        chains[int(site)] = tuple(int(q) for q in rest.split())
    return Embedding(tuple(chains[i] for i in range(len(chains))), strength)
