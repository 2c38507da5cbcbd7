"""Frustrated J1-J2 Ising model on the L x L square lattice.

Energies use one quadratic form for every problem in the package::

    E(s) = sum_bonds c_ab * s_a * s_b + sum_i h_i * s_i

Nearest-neighbour bonds carry c = -J1 (ferromagnetic for J1 > 0) and both
diagonals of every plaquette carry c = +J2 (antiferromagnetic). Sites are
indexed row-major, ``i = y * L + x``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NEAREST = 0
DIAGONAL = 1


class LatticeError(ValueError):
    """Invalid lattice parameters."""


class InvalidSizeError(LatticeError):
    pass


class DegenerateWrapError(LatticeError):
    """Periodic wrapping on a lattice too small to keep bonds distinct."""


class DimensionError(ValueError):
    """A configuration does not match the graph it is evaluated on."""


class BoundaryCondition(enum.Enum):
    OBC = "obc"
    PBC = "pbc"

    @classmethod
    def parse(cls, value: "BoundaryCondition | str") -> "BoundaryCondition":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise LatticeError(f"unknown boundary condition {value!r}") from None


@dataclass(frozen=True)
class LatticeSpec:
    L: int
    J1: float = 1.0
    J2: float = 0.0
    bc: BoundaryCondition = BoundaryCondition.OBC

    def __post_init__(self):
        object.__setattr__(self, "bc", BoundaryCondition.parse(self.bc))
        if int(self.L) != self.L or self.L < 2:
            raise InvalidSizeError(f"L must be an integer >= 2, got {self.L}")
        if not self.J1 > 0:
            raise LatticeError(f"J1 must be > 0, got {self.J1}")
        if not self.J2 >= 0:
            raise LatticeError(f"J2 must be >= 0, got {self.J2}")


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ProblemGraph:
    """Weighted coupling graph plus per-site fields.

    Immutable; use :meth:`with_fields` to derive a biased copy. ``labels``
    names each site (qubit ids for embedded problems, ``arange`` otherwise).
    """

    n_sites: int
    bond_a: np.ndarray
    bond_b: np.ndarray
    coupling: np.ndarray
    fields: np.ndarray
    kinds: np.ndarray | None = None
    coords: np.ndarray | None = None
    L: int | None = None
    bc: BoundaryCondition | None = None
    labels: np.ndarray | None = None
    _csr: tuple = field(init=False, repr=False)

    def __post_init__(self):
        n = int(self.n_sites)
        a = np.asarray(self.bond_a, dtype=np.intp)
        b = np.asarray(self.bond_b, dtype=np.intp)
        if a.shape != b.shape or a.shape != np.shape(self.coupling):
            raise DimensionError("bond arrays must have equal length")
        if a.size and (min(a.min(), b.min()) < 0 or max(a.max(), b.max()) >= n):
            raise DimensionError("bond index out of range")
        if np.any(a == b):
            raise LatticeError("self-bond")
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        if np.unique(lo * n + hi).size != lo.size:
            raise LatticeError("duplicate bond")
        fields = np.zeros(n) if self.fields is None else np.asarray(self.fields, float)
        if fields.shape != (n,):
            raise DimensionError(f"fields must have length {n}")
        object.__setattr__(self, "n_sites", n)
        object.__setattr__(self, "bond_a", _frozen(lo, np.intp))
        object.__setattr__(self, "bond_b", _frozen(hi, np.intp))
        object.__setattr__(self, "coupling", _frozen(self.coupling, float))
        object.__setattr__(self, "fields", _frozen(fields, float))
        if self.kinds is not None:
            object.__setattr__(self, "kinds", _frozen(self.kinds, np.int8))
        if self.coords is not None:
            object.__setattr__(self, "coords", _frozen(self.coords, np.intp))
        labels = np.arange(n) if self.labels is None else self.labels
        object.__setattr__(self, "labels", _frozen(labels, np.intp))
        object.__setattr__(self, "_csr", _build_csr(n, lo, hi, self.coupling))

    @property
    def n_bonds(self) -> int:
        return int(self.bond_a.size)

    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Symmetric adjacency ``(indptr, indices, coupling)``, neighbours sorted."""
        return self._csr

    def neighbors(self, site: int) -> np.ndarray:
        indptr, indices, _ = self._csr
        return indices[indptr[site]:indptr[site + 1]]

    def bonds(self):
        """Iterate ``(a, b, coupling)`` with ``a < b``."""
        return zip(self.bond_a.tolist(), self.bond_b.tolist(), self.coupling.tolist())

    def count(self, kind: int) -> int:
        if self.kinds is None:
            raise LatticeError("graph carries no bond kinds")
        return int(np.count_nonzero(self.kinds == kind))

    def with_fields(self, fields) -> "ProblemGraph":
        return ProblemGraph(
            self.n_sites, self.bond_a, self.bond_b, self.coupling, fields,
            kinds=self.kinds, coords=self.coords, L=self.L, bc=self.bc,
            labels=self.labels,
        )

    def max_abs_row_sum(self) -> float:
        """Largest per-site sum of |coupling| (drives the default chain strength)."""
        tot = np.zeros(self.n_sites)
        np.add.at(tot, self.bond_a, np.abs(self.coupling))
        np.add.at(tot, self.bond_b, np.abs(self.coupling))
        return float(tot.max()) if self.n_sites else 0.0


def _build_csr(n, a, b, c):
    src = np.concatenate([a, b])
    dst = np.concatenate([b, a])
    cc = np.concatenate([c, c]).astype(float)
    order = np.lexsort((dst, src))
    src, dst, cc = src[order], dst[order], cc[order]
    indptr = np.zeros(n + 1, dtype=np.intp)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    out = (np.ascontiguousarray(indptr), np.ascontiguousarray(dst, dtype=np.intp),
           np.ascontiguousarray(cc))
    for arr in out:
        arr.setflags(write=False)
    return out


def build_lattice(spec: LatticeSpec) -> ProblemGraph:
    L = spec.L
    periodic = spec.bc is BoundaryCondition.PBC
    if periodic and L < 3:
        raise DegenerateWrapError(f"PBC needs L >= 3 to keep bonds distinct, got L={L}")
    ys, xs = np.divmod(np.arange(L * L), L)
    bonds = []
    for kind, c, offsets in ((NEAREST, -spec.J1, ((1, 0), (0, 1))),
                             (DIAGONAL, spec.J2, ((1, 1), (1, -1)))):
        for dx, dy in offsets:
            nx, ny = xs + dx, ys + dy
            if periodic:
                keep = np.ones(L * L, dtype=bool)
                nx, ny = nx % L, ny % L
            else:
                keep = (nx >= 0) & (nx < L) & (ny >= 0) & (ny < L)
            i = (ys * L + xs)[keep]
            j = (ny * L + nx)[keep]
            bonds.append((np.minimum(i, j), np.maximum(i, j), np.full(i.size, c),
                          np.full(i.size, kind)))
    a, b, c, k = (np.concatenate(col) for col in zip(*bonds))
    order = np.lexsort((b, a))
    return ProblemGraph(
        L * L, a[order], b[order], c[order], np.zeros(L * L), kinds=k[order],
        coords=np.stack([xs, ys], axis=1), L=L, bc=spec.bc,
    )


def as_spins(config, n_sites: int | None = None) -> np.ndarray:
    s = np.asarray(config)
    if s.ndim != 1:
        raise DimensionError("a spin configuration is one-dimensional")
    if n_sites is not None and s.shape[0] != n_sites:
        raise DimensionError(f"configuration has {s.shape[0]} spins, graph has {n_sites}")
    if not np.all((s == 1) | (s == -1)):
        raise ValueError("spins must be +1 or -1")
    return s.astype(np.int8, copy=False)


def energy(graph: ProblemGraph, config, include_fields: bool = False) -> float:
    s = as_spins(config, graph.n_sites)
    return float(energies(graph, s[None, :], include_fields)[0])


def energies(graph: ProblemGraph, configs, include_fields: bool = False) -> np.ndarray:
    """Row-wise :func:`energy`; each row is reduced independently of the batch size."""
    s = np.asarray(configs, dtype=float)
    if s.ndim != 2 or s.shape[1] != graph.n_sites:
        raise DimensionError("expected an (n_shots, n_sites) array")
    # numpy's axis reductions group terms differently for 1 and n rows, so each
    # row is summed on its own to keep results independent of the batch
    prod = np.ascontiguousarray(s[:, graph.bond_a] * s[:, graph.bond_b] * graph.coupling)
    e = np.array([row.sum() for row in prod], dtype=float)
    if include_fields:
        hs = np.ascontiguousarray(s * graph.fields)
        e = e + np.array([row.sum() for row in hs], dtype=float)
    return e


def delta_energy(graph: ProblemGraph, config, site: int, include_fields: bool = False) -> float:
    """Energy change from flipping ``site``, in O(degree)."""
    s = as_spins(config, graph.n_sites)
    if not 0 <= site < graph.n_sites:
        raise IndexError(f"site {site} out of range [0, {graph.n_sites})")
    indptr, indices, coupling = graph.csr()
    lo, hi = indptr[site], indptr[site + 1]
    local = float(np.dot(coupling[lo:hi], s[indices[lo:hi]]))
    if include_fields:
        local += graph.fields[site]
    return -2.0 * float(s[site]) * local


# -- reference configurations ---------------------------------------------

def ferromagnet(L: int) -> np.ndarray:
    return np.ones(L * L, dtype=np.int8)


def column_stripe(L: int) -> np.ndarray:
    """Spins alternate with column parity: s(x, y) = (-1)**x."""
    x = np.arange(L * L) % L
    return np.where(x % 2 == 0, 1, -1).astype(np.int8)


# -- text edge-list format --------------------------------------------------

def write_graph(graph: ProblemGraph, path) -> None:
    """Header ``n_sites L bc``, then ``a b coupling`` per bond, then ``i h`` per nonzero field."""
    L = graph.L if graph.L is not None else 0
    bc = graph.bc.value if graph.bc is not None else "none"
    lines = [f"{graph.n_sites} {L} {bc}"]
    lines += [f"{a} {b} {c!r}" for a, b, c in graph.bonds()]
    lines += [f"{i} {h!r}" for i, h in enumerate(graph.fields.tolist()) if h != 0.0]
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path) -> ProblemGraph:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 3:
        raise ValueError(f"{path}: missing 'n_sites L bc' header")
    n, L, bc = int(rows[0][0]), int(rows[0][1]), rows[0][2]
    a, b, c = [], [], []
    fields = np.zeros(n)
    for row in rows[1:]:
        if len(row) == 3:
            a.append(int(row[0]))
            b.append(int(row[1]))
            c.append(float(row[2]))
        elif len(row) == 2:
            fields[int(row[0])] = float(row[1])
        else:
            raise ValueError(f"{path}: cannot parse line {' '.join(row)!r}")
    coords = kinds = None
    bcv = None if bc == "none" else BoundaryCondition.parse(bc)
    if L > 0:
        ys, xs = np.divmod(np.arange(n), L)
        coords = np.stack([xs, ys], axis=1)
        a_arr, b_arr = np.asarray(a, dtype=np.intp), np.asarray(b, dtype=np.intp)
        dx = np.abs(xs[a_arr] - xs[b_arr])
        dy = np.abs(ys[a_arr] - ys[b_arr])
        dx, dy = np.minimum(dx, L - dx), np.minimum(dy, L - dy)
        kinds = np.where((dx == 1) & (dy == 1), DIAGONAL, NEAREST)
    return ProblemGraph(n, a, b, c, fields, kinds=kinds, coords=coords,
                        L=L or None, bc=bcv)
