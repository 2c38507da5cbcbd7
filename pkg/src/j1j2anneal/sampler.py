"""Shot-based annealing: simulated annealing, simulated quantum annealing,
iterative constraint refinement and chain-break resolution.

Every shot owns a PCG64 stream seeded by ``SeedSequence(seed, spawn_key=key)``;
the key depends only on the shot index (and refinement round), so a batch is
the same whichever worker runs which shot.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._backend import kernels
from .embedding import Embedding, embed_problem, verify_embedding
from .lattice import DimensionError, ProblemGraph, energies

log = logging.getLogger(__name__)

# tanh(Gamma / (P*T_q)) is floored here before the log, capping J_perp at
# (P*T_q/2) * 27.6 when the transverse field vanishes.
TANH_FLOOR = 1e-12

WORKERS_ENV = "J1J2_WORKERS"


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class AnnealSchedule:
    """Annealing parameters; temperatures and fields in energy units.

    SA cools geometrically from ``t_start`` to ``t_end``. SQA lowers the
    transverse field geometrically from ``gamma_start`` to ``gamma_end``
    (linearly when ``gamma_end`` is 0) at fixed slice temperature ``t_q``.
    """

    kind: str = "sa"
    sweeps: int = 1000
    t_start: float = 2.0
    t_end: float = 0.01
    gamma_start: float = 3.0
    gamma_end: float = 0.01
    trotter: int = 20
    t_q: float = 0.05
    random_order: bool = False

    def __post_init__(self):
        kind = str(self.kind).lower()
        object.__setattr__(self, "kind", kind)
        if kind not in ("sa", "sqa"):
            raise ScheduleError(f"kind must be 'sa' or 'sqa', got {self.kind!r}")
        if int(self.sweeps) != self.sweeps or self.sweeps < 0:
            raise ScheduleError(f"sweeps must be a non-negative integer, got {self.sweeps}")
        if kind == "sa" and not self.t_start >= self.t_end > 0:
            raise ScheduleError("SA needs t_start >= t_end > 0")
        if kind == "sqa":
            if not self.gamma_start >= self.gamma_end >= 0:
                raise ScheduleError("SQA needs gamma_start >= gamma_end >= 0")
            if int(self.trotter) != self.trotter or self.trotter < 2:
                raise ScheduleError("SQA needs at least 2 Trotter slices")
            if not self.t_q > 0:
                raise ScheduleError("SQA needs t_q > 0")

    @classmethod
    def sa(cls, sweeps=1000, t_start=2.0, t_end=0.01, **kw) -> "AnnealSchedule":
        return cls("sa", sweeps, t_start, t_end, **kw)

    @classmethod
    def sqa(cls, sweeps=1000, gamma_start=3.0, gamma_end=0.01, trotter=20, t_q=0.05,
            **kw) -> "AnnealSchedule":
        return cls("sqa", sweeps, gamma_start=gamma_start, gamma_end=gamma_end,
                   trotter=trotter, t_q=t_q, **kw)

    def temperatures(self) -> np.ndarray:
        return np.geomspace(self.t_start, self.t_end, self.sweeps)

    def gammas(self) -> np.ndarray:
        if self.gamma_end == 0:
            return np.linspace(self.gamma_start, 0.0, self.sweeps)
        return np.geomspace(self.gamma_start, self.gamma_end, self.sweeps)

    def jperp(self) -> np.ndarray:
        return transverse_coupling(self.gammas(), self.trotter, self.t_q)


def transverse_coupling(gamma, trotter: int, t_q: float):
    """Ferromagnetic inter-slice coupling -(P*T_q/2) * ln tanh(Gamma/(P*T_q))."""
    pt = trotter * t_q
    th = np.maximum(np.tanh(np.asarray(gamma, dtype=float) / pt), TANH_FLOOR)
    return -0.5 * pt * np.log(th)


def shot_rng(seed, key=()) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def _random_spins(rng, shape) -> np.ndarray:
    return np.where(rng.random(shape) < 0.5, 1, -1).astype(np.int8)


def _visit_order(schedule, n, rng, rows) -> np.ndarray:
    if not schedule.random_order:
        return np.arange(n, dtype=np.intp)[None, :]
    return np.ascontiguousarray(
        np.stack([rng.permutation(n) for _ in range(max(rows, 1))]), dtype=np.intp)


def sa_shot(graph: ProblemGraph, schedule: AnnealSchedule, seed) -> np.ndarray:
    """One simulated-annealing shot on the coupling energy plus fields; returns the final spins."""
    if schedule.kind != "sa":
        raise ScheduleError("sa_shot needs an SA schedule")
    rng = _as_rng(seed)
    spins = _random_spins(rng, graph.n_sites)
    if schedule.sweeps == 0:
        return spins
    visit = _visit_order(schedule, graph.n_sites, rng, schedule.sweeps)
    indptr, indices, coupling = graph.csr()
    kernels.metropolis_anneal(indptr, indices, coupling, graph.fields, spins,
                              schedule.temperatures(), visit, rng)
    return spins


def sqa_slices(graph: ProblemGraph, schedule: AnnealSchedule, seed) -> np.ndarray:
    """All P Trotter slices at the end of a path-integral anneal, shape (P, n)."""
    if schedule.kind != "sqa":
        raise ScheduleError("SQA sampling needs an SQA schedule")
    rng = _as_rng(seed)
    slices = _random_spins(rng, (schedule.trotter, graph.n_sites))
    if schedule.sweeps > 0:
        visit = _visit_order(schedule, graph.n_sites, rng, schedule.sweeps)
        indptr, indices, coupling = graph.csr()
        kernels.sqa_anneal(indptr, indices, coupling, graph.fields, slices,
                           schedule.jperp(), schedule.trotter * schedule.t_q, visit, rng)
    return slices


def sqa_shot(graph: ProblemGraph, schedule: AnnealSchedule, seed) -> np.ndarray:
    """One path-integral SQA shot; returns the slice lowest in coupling energy."""
    slices = sqa_slices(graph, schedule, seed)
    e = energies(graph, slices)
    return slices[int(np.argmin(e))].copy()


@dataclass(frozen=True, eq=False)
class ShotBatch:
    """Sampled configurations with coupling energies (fields excluded).

    ``labels`` names the columns of ``spins``: lattice sites for logical
    batches, qubit ids for batches drawn on an embedded problem.
    """

    spins: np.ndarray
    energies: np.ndarray
    broken: np.ndarray
    seed: int
    labels: np.ndarray | None = None
    L: int | None = None

    @property
    def n_shots(self) -> int:
        return int(self.spins.shape[0])

    @property
    def n_sites(self) -> int:
        return int(self.spins.shape[1])

    def magnetizations(self) -> np.ndarray:
        return np.abs(self.spins.sum(axis=1, dtype=np.int64)) / self.n_sites

    def best(self) -> tuple[np.ndarray, float]:
        k = int(np.argmin(self.energies))
        return self.spins[k].copy(), float(self.energies[k])

    def select(self, mask) -> "ShotBatch":
        return ShotBatch(self.spins[mask], self.energies[mask], self.broken[mask],
                         self.seed, self.labels, self.L)

    def to_csv(self, path=None, with_spins: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["shot", "energy", "M", "broken_chains"] + (["spins"] if with_spins else []))
        m = self.magnetizations()
        for i in range(self.n_shots):
            row = [i, repr(float(self.energies[i])), repr(float(m[i])), int(self.broken[i])]
            if with_spins:
                row.append("".join("+" if s > 0 else "-" for s in self.spins[i].tolist()))
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def read_shots_csv(path, seed: int = 0) -> ShotBatch:
    """Parse a batch written with ``with_spins=True``."""
    rows = list(csv.DictReader(io.StringIO(Path(path).read_text())))
    if rows and "spins" not in rows[0]:
        raise ValueError("CSV carries no spin strings")
    spins = np.array([[1 if ch == "+" else -1 for ch in r["spins"]] for r in rows],
                     dtype=np.int8)
    return ShotBatch(spins, np.array([float(r["energy"]) for r in rows]),
                     np.array([int(r["broken_chains"]) for r in rows]), seed)


def _shot_worker(args):
    graph, schedule, seed, stream, lo, hi = args
    shot = sa_shot if schedule.kind == "sa" else sqa_shot
    out = np.empty((hi - lo, graph.n_sites), dtype=np.int8)
    for j, i in enumerate(range(lo, hi)):
        key = (i,) if stream is None else (stream, i)
        out[j] = shot(graph, schedule, shot_rng(seed, key))
    return out


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def sample_spins(graph, schedule, n_shots, seed, stream=None, workers=None) -> np.ndarray:
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or n_shots < 2:
        return _shot_worker((graph, schedule, seed, stream, 0, n_shots))
    bounds = np.linspace(0, n_shots, min(workers, n_shots) + 1).astype(int)
    jobs = [(graph, schedule, seed, stream, int(a), int(b))
            for a, b in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
        return np.concatenate(list(pool.map(_shot_worker, jobs)))


def run_shots(graph: ProblemGraph, schedule: AnnealSchedule, n_shots: int, seed: int = 0,
              sampler_kind: str | None = None, workers: int | None = None,
              stream: int | None = None) -> ShotBatch:
    """Independent shots; shot i is seeded from (seed, i) only."""
    if sampler_kind is not None and sampler_kind.lower() != schedule.kind:
        raise ScheduleError(f"schedule is {schedule.kind!r}, sampler_kind is {sampler_kind!r}")
    spins = sample_spins(graph, schedule, n_shots, seed, stream, workers)
    return ShotBatch(spins, energies(graph, spins), np.zeros(n_shots, dtype=np.int64),
                     seed, graph.labels, graph.L)


@dataclass
class RefinementState:
    round: int
    g: np.ndarray
    best_config: np.ndarray
    best_energy: float
    lam: float
    history: list[dict] = field(default_factory=list)


def refine_constraints(graph: ProblemGraph, schedule: AnnealSchedule, rounds: int = 4,
                       shots_per_round: int = 1000, lambda0: float = 0.2, decay: float = 0.5,
                       seed: int = 0, final_shots: int | None = None,
                       workers: int | None = None, patience: int = 2):
    """Iteratively bias per-site fields toward the incumbent ground state.

    Start from fields drawn uniformly in [-lambda0, lambda0]; after each round
    set g = -lambda * s_best and shrink lambda by ``decay``; stop once the best
    unbiased energy has not improved for ``patience`` rounds. A final batch of
    ``final_shots`` is drawn under the last fields with the same per-shot seeds
    as :func:`run_shots`, so ``lambda0 = 0`` reproduces it exactly.
    """
    if rounds < 1 or shots_per_round < 1:
        raise ValueError("rounds and shots_per_round must be >= 1")
    if lambda0 < 0 or not 0 < decay <= 1:
        raise ValueError("need lambda0 >= 0 and 0 < decay <= 1")
    final_shots = shots_per_round if final_shots is None else final_shots
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xC0FFEE,)))
    lam = float(lambda0)
    g = rng.uniform(-lam, lam, graph.n_sites) if lam > 0 else np.zeros(graph.n_sites)
    state = RefinementState(0, g, np.ones(graph.n_sites, dtype=np.int8), math.inf, lam)
    stall = 0
    for r in range(rounds):
        batch = run_shots(graph.with_fields(g), schedule, shots_per_round, seed,
                          workers=workers, stream=r + 1)
        config, e = batch.best()
        improved = e < state.best_energy
        if improved:
            state.best_config, state.best_energy = config, e
            stall = 0
        else:
            stall += 1
        state.history.append({"round": r, "lambda": lam, "round_min": e,
                              "best_energy": state.best_energy})
        log.info("refine round %d: lambda=%.4g round_min=%.6g best=%.6g",
                 r, lam, e, state.best_energy)
        state.round = r
        g = -lam * state.best_config.astype(float)
        lam *= decay
        state.g, state.lam = g, lam
        if stall >= patience:
            break
    final = run_shots(graph.with_fields(g), schedule, final_shots, seed, workers=workers)
    config, e = final.best()
    if e < state.best_energy:
        state.best_config, state.best_energy = config, e
    return state, final


# -- embedded problems --------------------------------------------------------

def _chain_columns(emb: Embedding, labels) -> list[np.ndarray]:
    pos = {int(q): i for i, q in enumerate(np.asarray(labels).tolist())}
    cols = []
    for site, chain in enumerate(emb.chains):
        try:
            cols.append(np.array([pos[q] for q in chain], dtype=np.intp))
        except KeyError as exc:
            raise DimensionError(f"qubit {exc.args[0]} of site {site} missing from config") from None
    return cols


def resolve_batch(spins, emb: Embedding, labels, seed: int = 0):
    """Majority-vote every chain of every shot.

    Returns ``(logical, broken)``: logical spins (n_shots, n_sites) and a
    boolean mask of broken chains. Even chains split exactly in half take a
    fair coin from a stream seeded by ``seed``.
    """
    spins = np.atleast_2d(np.asarray(spins))
    cols = _chain_columns(emb, labels)
    if spins.shape[1] != len(labels):
        raise DimensionError("spins and labels disagree in length")
    coin = np.where(np.random.default_rng(seed).random((spins.shape[0], len(cols))) < 0.5, 1, -1)
    logical = np.empty((spins.shape[0], len(cols)), dtype=np.int8)
    broken = np.zeros((spins.shape[0], len(cols)), dtype=bool)
    for site, c in enumerate(cols):
        total = spins[:, c].sum(axis=1, dtype=np.int64)
        broken[:, site] = np.abs(total) != c.size
        logical[:, site] = np.where(total > 0, 1, np.where(total < 0, -1, coin[:, site]))
    return logical, broken


def resolve_chains(embedded_config, emb: Embedding, labels, seed: int = 0):
    """Single-configuration form of :func:`resolve_batch`: ``(logical, n_broken)``."""
    logical, broken = resolve_batch(np.asarray(embedded_config)[None, :], emb, labels, seed)
    return logical[0], int(broken[0].sum())


def chain_break_counts(batch: ShotBatch, emb: Embedding) -> dict[int, tuple[int, int]]:
    """Per chain size: (broken, total) over all (shot, chain) pairs."""
    if batch.labels is None:
        raise DimensionError("batch carries no qubit labels")
    hits: dict[int, list[int]] = {}
    for c in _chain_columns(emb, batch.labels):
        total = batch.spins[:, c].sum(axis=1, dtype=np.int64)
        h = hits.setdefault(c.size, [0, 0])
        h[0] += int(np.count_nonzero(np.abs(total) != c.size))
        h[1] += batch.n_shots
    return {size: (b, t) for size, (b, t) in sorted(hits.items())}


def chain_break_rate(batch: ShotBatch, emb: Embedding) -> dict[int, float]:
    """Fraction of (shot, chain) pairs broken, per chain size."""
    return {size: b / t for size, (b, t) in chain_break_counts(batch, emb).items()}


def run_embedded_shots(source: ProblemGraph, target, emb: Embedding,
                       schedule: AnnealSchedule, n_shots: int, seed: int = 0,
                       chain_strength: float | None = None, discard_broken: bool = False,
                       workers: int | None = None):
    """Sample the embedded problem and map shots back to logical sites.

    Returns ``(logical_batch, physical_batch)``. With ``discard_broken`` shots
    containing any broken chain are dropped from the logical batch.
    """
    violation = verify_embedding(source, target, emb)
    if violation is not None:
        raise ValueError(violation.message)
    physical = embed_problem(source, emb, target, chain_strength)
    raw = run_shots(physical, schedule, n_shots, seed, workers=workers)
    logical, broken = resolve_batch(raw.spins, emb, physical.labels, seed)
    batch = ShotBatch(logical, energies(source, logical), broken.sum(axis=1), seed,
                      source.labels, source.L)
    if discard_broken:
        batch = batch.select(batch.broken == 0)
    return batch, raw
