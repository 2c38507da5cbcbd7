"""Experiment pipelines: coupling sweeps, S(q) maps, M histograms and chain census.

Every pipeline writes CSV files into ``ExperimentConfig.output_dir`` together
with ``config.txt`` (the resolved configuration) and ``manifest.txt``.
Sweep points are cached one file per ratio under ``cells/`` so an interrupted
run resumes where it stopped; ``force=True`` recomputes them.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .embedding import EmbeddingNotFound, chain_stats, find_embedding
from .lattice import BoundaryCondition, LatticeSpec, build_lattice
from .observables import (
    NoTransitionDetected,
    Observables,
    StructureFactorGrid,
    compute_observables,
    detect_transition,
    histogram_to_csv,
    m_histogram,
    modality,
    structure_factor_per_shot,
    sweep_to_csv,
)
from .pegasus import build_pegasus
from .sampler import (
    AnnealSchedule,
    chain_break_counts,
    refine_constraints,
    run_embedded_shots,
    run_shots,
)

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


def _ratio_grid(start, stop, step) -> tuple[float, ...]:
    n = int(round((stop - start) / step))
    return tuple(round(start + k * step, 10) for k in range(n + 1))


def _floats(value) -> tuple[float, ...]:
    return tuple(float(v) for v in value)


def _ints(value) -> tuple[int, ...]:
    return tuple(int(v) for v in value)


@dataclass(frozen=True)
class ExperimentConfig:
    L: int = 20
    J1: float = 1.0
    bc: str = "obc"
    ratios: tuple = _ratio_grid(0.20, 0.90, 0.02)
    n_shots: int = 1000
    sampler: str = "sa"
    sweeps: int = 1000
    t_start: float = 2.0
    t_end: float = 0.01
    gamma_start: float = 3.0
    gamma_end: float = 0.01
    trotter: int = 20
    t_q: float = 0.05
    random_order: bool = False
    refine: bool = True
    rounds: int = 4
    shots_per_round: int = 50
    lambda0: float = 0.2
    decay: float = 0.5
    patience: int = 2
    seed: int = 0
    embedded: bool = False
    pegasus_m: int = 16
    chain_strength: float = 0.0  # 0 selects the default scaling
    embed_tries: int = 10
    discard_broken: bool = False
    sq_ratios: tuple = (0.38, 0.46, 0.54)
    hist_ratios: tuple = (0.26, 0.46, 0.78)
    hist_shots: int = 10000
    census_L: tuple = (4, 6, 8, 10, 12)
    census_bc: tuple = ("obc", "pbc")
    census_seeds: int = 10
    break_L: tuple = (8, 10)
    break_shots: int = 500
    break_ratio: float = 0.5
    workers: int = 0  # 0 defers to the environment / cpu count
    output_dir: str = "out"

    def __post_init__(self):
        conv = {
            "ratios": _floats, "sq_ratios": _floats, "hist_ratios": _floats,
            "census_L": _ints, "break_L": _ints,
            "census_bc": lambda v: tuple(str(b).lower() for b in v),
        }
        for name, fn in conv.items():
            object.__setattr__(self, name, fn(getattr(self, name)))
        object.__setattr__(self, "bc", str(self.bc).lower())
        object.__setattr__(self, "sampler", str(self.sampler).lower())
        try:
            self.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def validate(self) -> None:
        if not self.ratios:
            raise ValueError("ratios must not be empty")
        if any(b <= a for a, b in zip(self.ratios, self.ratios[1:])):
            raise ValueError("ratios must be strictly increasing")
        if min(self.ratios) < 0:
            raise ValueError("ratios must be >= 0")
        for name in ("n_shots", "hist_shots", "break_shots", "census_seeds", "embed_tries"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.workers < 0 or self.chain_strength < 0:
            raise ValueError("workers and chain_strength must be >= 0")
        for bc in (self.bc, *self.census_bc):
            BoundaryCondition.parse(bc)
        LatticeSpec(self.L, self.J1, 0.0, self.bc)
        self.schedule()
        if self.refine:
            if self.rounds < 1 or self.shots_per_round < 1:
                raise ValueError("rounds and shots_per_round must be >= 1")
            if self.lambda0 < 0 or not 0 < self.decay <= 1:
                raise ValueError("need lambda0 >= 0 and 0 < decay <= 1")
        if self.pegasus_m < 2:
            raise ValueError("pegasus_m must be >= 2")

    def schedule(self) -> AnnealSchedule:
        if self.sampler == "sa":
            return AnnealSchedule.sa(self.sweeps, self.t_start, self.t_end,
                                     random_order=self.random_order)
        if self.sampler == "sqa":
            return AnnealSchedule.sqa(self.sweeps, self.gamma_start, self.gamma_end,
                                      self.trotter, self.t_q, random_order=self.random_order)
        raise ValueError(f"sampler must be 'sa' or 'sqa', got {self.sampler!r}")

    def lattice(self, ratio: float, L: int | None = None, bc: str | None = None):
        return build_lattice(LatticeSpec(L or self.L, self.J1, ratio * self.J1, bc or self.bc))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        return cls.from_mapping({**parse_config_text(text), **overrides})

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(), **overrides)

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        kinds = {f.name: f.default for f in dataclasses.fields(cls)}
        kw = {}
        for key, raw in values.items():
            if key not in kinds:
                raise ConfigError(f"unknown config key {key!r}")
            kw[key] = raw if not isinstance(raw, str) else _coerce(key, raw, kinds[key])
        return cls(**kw)


def _coerce(key, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            if ":" in raw:  # start:stop:step
                start, stop, step = (float(p) for p in raw.split(":"))
                return _ratio_grid(start, stop, step)
            items = [p.strip() for p in raw.replace(",", " ").split()]
            return tuple(items)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = value
    return out


# -- sampling -----------------------------------------------------------------

@dataclass
class RunContext:
    """Per-run caches: Pegasus target and embeddings keyed by lattice geometry."""

    config: ExperimentConfig
    _target: object = None
    _embeddings: dict = field(default_factory=dict)

    @property
    def workers(self):
        return self.config.workers or None

    def target(self):
        if self._target is None:
            self._target = build_pegasus(self.config.pegasus_m)
        return self._target

    def embedding(self, graph, seed):
        key = (graph.L, graph.bc, seed)
        if key not in self._embeddings:
            self._embeddings[key] = find_embedding(
                graph, self.target(), tries=self.config.embed_tries, seed=seed)
        return self._embeddings[key]


def sample_ratio(ctx: RunContext, ratio: float, n_shots: int):
    """One batch of logical shots at a coupling ratio, honouring refine/embedded."""
    cfg = ctx.config
    graph = cfg.lattice(ratio)
    schedule = cfg.schedule()
    if cfg.embedded:
        emb = ctx.embedding(graph, cfg.seed)
        batch, _ = run_embedded_shots(
            graph, ctx.target(), emb, schedule, n_shots, cfg.seed,
            chain_strength=cfg.chain_strength or None,
            discard_broken=cfg.discard_broken, workers=ctx.workers)
        return batch
    if cfg.refine:
        _, batch = refine_constraints(
            graph, schedule, rounds=cfg.rounds, shots_per_round=cfg.shots_per_round,
            lambda0=cfg.lambda0, decay=cfg.decay, seed=cfg.seed, final_shots=n_shots,
            workers=ctx.workers, patience=cfg.patience)
        return batch
    return run_shots(graph, schedule, n_shots, cfg.seed, workers=ctx.workers)


# -- output helpers -------------------------------------------------------------

def _prepare(config: ExperimentConfig, out=None) -> Path:
    root = Path(out if out is not None else config.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.txt").write_text(config.to_text())
    return root


def write_manifest(root: Path, config: ExperimentConfig, command: str, wall: float,
                   extra: dict | None = None) -> None:
    lines = [
        f"command = {command}",
        f"seed = {config.seed}",
        f"j1j2anneal = {__version__}",
        f"backend = {BACKEND}",
        f"numpy = {np.__version__}",
        f"python = {platform.python_version()}",
    ]
    lines += [f"{k} = {v}" for k, v in (extra or {}).items()]
    lines.append(f"wall_time_s = {wall:.3f}")
    lines.append("")
    lines.append("[config]")
    (root / "manifest.txt").write_text("\n".join(lines) + "\n" + config.to_text())


def _write_rows(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _tag(ratio: float) -> str:
    return f"{ratio:.4f}"


# -- coupling sweep ---------------------------------------------------------------

@dataclass
class SweepResult:
    rows: list  # (ratio, Observables | None)
    estimate: object  # TransitionEstimate | None
    failures: dict  # ratio -> message
    out: Path


CELL_HEADER = ["status", "ratio", "M", "E", "chi", "message"]


def _read_cell(path: Path):
    row = next(csv.DictReader(io.StringIO(path.read_text())))
    ratio = float(row["ratio"])
    if row["status"] != "ok":
        return ratio, None, row["message"]
    obs = Observables(float(row["M"]), float(row["E"]), float(row["chi"]), {})
    return ratio, obs, None


def _write_cell(path: Path, ratio, obs, message=""):
    if obs is None:
        row = ["failed", repr(ratio), "nan", "nan", "nan", message]
    else:
        row = ["ok", repr(ratio), repr(obs.M), repr(obs.E_per_site), repr(obs.chi), ""]
    _write_rows(path, CELL_HEADER, [row])


def run_sweep(config: ExperimentConfig, out=None, force: bool = False) -> SweepResult:
    start = time.perf_counter()
    root = _prepare(config, out)
    cells = root / "cells"
    cells.mkdir(exist_ok=True)
    ctx = RunContext(config)
    rows, failures = [], {}
    computed = 0
    for ratio in config.ratios:
        path = cells / f"ratio_{_tag(ratio)}.csv"
        if path.exists() and not force:
            _, obs, message = _read_cell(path)
        else:
            message = None
            try:
                obs = compute_observables(sample_ratio(ctx, ratio, config.n_shots))
            except EmbeddingNotFound as exc:
                obs, message = None, str(exc)
            _write_cell(path, ratio, obs, message or "")
            computed += 1
            log.info("ratio %.4f: %s", ratio, "failed" if obs is None else f"M={obs.M:.4f}")
        rows.append((ratio, obs))
        if obs is None:
            failures[ratio] = message
    good = [(r, o) for r, o in rows if o is not None]
    try:
        estimate = detect_transition(good)
        summary = [["estimate", repr(estimate.ratio)], ["chi_argmax", repr(estimate.chi_argmax)],
                   ["interval_lo", repr(estimate.interval[0])],
                   ["interval_hi", repr(estimate.interval[1])]]
    except NoTransitionDetected as exc:
        estimate = None
        summary = [["estimate", "none"], ["reason", str(exc)]]
    sweep_to_csv(rows, estimate, root / "sweep.csv")
    _write_rows(root / "transition.csv", ["key", "value"], summary)
    if failures:
        _write_rows(root / "failures.csv", ["ratio", "message"],
                    [[repr(r), m] for r, m in failures.items()])
    write_manifest(root, config, "sweep", time.perf_counter() - start,
                   {"cells_computed": computed, "cells_total": len(rows)})
    return SweepResult(rows, estimate, failures, root)


# -- structure factor maps -------------------------------------------------

def run_sq_maps(config: ExperimentConfig, ratios=None, out=None) -> dict:
    start = time.perf_counter()
    root = _prepare(config, out)
    ctx = RunContext(config)
    ratios = config.sq_ratios if ratios is None else tuple(ratios)
    grids, peaks = {}, []
    for ratio in ratios:
        batch = sample_ratio(ctx, ratio, config.n_shots)
        L = config.L
        per_shot = structure_factor_per_shot(batch.spins, L)
        # each shot's S(q) must sum to L^2 over the grid
        parseval = float(np.max(np.abs(per_shot.sum(axis=(1, 2)) - L * L)))
        grid = StructureFactorGrid(L, per_shot.mean(axis=0))
        grid.to_csv(root / f"sq_{_tag(ratio)}.csv")
        grids[ratio] = grid
        nx, ny = grid.argmax()
        peaks.append([repr(ratio), nx, ny, repr(float(grid.values[nx, ny])), repr(parseval)])
    _write_rows(root / "sq_peaks.csv", ["ratio", "nx", "ny", "value", "parseval_max_error"],
                peaks)
    write_manifest(root, config, "sqmap", time.perf_counter() - start)
    return grids


def region_weights(grid, radius: int = 1) -> dict:
    """Largest S(q) near (0,0) and near the two stripe wave vectors.

    "Near" means within ``radius`` grid steps along each axis, wrapping around.
    """
    L = grid.L
    half = L // 2

    def peak(cx, cy):
        idx = [(cx + dx) % L for dx in range(-radius, radius + 1)]
        idy = [(cy + dy) % L for dy in range(-radius, radius + 1)]
        return float(grid.values[np.ix_(idx, idy)].max())

    return {"fm": peak(0, 0), "stripe": max(peak(half, 0), peak(0, half)),
            "max": float(grid.values.max())}


# -- histograms ------------------------------------------------------------------

def run_fig4(config: ExperimentConfig, ratios=None, n_shots=None, out=None) -> dict:
    start = time.perf_counter()
    root = _prepare(config, out)
    ctx = RunContext(config)
    ratios = config.hist_ratios if ratios is None else tuple(ratios)
    n_shots = config.hist_shots if n_shots is None else n_shots
    hists, summary = {}, []
    for ratio in ratios:
        hist = m_histogram(sample_ratio(ctx, ratio, n_shots))
        histogram_to_csv(hist, root / f"hist_{_tag(ratio)}.csv")
        hists[ratio] = hist
        mode = max(hist, key=hist.get)
        summary.append([repr(ratio), modality(hist), str(mode), repr(float(hist[mode]))])
    _write_rows(root / "modality.csv", ["ratio", "modality", "mode_M", "mode_probability"],
                summary)
    write_manifest(root, config, "hist", time.perf_counter() - start, {"n_shots": n_shots})
    return hists


# -- chain census and chain breaks ---------------------------------------------------

@dataclass
class CensusResult:
    stats: dict  # (L, bc, seed) -> ChainStats
    failures: dict  # (L, bc, seed) -> message

    def mean_count(self, L, bc, size) -> float:
        vals = [s.count(size) for (l, b, _), s in self.stats.items() if l == L and b == bc]
        return float(np.mean(vals)) if vals else float("nan")

    def mean_total(self, L, bc) -> float:
        vals = [s.total_qubits for (l, b, _), s in self.stats.items() if l == L and b == bc]
        return float(np.mean(vals)) if vals else float("nan")


def run_chain_census(config: ExperimentConfig, L_list=None, bc_list=None, seeds=None,
                     out=None, target=None) -> CensusResult:
    """Embed each (L, bc, seed) lattice and tabulate chain sizes; failures are recorded."""
    start = time.perf_counter()
    root = _prepare(config, out)
    L_list = config.census_L if L_list is None else tuple(L_list)
    bc_list = config.census_bc if bc_list is None else tuple(bc_list)
    seeds = range(config.census_seeds) if seeds is None else seeds
    seeds = list(seeds)
    target = target if target is not None else build_pegasus(config.pegasus_m)
    result = CensusResult({}, {})
    for bc in bc_list:
        for L in L_list:
            if BoundaryCondition.parse(bc) is BoundaryCondition.PBC and L < 3:
                continue
            graph = build_lattice(LatticeSpec(L, config.J1, 0.5 * config.J1, bc))
            for seed in seeds:
                key = (L, bc, seed)
                try:
                    emb = find_embedding(graph, target, tries=config.embed_tries, seed=seed)
                except EmbeddingNotFound as exc:
                    result.failures[key] = str(exc)
                    continue
                result.stats[key] = chain_stats(emb)
    raw = [[L, bc, seed, n, c] for (L, bc, seed), s in sorted(result.stats.items())
           for n, c in sorted(s.counts.items())]
    _write_rows(root / "chains_raw.csv", ["L", "bc", "seed", "N", "count"], raw)
    sizes = sorted({n for s in result.stats.values() for n in s.counts})
    table = []
    for bc in bc_list:
        for L in L_list:
            n_ok = sum(1 for k in result.stats if k[0] == L and k[1] == bc)
            if not n_ok:
                continue
            for n in sizes:
                table.append([L, bc, n, repr(result.mean_count(L, bc, n))])
    _write_rows(root / "chains.csv", ["L", "bc", "N", "count"], table)
    _write_rows(root / "census_failures.csv", ["L", "bc", "seed", "message"],
                [[L, bc, seed, m] for (L, bc, seed), m in sorted(result.failures.items())])
    write_manifest(root, config, "chains", time.perf_counter() - start,
                   {"embeddings": len(result.stats), "failures": len(result.failures)})
    return result


def run_break_census(config: ExperimentConfig, L_list=None, n_shots=None, out=None,
                     target=None) -> dict:
    """Chain-break counts per chain size from embedded sampling at ``break_ratio``.

    Returns ``{L: {N: (broken, total)}}`` over (shot, chain) pairs.
    """
    start = time.perf_counter()
    root = _prepare(config, out)
    L_list = config.break_L if L_list is None else tuple(L_list)
    n_shots = config.break_shots if n_shots is None else n_shots
    target = target if target is not None else build_pegasus(config.pegasus_m)
    counts, rows = {}, []
    for L in L_list:
        graph = config.lattice(config.break_ratio, L=L)
        try:
            emb = find_embedding(graph, target, tries=config.embed_tries, seed=config.seed)
        except EmbeddingNotFound as exc:
            rows.append([L, "", "", "", "", f"failed: {exc}"])
            continue
        _, physical = run_embedded_shots(
            graph, target, emb, config.schedule(), n_shots, config.seed,
            chain_strength=config.chain_strength or None, workers=config.workers or None)
        counts[L] = chain_break_counts(physical, emb)
        rows += [[L, n, b, t, repr(b / t), ""] for n, (b, t) in counts[L].items()]
    _write_rows(root / "chain_breaks.csv", ["L", "N", "broken", "total", "break_rate", "note"],
                rows)
    write_manifest(root, config, "breaks", time.perf_counter() - start, {"n_shots": n_shots})
    return counts


def pooled_break_rates(counts: dict[int, tuple[int, int]]) -> tuple[float, float]:
    """Break rate of two-qubit chains and of all chains with three or more qubits."""
    def rate(sizes):
        b = sum(counts[n][0] for n in sizes)
        t = sum(counts[n][1] for n in sizes)
        return b / t if t else float("nan")
    return rate([n for n in counts if n == 2]), rate([n for n in counts if n >= 3])
