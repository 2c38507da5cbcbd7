"""Measured quantities of a shot batch: M, E, chi, S(q) and M histograms."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .lattice import DimensionError, as_spins


class InsufficientData(ValueError):
    pass


class NoTransitionDetected(ValueError):
    pass


def magnetization(config) -> float:
    """|sum of spins| per site, in [0, 1]."""
    s = as_spins(config)
    return abs(int(s.sum(dtype=np.int64))) / s.size


def _m_values(batch) -> np.ndarray:
    return np.abs(np.asarray(batch.spins).sum(axis=1, dtype=np.int64)) / batch.n_sites


def susceptibility(batch, per_site: bool = False) -> float:
    """|<M^2> - <M>^2| over shots; ``per_site`` multiplies by the site count."""
    if batch.n_shots < 2:
        raise InsufficientData("susceptibility needs at least two shots")
    m = _m_values(batch)
    chi = abs(float(np.mean(m * m)) - float(np.mean(m)) ** 2)
    return chi * batch.n_sites if per_site else chi


def _side(batch, L=None) -> int:
    L = L if L is not None else getattr(batch, "L", None)
    if L is None:
        L = math.isqrt(batch.n_sites)
    if L * L != batch.n_sites:
        raise DimensionError(f"{batch.n_sites} sites do not form an L x L lattice")
    return int(L)


@dataclass(frozen=True)
class StructureFactorGrid:
    """S at q = (2 pi nx / L, 2 pi ny / L); ``values[nx, ny]``."""

    L: int
    values: np.ndarray

    def argmax(self) -> tuple[int, int]:
        nx, ny = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return int(nx), int(ny)

    def total(self) -> float:
        return float(self.values.sum())

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["nx", "ny", "value"])
        for nx in range(self.L):
            for ny in range(self.L):
                w.writerow([nx, ny, repr(float(self.values[nx, ny]))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def read_sq_csv(path) -> StructureFactorGrid:
    rows = list(csv.DictReader(io.StringIO(Path(path).read_text())))
    L = math.isqrt(len(rows))
    values = np.zeros((L, L))
    for r in rows:
        values[int(r["nx"]), int(r["ny"])] = float(r["value"])
    return StructureFactorGrid(L, values)


def structure_factor_per_shot(spins, L: int, method: str = "fft") -> np.ndarray:
    """|sum_i s_i exp(i q.R_i)|^2 / L^2 for each shot, shape (n_shots, L, L) as [nx, ny]."""
    s = np.asarray(spins, dtype=float).reshape(-1, L, L)  # [shot, y, x]
    if method == "fft":
        amp = np.fft.fft2(s, axes=(1, 2))  # [shot, ny, nx]
        power = (amp.real ** 2 + amp.imag ** 2).transpose(0, 2, 1)
    elif method == "direct":
        k = np.arange(L)
        phase = np.exp(2j * np.pi * np.outer(k, k) / L)  # [n, x]
        # sum_{x,y} s[y, x] e^{i qx x} e^{i qy y}
        amp = np.einsum("ax,byx,cy->bac", phase, s, phase)
        power = amp.real ** 2 + amp.imag ** 2
    else:
        raise ValueError(f"unknown method {method!r}")
    return power / (L * L)


def structure_factor(batch, method: str = "fft", L: int | None = None) -> StructureFactorGrid:
    """Shot-averaged S(q) normalised so that perfect order peaks at L^2."""
    if batch.n_shots < 1:
        raise InsufficientData("structure factor needs at least one shot")
    L = _side(batch, L)
    per_shot = structure_factor_per_shot(batch.spins, L, method)
    return StructureFactorGrid(L, per_shot.mean(axis=0))


def m_histogram(batch, bins: int | None = None) -> dict:
    """Probability of each observed M.

    Exact keys are ``Fraction(|sum|, n_sites)``. With ``bins``, M is counted in
    ``bins`` equal-width bins over [0, 1] keyed by the bin's lower edge.
    """
    if batch.n_shots < 1:
        raise InsufficientData("histogram needs at least one shot")
    n = batch.n_shots
    if bins is None:
        totals = np.abs(np.asarray(batch.spins).sum(axis=1, dtype=np.int64))
        keys, counts = np.unique(totals, return_counts=True)
        return {Fraction(int(k), batch.n_sites): int(c) / n for k, c in zip(keys, counts)}
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts, edges = np.histogram(_m_values(batch), bins=bins, range=(0.0, 1.0))
    return {float(e): int(c) / n for e, c in zip(edges[:-1], counts) if c}


def modality(hist: dict, threshold: float = 0.02) -> int:
    """Number of M values observed with probability >= threshold."""
    return sum(1 for p in hist.values() if p >= threshold)


def histogram_to_csv(hist: dict, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["M", "probability"])
    for m in sorted(hist):
        w.writerow([str(m), repr(float(hist[m]))])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_histogram_csv(path) -> dict:
    rows = csv.DictReader(io.StringIO(Path(path).read_text()))
    return {Fraction(r["M"]): float(r["probability"]) for r in rows}


@dataclass(frozen=True)
class Observables:
    M: float
    E_per_site: float
    chi: float
    m_histogram: dict
    sq: StructureFactorGrid | None = None
    n_shots: int = 0


def compute_observables(batch, with_sq: bool = False, per_site_chi: bool = False) -> Observables:
    m = _m_values(batch)
    chi = susceptibility(batch, per_site_chi) if batch.n_shots >= 2 else 0.0
    return Observables(
        M=float(m.mean()),
        E_per_site=float(np.mean(batch.energies)) / batch.n_sites,
        chi=chi,
        m_histogram=m_histogram(batch),
        sq=structure_factor(batch) if with_sq else None,
        n_shots=batch.n_shots,
    )


@dataclass(frozen=True)
class TransitionEstimate:
    ratio: float
    chi_argmax: float
    interval: tuple[float, float]


def detect_transition(results, min_points: int = 5) -> TransitionEstimate:
    """Locate the first downward crossing of M = 1/2 by linear interpolation.

    ``results`` is a sequence of ``(ratio, Observables)`` sorted by ratio.
    """
    results = list(results)
    if len(results) < min_points:
        raise NoTransitionDetected(f"need at least {min_points} points, got {len(results)}")
    ratios = np.array([r for r, _ in results], dtype=float)
    if np.any(np.diff(ratios) <= 0):
        raise ValueError("ratios must be strictly increasing")
    m = np.array([o.M for _, o in results], dtype=float)
    chi = np.array([o.chi for _, o in results], dtype=float)
    for i in range(len(m) - 1):
        if m[i] >= 0.5 > m[i + 1]:
            frac = (m[i] - 0.5) / (m[i] - m[i + 1])
            x = ratios[i] + frac * (ratios[i + 1] - ratios[i])
            return TransitionEstimate(float(x), float(ratios[int(np.argmax(chi))]),
                                      (float(ratios[i]), float(ratios[i + 1])))
    raise NoTransitionDetected("M never drops through 0.5")


SWEEP_HEADER = ["ratio", "M", "E", "chi", "transition_flag"]


def sweep_to_csv(results, estimate: TransitionEstimate | None = None, path=None) -> str:
    """Rows ``ratio,M,E,chi,transition_flag``; the flag marks the bracketing interval.

    Entries whose observables are ``None`` (failed points) are written as nan.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for ratio, obs in results:
        flag = int(estimate is not None and ratio in estimate.interval)
        if obs is None:
            w.writerow([repr(float(ratio)), "nan", "nan", "nan", flag])
        else:
            w.writerow([repr(float(ratio)), repr(obs.M), repr(obs.E_per_site), repr(obs.chi), flag])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_sweep_csv(path) -> list[dict]:
    rows = csv.DictReader(io.StringIO(Path(path).read_text()))
    return [{"ratio": float(r["ratio"]), "M": float(r["M"]), "E": float(r["E"]),
             "chi": float(r["chi"]), "transition_flag": int(r["transition_flag"])}
            for r in rows]
