"""Annealing emulator and Pegasus minor-embedding toolkit for the J1-J2 Ising model."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .embedding import (
    ChainStats,
    Embedding,
    EmbeddingNotFound,
    chain_stats,
    embed_problem,
    find_embedding,
    verify_embedding,
)
from .lattice import (
    BoundaryCondition,
    LatticeSpec,
    ProblemGraph,
    build_lattice,
    delta_energy,
    energy,
)
from .observables import (
    Observables,
    StructureFactorGrid,
    detect_transition,
    m_histogram,
    magnetization,
    structure_factor,
    susceptibility,
)
from .pegasus import PegasusGraph, build_pegasus, contains_k4
from .sampler import (
    AnnealSchedule,
    ShotBatch,
    refine_constraints,
    resolve_chains,
    run_shots,
    sa_shot,
    sqa_shot,
)

__all__ = [
    "BACKEND", "AnnealSchedule", "BoundaryCondition", "ChainStats", "Embedding",
    "EmbeddingNotFound", "LatticeSpec", "Observables", "PegasusGraph", "ProblemGraph",
    "ShotBatch", "StructureFactorGrid", "build_lattice", "build_pegasus", "chain_stats",
    "contains_k4", "delta_energy", "detect_transition", "embed_problem", "energy",
    "find_embedding", "m_histogram", "magnetization", "refine_constraints",
    "resolve_chains", "run_shots", "sa_shot", "sqa_shot", "structure_factor",
    "susceptibility", "verify_embedding",
]
