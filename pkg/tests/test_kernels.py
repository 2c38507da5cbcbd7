import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from j1j2anneal import _backend
from j1j2anneal.lattice import LatticeSpec, build_lattice
from j1j2anneal.pegasus import build_pegasus
from j1j2anneal.sampler import AnnealSchedule, shot_rng

compiled = _backend.compiled_kernels()
python = _backend.python_kernels
needs_ext = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def graph(L=4, j2=0.45, bc="pbc", fields=False):
    g = build_lattice(LatticeSpec(L, 1.0, j2, bc))
    if fields:
        g = g.with_fields(np.linspace(-0.2, 0.3, L * L))
    return g


def run_sa(mod, g, temps, visit, seed):
    spins = np.where(shot_rng(seed).random(g.n_sites) < 0.5, 1, -1).astype(np.int8)
    rng = shot_rng(seed, (1,))
    indptr, indices, coupling = g.csr()
    mod.metropolis_anneal(indptr, indices, coupling, g.fields, spins, temps, visit, rng)
    return spins, rng.random()


def run_sqa(mod, g, jperp, temp, visit, P, seed):
    spins = np.where(shot_rng(seed).random((P, g.n_sites)) < 0.5, 1, -1).astype(np.int8)
    rng = shot_rng(seed, (1,))
    indptr, indices, coupling = g.csr()
    mod.sqa_anneal(indptr, indices, coupling, g.fields, spins, jperp, temp, visit, rng)
    return spins, rng.random()


@needs_ext
@settings(max_examples=20)
@given(st.integers(0, 2**32), st.integers(0, 60), st.floats(0.005, 5.0),
       st.booleans(), st.booleans())
def test_sa_parity(seed, sweeps, t_end, shuffled, fields):
    g = graph(fields=fields)
    temps = np.geomspace(max(t_end, 3.0), t_end, sweeps)
    rng = np.random.default_rng(seed)
    rows = 3 if shuffled else 1
    visit = np.stack([rng.permutation(16) if shuffled else np.arange(16) for _ in range(rows)])
    visit = np.ascontiguousarray(visit, dtype=np.intp)
    a = run_sa(compiled, g, temps, visit, seed)
    b = run_sa(python, g, temps, visit, seed)
    assert np.array_equal(a[0], b[0])
    assert a[1] == b[1]  # both consumed the same number of draws


@needs_ext
@settings(max_examples=10)
@given(st.integers(0, 2**32), st.integers(0, 25), st.integers(2, 6), st.floats(0.01, 2.0))
def test_sqa_parity(seed, sweeps, P, temp):
    g = graph(j2=0.6, bc="obc")
    jperp = np.geomspace(0.01, 2.0, sweeps)
    visit = np.arange(16, dtype=np.intp)[None, :]
    a = run_sqa(compiled, g, jperp, temp, visit, P, seed)
    b = run_sqa(python, g, jperp, temp, visit, P, seed)
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]


@needs_ext
@pytest.mark.parametrize("limit", [np.inf, 3.0, 0.0])
def test_distance_parity(limit):
    p = build_pegasus(4)
    w = np.random.default_rng(1).choice([1.0, 2.0, 5.0], p.n_nodes)
    sources = np.array([3, 100, 200], dtype=np.intp)
    a = compiled.node_weighted_distances(p.indptr, p.indices, w, sources, limit)
    b = python.node_weighted_distances(p.indptr, p.indices, w, sources, limit)
    assert np.array_equal(a, b)
    assert (a[sources] == 0).all()


def test_distances_on_a_path():
    indptr = np.array([0, 1, 3, 5, 6], dtype=np.intp)
    indices = np.array([1, 0, 2, 1, 3, 2], dtype=np.intp)
    w = np.array([1.0, 2.0, 3.0, 4.0])
    for mod in filter(None, (compiled, python)):
        d = mod.node_weighted_distances(indptr, indices, w, np.array([0], dtype=np.intp), np.inf)
        assert d.tolist() == [0.0, 2.0, 5.0, 9.0]
        d = mod.node_weighted_distances(indptr, indices, w, np.array([0], dtype=np.intp), 5.0)
        assert d.tolist() == [0.0, 2.0, 5.0, np.inf]


def test_visit_length_checked():
    g = graph()
    bad = np.arange(15, dtype=np.intp)[None, :]
    for mod in filter(None, (compiled, python)):
        with pytest.raises(ValueError):
            run_sa(mod, g, np.ones(2), bad, 0)


def test_python_backend_selected_by_environment():
    code = "import j1j2anneal; print(j1j2anneal.BACKEND)"
    env = dict(os.environ, J1J2_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_ext
def test_default_backend_is_compiled():
    assert _backend.BACKEND == "compiled"


@needs_ext
def test_full_shot_parity_through_environment():
    code = ("import numpy as np, j1j2anneal as j;"
            "g=j.build_lattice(j.LatticeSpec(5,1,0.5,'pbc'));"
            "b=j.run_shots(g,j.AnnealSchedule.sqa(sweeps=20,trotter=4),3,seed=2);"
            "print(b.spins.tobytes().hex(), b.energies.tolist())")
    outs = []
    for backend in ("compiled", "python"):
        env = dict(os.environ, J1J2_BACKEND=backend)
        outs.append(subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                                   text=True, check=True).stdout)
    assert outs[0] == outs[1]


def test_schedule_defaults_feed_kernels():
    s = AnnealSchedule.sa()
    assert s.temperatures().shape == (1000,)
