"""Time the compiled kernels against their pure-Python twins.

    python benchmarks/bench_kernels.py --L 12 --sweeps 200 --repeat 3

Both backends get identical inputs and generator states; the script also
checks that they return identical spins before reporting timings.
"""

import argparse
import time

import numpy as np

from j1j2anneal._backend import compiled_kernels, python_kernels
from j1j2anneal.lattice import LatticeSpec, build_lattice
from j1j2anneal.pegasus import build_pegasus
from j1j2anneal.sampler import AnnealSchedule


def _best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - start)
    return best, out


def metropolis_case(mod, graph, schedule, seed):
    def run():
        rng = np.random.default_rng(seed)
        spins = rng.choice(np.array([-1, 1], dtype=np.int8), graph.n_sites)
        visit = np.arange(graph.n_sites, dtype=np.intp)[None, :]
        indptr, indices, coupling = graph.csr()
        mod.metropolis_anneal(indptr, indices, coupling, graph.fields, spins,
                              schedule.temperatures(), visit, rng)
        return spins
    return run


def sqa_case(mod, graph, schedule, seed):
    def run():
        rng = np.random.default_rng(seed)
        slices = rng.choice(np.array([-1, 1], dtype=np.int8), (schedule.trotter, graph.n_sites))
        visit = np.arange(graph.n_sites, dtype=np.intp)[None, :]
        indptr, indices, coupling = graph.csr()
        mod.sqa_anneal(indptr, indices, coupling, graph.fields, slices, schedule.jperp(),
                       schedule.trotter * schedule.t_q, visit, rng)
        return slices
    return run


def distance_case(mod, target, n_sources):
    def run():
        rng = np.random.default_rng(0)
        weight = rng.uniform(1.0, 4.0, target.n_nodes)
        sources = rng.choice(target.n_nodes, n_sources, replace=False).astype(np.intp)
        return mod.node_weighted_distances(target.indptr, target.indices, weight, sources,
                                           np.inf)
    return run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--L", type=int, default=12)
    ap.add_argument("--sweeps", type=int, default=200)
    ap.add_argument("--trotter", type=int, default=8)
    ap.add_argument("--pegasus-m", type=int, default=6)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    compiled = compiled_kernels()
    if compiled is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    graph = build_lattice(LatticeSpec(args.L, 1.0, 0.5, "obc"))
    sa = AnnealSchedule.sa(sweeps=args.sweeps)
    sqa = AnnealSchedule.sqa(sweeps=max(1, args.sweeps // 4), trotter=args.trotter)
    target = build_pegasus(args.pegasus_m)
    cases = {
        f"metropolis L={args.L} sweeps={args.sweeps}":
            lambda m: metropolis_case(m, graph, sa, args.seed),
        f"sqa L={args.L} P={args.trotter} sweeps={sqa.sweeps}":
            lambda m: sqa_case(m, graph, sqa, args.seed),
        f"distances P{args.pegasus_m} 8 sources":
            lambda m: distance_case(m, target, 8),
    }
    print(f"{'kernel':<40} {'compiled s':>11} {'python s':>11} {'speedup':>8}")
    for name, make in cases.items():
        t_c, out_c = _best_of(make(compiled), args.repeat)
        t_p, out_p = _best_of(make(python_kernels), args.repeat)
        if not np.array_equal(np.asarray(out_c), np.asarray(out_p)):
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:<40} {t_c:>11.4f} {t_p:>11.4f} {t_p / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
