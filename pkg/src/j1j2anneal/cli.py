"""Command line entry point: ``j1j2anneal <subcommand> [options]``.

Failures exit nonzero after printing one JSON line to stderr::

    {"error": "ConfigError", "message": "...", "command": "sweep"}
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .embedding import chain_stats, find_embedding, write_embedding
from .experiments import (
    ConfigError,
    ExperimentConfig,
    _prepare,
    region_weights,
    run_break_census,
    run_chain_census,
    run_fig4,
    run_sq_maps,
    run_sweep,
    sample_ratio,
    RunContext,
    write_manifest,
)
from .lattice import write_graph
from .observables import compute_observables, sweep_to_csv
from .pegasus import build_pegasus, write_edgelist

EXIT_CONFIG = 2
EXIT_RUNTIME = 1


def _floats(text: str) -> list[float]:
    return [float(p) for p in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(p) for p in text.replace(",", " ").split()]


def _config(args) -> ExperimentConfig:
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for key in ("L", "bc", "n_shots", "sampler", "workers"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = str(v)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["output_dir"] = str(args.out)
    if args.config:
        return ExperimentConfig.from_file(args.config, **overrides)
    return ExperimentConfig.from_mapping(overrides)


def cmd_sweep(args, cfg):
    if args.ratios:
        cfg = cfg.replace(ratios=tuple(_floats(args.ratios)))
    res = run_sweep(cfg, force=args.force)
    if res.estimate is None:
        print("transition: none detected")
    else:
        print(f"transition: {res.estimate.ratio:.4f} "
              f"(chi argmax {res.estimate.chi_argmax:.4f})")
    if res.failures:
        print(f"failed points: {len(res.failures)}")
    return 0


def cmd_sqmap(args, cfg):
    ratios = _floats(args.ratios) if args.ratios else None
    for ratio, grid in run_sq_maps(cfg, ratios).items():
        w = region_weights(grid)
        print(f"{ratio:.4f} argmax={grid.argmax()} fm={w['fm']:.4g} stripe={w['stripe']:.4g}")
    return 0


def cmd_hist(args, cfg):
    ratios = _floats(args.ratios) if args.ratios else None
    run_fig4(cfg, ratios, args.hist_shots)
    print((Path(cfg.output_dir) / "modality.csv").read_text(), end="")
    return 0


def cmd_chains(args, cfg):
    L_list = _ints(args.sizes) if args.sizes else None
    bcs = args.bcs.replace(",", " ").split() if args.bcs else None
    seeds = range(args.seeds) if args.seeds else None
    res = run_chain_census(cfg, L_list, bcs, seeds)
    print(f"embeddings: {len(res.stats)} failures: {len(res.failures)}")
    if args.breaks:
        out = Path(cfg.output_dir)
        for L, counts in run_break_census(cfg, out=out).items():
            print(f"L={L} break rates " + " ".join(
                f"N{n}={b / t:.4f}" for n, (b, t) in counts.items()))
    return 0


def cmd_embed(args, cfg):
    start = time.perf_counter()
    root = _prepare(cfg)
    graph = cfg.lattice(args.ratio)
    target = build_pegasus(cfg.pegasus_m)
    emb = find_embedding(graph, target, tries=cfg.embed_tries, seed=cfg.seed,
                         chain_strength=cfg.chain_strength or None)
    stats = chain_stats(emb)
    write_embedding(emb, root / "embedding.txt")
    write_graph(graph, root / "lattice.txt")
    (root / "chain_stats.csv").write_text(stats.to_csv())
    if args.export_target:
        write_edgelist(target, root / "pegasus.txt")
    write_manifest(root, cfg, "embed", time.perf_counter() - start,
                   {"max_chain": stats.max_chain, "total_qubits": stats.total_qubits})
    print(f"max_chain={stats.max_chain} total_qubits={stats.total_qubits}")
    return 0


def cmd_shots(args, cfg):
    start = time.perf_counter()
    root = _prepare(cfg)
    batch = sample_ratio(RunContext(cfg), args.ratio, cfg.n_shots)
    batch.to_csv(root / "shots.csv", with_spins=True)
    obs = compute_observables(batch)
    sweep_to_csv([(args.ratio, obs)], None, root / "observables.csv")
    write_manifest(root, cfg, "shots", time.perf_counter() - start)
    print(f"M={obs.M:.6f} E={obs.E_per_site:.6f} chi={obs.chi:.6g}")
    return 0


COMMANDS = {
    "sweep": (cmd_sweep, "M, E and chi across a coupling-ratio grid"),
    "sqmap": (cmd_sqmap, "structure-factor maps at selected ratios"),
    "hist": (cmd_hist, "magnetization histograms and their modality"),
    "chains": (cmd_chains, "chain-size census of Pegasus embeddings"),
    "embed": (cmd_embed, "embed one lattice and write its chains"),
    "shots": (cmd_shots, "sample one lattice and write every shot"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="j1j2anneal")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
        p.add_argument("--workers", type=int)
        if name in ("sweep", "sqmap", "hist", "embed", "shots"):
            p.add_argument("--L", type=int)
            p.add_argument("--bc", choices=["obc", "pbc"])
        if name in ("sweep", "sqmap", "shots"):
            p.add_argument("--shots", dest="n_shots", type=int)
        if name in ("sweep", "sqmap", "hist", "shots"):
            p.add_argument("--sampler", choices=["sa", "sqa"])
        if name in ("sweep", "sqmap", "hist"):
            p.add_argument("--ratios", help="comma separated J2/J1 values")
        if name == "sweep":
            p.add_argument("--force", action="store_true", help="recompute cached points")
        if name == "hist":
            p.add_argument("--shots", dest="hist_shots", type=int)
        if name == "chains":
            p.add_argument("--sizes", help="comma separated L values")
            p.add_argument("--bcs", help="comma separated boundary conditions")
            p.add_argument("--seeds", type=int, help="number of seeds per (L, bc)")
            p.add_argument("--breaks", action="store_true",
                           help="also sample embedded problems for chain-break rates")
        if name in ("embed", "shots"):
            p.add_argument("--ratio", type=float, default=0.5)
        if name == "embed":
            p.add_argument("--export-target", action="store_true",
                           help="also write the Pegasus edge list")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler, _ = COMMANDS[args.command]
    try:
        return handler(args, _config(args))
    except Exception as exc:  # reported as one machine-readable line
        code = EXIT_CONFIG if isinstance(exc, (ConfigError, ValueError)) else EXIT_RUNTIME
        print(json.dumps({"error": type(exc).__name__, "message": str(exc),
                          "command": args.command}), file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
