import csv
import filecmp
import io

import numpy as np
import pytest

from j1j2anneal import experiments
from j1j2anneal.experiments import (
    ConfigError,
    ExperimentConfig,
    parse_config_text,
    region_weights,
    run_chain_census,
    run_fig4,
    run_sq_maps,
    run_sweep,
)
from j1j2anneal.lattice import ferromagnet
from j1j2anneal.observables import read_histogram_csv, read_sq_csv, read_sweep_csv, structure_factor
from j1j2anneal.sampler import ShotBatch

SMALL = dict(L=6, ratios=(0.3, 0.4, 0.5, 0.6, 0.7), n_shots=30, sweeps=200,
             rounds=2, shots_per_round=10, seed=5)


def tree(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_defaults():
    c = ExperimentConfig()
    assert c.L == 20 and c.bc == "obc" and c.n_shots == 1000
    assert len(c.ratios) == 36 and c.ratios[0] == 0.2 and c.ratios[-1] == 0.9
    assert c.schedule().sweeps == 1000 and c.schedule().kind == "sa"


def test_config_text_roundtrip():
    c = ExperimentConfig(**SMALL)
    assert ExperimentConfig.from_text(c.to_text()) == c


def test_config_parsing(tmp_path):
    text = """
    # comment
    L = 8
    bc = PBC
    ratios = 0.2:0.3:0.05   # range syntax
    hist_ratios = 0.26, 0.46
    refine = false
    sampler = sqa
    """
    c = ExperimentConfig.from_text(text)
    assert c.L == 8 and c.bc == "pbc" and c.ratios == (0.2, 0.25, 0.3)
    assert c.hist_ratios == (0.26, 0.46) and c.refine is False and c.schedule().kind == "sqa"
    (tmp_path / "c.txt").write_text(text)
    assert ExperimentConfig.from_file(tmp_path / "c.txt", L="10").L == 10


@pytest.mark.parametrize("text", [
    "nonsense = 1",
    "L = ten",
    "L = 1",
    "ratios = 0.5, 0.4",
    "refine = maybe",
    "sampler = exact",
    "bc = moebius",
    "sweeps = -4",
    "n_shots = 0",
    "decay = 0",
    "just words",
    "L = 4\nL = 5",
])
def test_config_rejects(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text(text)


def test_parse_config_text():
    assert parse_config_text("a = 1\n\n b=  x y \n") == {"a": "1", "b": "x y"}


def test_sweep_outputs_and_determinism(tmp_path):
    cfg = ExperimentConfig(**SMALL)
    a = run_sweep(cfg, out=tmp_path / "a")
    b = run_sweep(cfg, out=tmp_path / "b")
    ta, tb = tree(tmp_path / "a"), tree(tmp_path / "b")
    assert ta.keys() == tb.keys()
    for name in ta:
        if name.name != "manifest.txt":  # holds the wall time
            assert ta[name] == tb[name], name
    rows = read_sweep_csv(tmp_path / "a" / "sweep.csv")
    assert [r["ratio"] for r in rows] == list(cfg.ratios)
    assert rows[0]["M"] > 0.9 > rows[-1]["M"]
    assert a.estimate is not None and 0.4 <= a.estimate.ratio <= 0.7
    assert sum(r["transition_flag"] for r in rows) == 2
    echo = (tmp_path / "a" / "config.txt").read_text()
    assert ExperimentConfig.from_text(echo) == cfg
    manifest = (tmp_path / "a" / "manifest.txt").read_text()
    assert "wall_time_s" in manifest and "seed = 5" in manifest and "numpy" in manifest


def test_sweep_resumes(tmp_path):
    cfg = ExperimentConfig(**SMALL)
    run_sweep(cfg, out=tmp_path)
    first = (tmp_path / "sweep.csv").read_bytes()
    (tmp_path / "cells" / "ratio_0.5000.csv").unlink()
    run_sweep(cfg, out=tmp_path)
    assert (tmp_path / "sweep.csv").read_bytes() == first
    assert "cells_computed = 1" in (tmp_path / "manifest.txt").read_text()
    run_sweep(cfg, out=tmp_path, force=True)
    assert "cells_computed = 5" in (tmp_path / "manifest.txt").read_text()
    assert (tmp_path / "sweep.csv").read_bytes() == first


def test_single_point_sweep(tmp_path):
    res = run_sweep(ExperimentConfig(**{**SMALL, "ratios": (0.3,)}), out=tmp_path)
    assert len(res.rows) == 1 and res.estimate is None
    assert "none" in (tmp_path / "transition.csv").read_text()
    assert len(read_sweep_csv(tmp_path / "sweep.csv")) == 1


def test_embedded_failures_are_recorded(tmp_path):
    cfg = ExperimentConfig(**{**SMALL, "L": 7, "ratios": (0.3, 0.6), "embedded": True,
                              "pegasus_m": 2, "embed_tries": 1})
    res = run_sweep(cfg, out=tmp_path)
    assert set(res.failures) == {0.3, 0.6}
    assert "cannot fit" in (tmp_path / "failures.csv").read_text()
    assert all(np.isnan(r["M"]) for r in read_sweep_csv(tmp_path / "sweep.csv"))


def test_embedded_sweep_runs(tmp_path):
    cfg = ExperimentConfig(**{**SMALL, "L": 4, "ratios": (0.2, 0.8), "embedded": True,
                              "n_shots": 20})
    res = run_sweep(cfg, out=tmp_path)
    assert not res.failures
    m = [o.M for _, o in res.rows]
    assert m[0] > m[1]


def test_sq_maps_plumbing(tmp_path, monkeypatch):
    hand = ShotBatch(np.array([ferromagnet(4)] * 3), np.zeros(3), np.zeros(3, int), 0, L=4)
    monkeypatch.setattr(experiments, "sample_ratio", lambda ctx, ratio, n: hand)
    grids = run_sq_maps(ExperimentConfig(**{**SMALL, "L": 4}), out=tmp_path)
    for ratio, grid in grids.items():
        assert np.array_equal(grid.values, structure_factor(hand).values)
        assert np.array_equal(read_sq_csv(tmp_path / f"sq_{ratio:.4f}.csv").values, grid.values)
    peaks = list(csv.DictReader(io.StringIO((tmp_path / "sq_peaks.csv").read_text())))
    assert [(int(p["nx"]), int(p["ny"])) for p in peaks] == [(0, 0)] * 3
    assert all(float(p["parseval_max_error"]) == 0.0 for p in peaks)


def test_region_weights():
    hand = ShotBatch(np.array([ferromagnet(6), -ferromagnet(6)]), np.zeros(2),
                     np.zeros(2, int), 0, L=6)
    w = region_weights(structure_factor(hand))
    assert w["fm"] == w["max"] == 36 and w["stripe"] == 0


def test_histogram_pipeline_outputs(tmp_path):
    cfg = ExperimentConfig(**{**SMALL, "hist_ratios": (0.2, 0.8)})
    hists = run_fig4(cfg, n_shots=40, out=tmp_path)
    for ratio, h in hists.items():
        assert read_histogram_csv(tmp_path / f"hist_{ratio:.4f}.csv") == h
    summary = list(csv.DictReader(io.StringIO((tmp_path / "modality.csv").read_text())))
    assert [float(r["ratio"]) for r in summary] == [0.2, 0.8]
    assert summary[0]["mode_M"] == "1" and summary[1]["mode_M"] == "0"


def test_chain_census_small(tmp_path):
    cfg = ExperimentConfig(**SMALL)
    res = run_chain_census(cfg, L_list=(2, 3), bc_list=("obc", "pbc"), seeds=range(2),
                           out=tmp_path)
    assert res.stats[(2, "obc", 0)].counts == {1: 4}
    assert (2, "pbc", 0) not in res.stats and (3, "pbc", 1) in res.stats
    rows = list(csv.DictReader(io.StringIO((tmp_path / "chains.csv").read_text())))
    assert rows[0].keys() == {"L", "bc", "N", "count"}
    raw = list(csv.DictReader(io.StringIO((tmp_path / "chains_raw.csv").read_text())))
    total = sum(int(r["count"]) for r in raw if r["L"] == "3" and r["bc"] == "obc")
    assert total == 2 * 9


def test_chain_census_records_failures(tmp_path):
    cfg = ExperimentConfig(**{**SMALL, "pegasus_m": 2, "embed_tries": 1})
    res = run_chain_census(cfg, L_list=(2, 7), bc_list=("obc",), seeds=[0], out=tmp_path)
    assert (7, "obc", 0) in res.failures and (2, "obc", 0) in res.stats
    assert "7,obc,0" in (tmp_path / "census_failures.csv").read_text()
