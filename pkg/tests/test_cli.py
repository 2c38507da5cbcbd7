import json
import shutil
import subprocess

import pytest

from j1j2anneal.cli import COMMANDS, build_parser, main
from j1j2anneal.embedding import read_embedding
from j1j2anneal.lattice import read_graph
from j1j2anneal.sampler import read_shots_csv

FAST = ["--set", "sweeps=100", "--set", "rounds=1", "--set", "shots_per_round=5"]


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("L = 4\nn_shots = 12\nsweeps = 100\nrounds = 1\nshots_per_round = 5\n")
    return path


def test_every_subcommand_has_common_flags():
    parser = build_parser()
    assert set(COMMANDS) == {"sweep", "sqmap", "hist", "chains", "embed", "shots"}
    for name in COMMANDS:
        args = parser.parse_args([name, "--seed", "3", "--out", "x", "--config", "c"])
        assert (args.seed, args.out, args.config) == (3, "x", "c")


def test_sweep(tmp_path, cfg_file, capsys):
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(cfg_file), "--seed", "1", "--out", str(out),
                 "--ratios", "0.2,0.4,0.6,0.8,0.9"]) == 0
    assert "transition" in capsys.readouterr().out
    for name in ("sweep.csv", "transition.csv", "config.txt", "manifest.txt"):
        assert (out / name).exists()
    assert "seed = 1" in (out / "config.txt").read_text()
    assert main(["sweep", "--config", str(cfg_file), "--out", str(out), "--force",
                 "--ratios", "0.2,0.4,0.6,0.8,0.9", "--seed", "1"]) == 0


def test_sqmap_and_hist(tmp_path, cfg_file, capsys):
    assert main(["sqmap", "--config", str(cfg_file), "--out", str(tmp_path / "q"),
                 "--ratios", "0.3"]) == 0
    assert (tmp_path / "q" / "sq_0.3000.csv").exists()
    assert main(["hist", "--config", str(cfg_file), "--out", str(tmp_path / "h"),
                 "--ratios", "0.3,0.7", "--shots", "10", "--seed", "2"]) == 0
    text = capsys.readouterr().out
    assert "ratio,modality" in text
    assert (tmp_path / "h" / "hist_0.7000.csv").exists()


def test_chains(tmp_path, capsys):
    assert main(["chains", "--out", str(tmp_path), "--sizes", "2,3", "--bcs", "obc",
                 "--seeds", "2", "--set", "break_L=3", "--set", "break_shots=5",
                 "--set", "sweeps=50", "--breaks"]) == 0
    assert "embeddings: 4 failures: 0" in capsys.readouterr().out
    assert (tmp_path / "chains.csv").exists() and (tmp_path / "chain_breaks.csv").exists()


def test_embed(tmp_path):
    assert main(["embed", "--L", "3", "--bc", "pbc", "--seed", "4", "--out", str(tmp_path),
                 "--export-target", "--set", "pegasus_m=4"]) == 0
    emb = read_embedding(tmp_path / "embedding.txt")
    assert emb.n_sites == 9
    assert read_graph(tmp_path / "lattice.txt").n_sites == 9
    assert (tmp_path / "chain_stats.csv").read_text().startswith("N,count\n")
    assert (tmp_path / "pegasus.txt").exists()


def test_shots(tmp_path, capsys):
    assert main(["shots", "--L", "4", "--ratio", "0.3", "--shots", "8", "--seed", "6",
                 "--out", str(tmp_path), *FAST]) == 0
    batch = read_shots_csv(tmp_path / "shots.csv")
    assert batch.n_shots == 8 and batch.n_sites == 16
    assert (tmp_path / "observables.csv").read_text().startswith("ratio,M,E,chi,transition_flag")
    assert capsys.readouterr().out.startswith("M=")


@pytest.mark.parametrize("argv,code", [
    (["sweep", "--set", "nope=1"], 2),
    (["shots", "--set", "L"], 2),
    (["embed", "--L", "7", "--set", "pegasus_m=2", "--set", "embed_tries=1"], 1),
])
def test_errors_are_machine_readable(tmp_path, capsys, argv, code):
    assert main(argv + ["--out", str(tmp_path)]) == code
    err = capsys.readouterr().err.strip().splitlines()
    payload = json.loads(err[-1])
    assert payload["command"] == argv[0] and payload["error"] and payload["message"]


def test_missing_config_file(tmp_path, capsys):
    assert main(["shots", "--config", str(tmp_path / "absent.cfg")]) != 0
    assert json.loads(capsys.readouterr().err)["error"] == "FileNotFoundError"


@pytest.mark.skipif(shutil.which("j1j2anneal") is None, reason="console script not installed")
def test_console_script(tmp_path):
    done = subprocess.run(["j1j2anneal", "shots", "--L", "3", "--shots", "2", "--out",
                           str(tmp_path), *FAST], capture_output=True, text=True)
    assert done.returncode == 0, done.stderr
    bad = subprocess.run(["j1j2anneal", "shots", "--set", "L=0"], capture_output=True, text=True)
    assert bad.returncode == 2 and json.loads(bad.stderr)["error"] == "ConfigError"
