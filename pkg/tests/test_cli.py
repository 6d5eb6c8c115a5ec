import csv
import io
import json
import os

import pytest

from cbdsbl import cli
from cbdsbl.bench import read_results_csv
from cbdsbl.sim import TRACE_COLUMNS, read_trace_csv

FAST = """
seed = 3
[problem]
n = 30
m = 10
k = 3
L = 4
[solver]
k_max = 30
[output]
dir = "{out}"
prefix = "t"
"""


def write_cfg(tmp_path, body, name="exp.toml"):
    p = tmp_path / name
    p.write_text(body.replace("{out}", str(tmp_path / "out")))
    return str(p)


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


# ---------------------------------------------------------------- topology

def test_topology_two_nodes(capsys):
    code, out, _ = run(["topology", "--L", "2", "--p", "1", "--seed", "0"], capsys)
    assert code == 0
    assert "bridges: 0" in out
    assert "kappa: 1\n" in out
    assert "rho_opt: 2\n" in out and "delta_opt: 0.5\n" in out


def test_topology_deterministic(capsys):
    a = run(["topology", "--L", "10", "--p", "0.8", "--seed", "7"], capsys)[1]
    b = run(["topology", "--L", "10", "--p", "0.8", "--seed", "7"], capsys)[1]
    assert a == b and "bridges:" in a


@pytest.mark.parametrize("argv", [["--p", "1.5"], ["--p", "0"], ["--L", "1"], ["--L", "4", "--bridges", "0"]])
def test_topology_validation(argv, capsys):
    code, _, err = run(["topology", "--seed", "0", *argv], capsys)
    assert code == 2 and err


def test_topology_env_seed(monkeypatch, capsys):
    monkeypatch.setenv(cli.SEED_ENV, "7")
    a = run(["topology", "--L", "10", "--p", "0.5"], capsys)[1]
    monkeypatch.delenv(cli.SEED_ENV)
    assert a == run(["topology", "--L", "10", "--p", "0.5", "--seed", "7"], capsys)[1]


# ---------------------------------------------------------------- config validation

def test_k_greater_than_n_names_field(tmp_path, capsys):
    path = write_cfg(tmp_path, "[problem]\nn = 10\nk = 20\n")
    code, _, err = run(["run", "--config", path], capsys)
    assert code == 2
    assert "problem.k" in err and f"{path}:3" in err


def test_unknown_key_is_line_anchored(tmp_path, capsys):
    path = write_cfg(tmp_path, "[problem]\nn = 10\n\n[solver]\nr_maxx = 3\n")
    code, _, err = run(["run", "--config", path], capsys)
    assert code == 2 and f"{path}:5" in err and "solver.r_maxx" in err


def test_unknown_table_and_top_level_key(tmp_path, capsys):
    assert run(["run", "--config", write_cfg(tmp_path, "[solverr]\nk_max = 1\n")], capsys)[0] == 2
    assert run(["run", "--config", write_cfg(tmp_path, "speed = 1\n", "b.toml")], capsys)[0] == 2


def test_bad_values(tmp_path, capsys):
    for i, body in enumerate(["[topology]\np = 1.5\n", "[solver]\nrho = \"fast\"\n", "seed = -1\n",
                              "[run]\ntrials = 0\n", "[problem]\nsnr_db = \"x\"\n", "not toml ["]):
        code, _, err = run(["run", "--config", write_cfg(tmp_path, body, f"c{i}.toml")], capsys)
        assert code == 2, body
        assert err


def test_missing_config_file(tmp_path, capsys):
    assert run(["run", "--config", str(tmp_path / "nope.toml")], capsys)[0] == 2


def test_seed_precedence(tmp_path, monkeypatch):
    path = write_cfg(tmp_path, "seed = 1\n")
    assert cli.load_config(path).seed == 1
    monkeypatch.setenv(cli.SEED_ENV, "5")
    assert cli.load_config(path).seed == 5
    assert cli.load_config(path, seed_flag=9).seed == 9
    monkeypatch.setenv(cli.SEED_ENV, "abc")
    with pytest.raises(cli.ConfigError):
        cli.load_config(path)


def test_rho_auto_and_explicit(tmp_path):
    assert cli.load_config(write_cfg(tmp_path, "[solver]\nrho = \"auto\"\n")).params["rho"] is None
    assert cli.load_config(write_cfg(tmp_path, "[solver]\nrho = 1.5\n", "b.toml")).params["rho"] == 1.5


# ---------------------------------------------------------------- run

def test_run_defaults_writes_trace(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(cli.SEED_ENV, raising=False)
    code, out, _ = run(["run"], capsys)
    assert code == 0
    trace = (tmp_path / "results" / "cbdsbl_trace_000.csv").read_text()
    assert trace.splitlines()[0] == ",".join(TRACE_COLUMNS)
    assert len(read_trace_csv(trace)) >= 2


def test_run_compare_centralized_and_manifest(tmp_path, capsys):
    path = write_cfg(tmp_path, FAST + "[run]\ntrials = 2\n")
    code, _, _ = run(["run", "--config", path, "--compare-centralized"], capsys)
    assert code == 0
    out = tmp_path / "out"
    rows = list(csv.DictReader(io.StringIO((out / "t_report.csv").read_text())))
    assert len(rows) == 2
    assert {"nmse_db", "msbl_nmse_db", "msbl_nser"} <= set(rows[0])
    man = json.loads((out / "t_run_manifest.json").read_text())
    assert man["resolved"]["seed"] == 3 and len(man["trial_seeds"]) == 2
    assert man["config_sha256"] == cli.load_config(path).digest()
    assert man["resolved"]["params"]["r_max"] == 2


def test_run_reproducible_and_parallel_identical(tmp_path, capsys):
    path = write_cfg(tmp_path, FAST + "[run]\ntrials = 2\n")
    run(["run", "--config", path], capsys)
    first = (tmp_path / "out" / "t_report.csv").read_text()
    run(["run", "--config", path, "--jobs", "2"], capsys)
    assert (tmp_path / "out" / "t_report.csv").read_text() == first


def test_run_seed_flag_changes_output(tmp_path, capsys):
    path = write_cfg(tmp_path, FAST)
    run(["run", "--config", path], capsys)
    a = (tmp_path / "out" / "t_report.csv").read_text()
    run(["run", "--config", path, "--seed", "4"], capsys)
    assert (tmp_path / "out" / "t_report.csv").read_text() != a


def test_run_runtime_error_exit_code(tmp_path, capsys):
    body = FAST.replace("k_max = 30", "k_max = 30\nfailure_rate = 1.0")
    path = write_cfg(tmp_path, body + "[topology]\np = 1.0\nbridges = [0]\n")
    code, _, err = run(["run", "--config", path], capsys)
    assert code == 3 and "error" in err


# ---------------------------------------------------------------- sweep

def test_sweep_dry_run_runs_nothing(tmp_path, capsys):
    path = write_cfg(tmp_path, FAST + "[sweep]\npreset = \"phase\"\ntrials = 7\n")
    code, out, _ = run(["sweep", "--config", path, "--dry-run"], capsys)
    assert code == 0 and "36 cells x 7 trials = 252 runs" in out
    assert not (tmp_path / "out").exists()


def test_sweep_rho_plot(tmp_path, capsys):
    body = FAST + "[sweep]\npreset = \"rho\"\ntrials = 1\n"
    code, out, _ = run(["sweep", "--config", write_cfg(tmp_path, body), "--plot"], capsys)
    assert code == 0
    svg = (tmp_path / "out" / "t_sweep.svg").read_text()
    assert "rho scale factor" in svg and "minimum at" in svg
    rows = read_results_csv((tmp_path / "out" / "t_sweep.csv").read_text())
    assert [r["rho_scale"] for r in rows] == [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0]


def test_sweep_heatmap_with_boundary(tmp_path, capsys):
    body = FAST + ("[sweep]\ntrials = 1\nx_axis = \"m_over_n\"\ncol_axis = \"L\"\n"
                   "axes = { m_over_n = [0.2, 0.6], L = [1, 2] }\n")
    code, out, _ = run(["sweep", "--config", write_cfg(tmp_path, body), "--plot"], capsys)
    assert code == 0 and "L=1" in out
    svg = (tmp_path / "out" / "t_sweep.svg").read_text()
    assert "<svg" in svg and "measurement rate m/n" in svg
    man = json.loads((tmp_path / "out" / "t_sweep_manifest.json").read_text())
    assert set(man["boundary"]) == {"1", "2"}


def test_sweep_line_plot_and_errors(tmp_path, capsys):
    body = FAST + "[sweep]\ntrials = 1\naxes = { snr_db = [10.0, 30.0] }\n"
    assert run(["sweep", "--config", write_cfg(tmp_path, body), "--plot"], capsys)[0] == 0
    assert "SNR (dB)" in (tmp_path / "out" / "t_sweep.svg").read_text()
    for i, sw in enumerate(["preset = \"nope\"", "trials = 1", "axes = { bogus = [1] }"]):
        code, _, err = run(["sweep", "--config", write_cfg(tmp_path, FAST + "[sweep]\n" + sw + "\n", f"e{i}.toml")],
                           capsys)
        assert code == 2 and err


# ---------------------------------------------------------------- atomic output

def test_write_atomic_replaces_and_leaves_no_temp(tmp_path):
    target = tmp_path / "sub" / "f.csv"
    cli.write_atomic(target, "a\n")
    cli.write_atomic(target, "b\n")
    assert target.read_text() == "b\n"
    assert os.listdir(target.parent) == ["f.csv"]


def test_write_atomic_failure_keeps_old_file(tmp_path, monkeypatch):
    target = tmp_path / "f.csv"
    target.write_text("old\n")

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(cli.os, "replace", boom)
    with pytest.raises(OSError):
        cli.write_atomic(target, "new\n")
    assert target.read_text() == "old\n"
    assert os.listdir(tmp_path) == ["f.csv"]


def test_module_entry_point():
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "cbdsbl", "topology", "--L", "3", "--p", "1", "--seed", "0"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "rho_opt" in r.stdout
