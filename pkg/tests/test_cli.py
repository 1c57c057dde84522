import json
import subprocess
import sys

import pytest

from sticky_jko.cli import ConfigError, cmd_plot, load_config, main


def run_cli(*args):
    return main([str(a) for a in args])


def small(tmp_path, name="run", **extra):
    cfg = {"domain": {"kind": "interval", "n": 16}, "T": 0.005, "jko": {"tau": 1e-3}, "out": str(tmp_path / name)}
    cfg.update(extra)
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(cfg))
    return p


def test_run_layout_and_determinism(tmp_path):
    cfg = small(tmp_path)
    assert run_cli("run", "--config", cfg) == 0
    out = tmp_path / "run"
    first = (out / "ledger.csv").read_text()
    for name in ("ledger.csv", "series.csv", "diagnostics.json", "manifest.json"):
        assert (out / name).exists()
    assert len(list((out / "states").glob("state_*.csv"))) == 6
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "ok" and man["layout_version"] == 1 and man["config"]["T"] == 0.005
    assert (out / "series.csv").read_text().splitlines()[0] == \
        "t,mass,entropy,rel_entropy,boundary_mass,trace_gap,tv_to_stationary"
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["mass_drift"] <= 1e-10 and diag["max_principle"]["ok"]
    assert run_cli("run", "--config", cfg) == 0
    assert (out / "ledger.csv").read_text() == first


def test_seeded_preset_is_reproducible(tmp_path):
    for name in ("a", "b"):
        assert run_cli("run", "--config", small(tmp_path, name, initial={"preset": "two-blobs"}), "--seed", 7) == 0
    assert (tmp_path / "a" / "ledger.csv").read_text() == (tmp_path / "b" / "ledger.csv").read_text()


def test_config_precedence(tmp_path):
    p = small(tmp_path)
    cfg = load_config(str(p), {})
    assert cfg.raw["domain"]["n"] == 16 and cfg.raw["jko"]["tau"] == 1e-3 and cfg.raw["solver"] == "jko"
    cfg = load_config(str(p), {"jko": {"tau": 5e-4}, "solver": "fd"})
    assert cfg.raw["jko"]["tau"] == 5e-4 and cfg.raw["solver"] == "fd" and cfg.raw["domain"]["n"] == 16
    assert load_config(None, {}).raw["domain"]["n"] == 64


@pytest.mark.parametrize("bad,field", [
    ({"jko": {"tau": -1}}, "jko.tau"),
    ({"domain": {"kind": "square"}}, "domain.kind"),
    ({"T": "long"}, "T"),
    ({"initial": {"preset": "csv", "path": "/nonexistent.csv"}}, "initial.path"),
    ({"colour": 1}, "colour"),
    ({"jko": {"tau": 1e-3, "gamma": 2}}, "jko.gamma"),
])
def test_config_errors_name_the_field(bad, field):
    with pytest.raises(ConfigError, match=f"^{field}"):
        load_config(None, bad)


def test_exit_codes(tmp_path, capsys):
    assert run_cli("run", "--tau", -1, "--out", tmp_path / "x") == 2
    assert "jko.tau" in capsys.readouterr().err
    assert run_cli("run", "--config", tmp_path / "missing.json") == 2
    assert run_cli("demo", "nope", "--out", tmp_path / "d") == 2
    assert "max_principle" in capsys.readouterr().err
    p = small(tmp_path, "fail", jko={"tau": 1e-3, "sinkhorn_epsilon": 1e-6, "max_inner_iter": 1,
                                     "scaling_sweeps": 1, "inner_tol": 1e-15, "strict": True})
    assert run_cli("run", "--config", p) == 3
    man = json.loads((tmp_path / "fail" / "manifest.json").read_text())
    assert man["status"] == "solver_failure"


def test_fd_solver_and_plot(tmp_path, capsys):
    assert run_cli("run", "--config", small(tmp_path), "--solver", "fd", "--T", 0.5) == 0
    written = cmd_plot(tmp_path / "run")
    assert {p.name for p in written} == {"entropy.svg", "rel_entropy.svg", "trace_gap.svg", "boundary_mass.svg"}
    assert "EDI columns missing" in capsys.readouterr().err
    assert (tmp_path / "run" / "entropy.svg").read_text().startswith("<svg")


def test_plot_jko_run_and_missing_columns(tmp_path, capsys):
    assert run_cli("run", "--config", small(tmp_path)) == 0
    names = {p.name for p in cmd_plot(tmp_path / "run")}
    assert "edi.svg" in names
    (tmp_path / "run" / "series.csv").write_text("t,entropy\n0,1.0\n0.001,0.9\n")
    (tmp_path / "run" / "ledger.csv").unlink()
    names = {p.name for p in cmd_plot(tmp_path / "run")}
    assert names == {"entropy.svg"}
    assert "rel_entropy" in capsys.readouterr().err
    assert run_cli("plot", tmp_path / "empty") == 2


def test_compare_with_refinement(tmp_path, monkeypatch):
    monkeypatch.setenv("STICKY_JKO_THREADS", "2")
    assert run_cli("compare", "--config", small(tmp_path), "--refine", 1) == 0
    rep = json.loads((tmp_path / "run" / "compare.json").read_text())
    assert len(rep["levels"]) == 2 and len(rep["sup_tv_ratios"]) == 1
    assert rep["levels"][1]["tau"] == 5e-4 and rep["levels"][1]["domain"]["n"] == 32
    assert (tmp_path / "run" / "compare_level1.csv").exists()
    monkeypatch.setenv("STICKY_JKO_THREADS", "zero")
    assert run_cli("compare", "--config", small(tmp_path)) == 2
    assert run_cli("compare", "--config", small(tmp_path), "--solvers", "jko") == 2


def test_demos(tmp_path):
    assert run_cli("demo", "nonconvexity", "--out", tmp_path / "nc") == 0
    rep = json.loads((tmp_path / "nc" / "nonconvexity.json").read_text())
    assert rep["interior_fraction"] >= 0.99 and rep["ok"]
    assert run_cli("demo", "slope_probe", "--out", tmp_path / "sp") == 0
    rep = json.loads((tmp_path / "sp" / "slope_probe.json").read_text())
    assert rep["rows"][0]["t"] == 1e-4 and rep["ok"]
    assert run_cli("demo", "max_principle", "--out", tmp_path / "mp") == 0
    assert json.loads((tmp_path / "mp" / "max_principle.json").read_text())["ok"]


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "sticky_jko.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "compare" in r.stdout
