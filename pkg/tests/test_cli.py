import csv

import pytest

from idapbc import config, pipeline
from idapbc.cli import main
from idapbc.config import ConfigError


def run(tmp_path, command, *sets, config_path=None):
    argv = [command, "--out", str(tmp_path)]
    if config_path is not None:
        argv += ["--config", str(config_path)]
    for s in sets:
        argv += ["--set", s]
    return main(argv)


def read_kv(path):
    out = {}
    for line in path.read_text().splitlines():
        k, _, v = line.partition(" = ")
        out[k] = v
    return out


# --- configuration --------------------------------------------------------


def test_defaults_resolve_maglev():
    cfg = pipeline.load_config(None, {})
    assert cfg["system.resolved"] == "maglev"
    assert cfg["gains.p1"] == 400.0
    assert cfg["design.m2"] == 0.0
    assert cfg["sim.x0"] == "default"


def test_file_then_override_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\ngains.p1 = 500\ngrid.count = 64  # trailing\n")
    cfg = pipeline.load_config(path, config.parse_overrides(["gains.p1=450"]))
    assert cfg["gains.p1"] == 450.0
    assert cfg["grid.count"] == 64


@pytest.mark.parametrize(
    "text",
    ["gains.p1 400", "nosection = 1", "gains.p1 =", "grid.count = 1.5", "sim.svg = maybe", "bogus.key = 1"],
)
def test_malformed_config_rejected(tmp_path, text):
    path = tmp_path / "bad.cfg"
    path.write_text(text + "\n")
    with pytest.raises(ConfigError):
        pipeline.load_config(path, {})


def test_custom_system_resolution():
    cfg = pipeline.load_config(None, {"system.name": "custom", "system.custom": "double_integrator"})
    assert cfg["system.resolved"] == "double_integrator"
    assert "gains.k1" in cfg and "gains.p1" not in cfg
    with pytest.raises(ConfigError):
        pipeline.load_config(None, {"system.name": "custom"})
    with pytest.raises(ConfigError):
        pipeline.load_config(None, {"system.name": "pendulum"})


def test_override_of_foreign_gain_is_unknown():
    with pytest.raises(ConfigError):
        pipeline.load_config(None, {"system.name": "double_integrator", "gains.p1": "400"})


# --- check ----------------------------------------------------------------


def test_check_maglev_passes(tmp_path):
    assert run(tmp_path, "check") == 0
    kv = read_kv(tmp_path / "check.kv")
    assert kv["check.passed"] == "true"
    assert kv["config.gains.p1"] == "400.0"
    assert "constant_structure" in (tmp_path / "check.txt").read_text()


def test_check_fails_on_dissipation(tmp_path, capsys):
    assert run(tmp_path, "check", "gains.v12=2") == 1
    assert "Failed: dissipation" in capsys.readouterr().out
    assert read_kv(tmp_path / "check.kv")["check.passed"] == "false"


def test_missing_config_file(tmp_path, capsys):
    assert run(tmp_path, "check", config_path=tmp_path / "absent.cfg") == 2
    assert "cannot read config" in capsys.readouterr().err


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["check", "--out", str(blocker / "sub")]) == 2


# --- design ---------------------------------------------------------------


def test_design_default_passes(tmp_path):
    assert run(tmp_path, "design") == 0
    kv = read_kv(tmp_path / "design.kv")
    assert kv["design.certificate"] == "true"
    assert float(kv["design.schur_max"]) == pytest.approx(345.3, abs=0.5)
    assert float(kv["design.matching_residual"]) < 1e-7


def test_design_low_gain_fails_certificate(tmp_path):
    assert run(tmp_path, "design", "gains.p1=100") == 1
    kv = read_kv(tmp_path / "design.kv")
    assert kv["design.certificate"] == "false"
    assert "hessian_certificate" in kv["design.failures"]


def test_design_invalid_gain_sign(tmp_path, capsys):
    assert run(tmp_path, "design", "gains.alpha13=2") == 2
    assert "alpha13" in capsys.readouterr().err


def test_design_automatic_m2(tmp_path):
    assert run(tmp_path, "design", "gains.p1=100", "design.m2=auto") == 0
    kv = read_kv(tmp_path / "design.kv")
    assert float(kv["design.M2"]) > float(kv["design.bound"])


def test_design_double_integrator(tmp_path):
    assert run(tmp_path, "design", "system.name=double_integrator", "gains.k1=1") == 0
    assert "single_field" in (tmp_path / "design.txt").read_text()


# --- simulate -------------------------------------------------------------


def test_simulate_short_run(tmp_path):
    assert run(tmp_path, "simulate", "sim.t_end=0.01", "sim.record_every=10") == 0
    with open(tmp_path / "trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "y1", "y2", "y3", "u", "H_d", "residual"]
    assert len(rows) - 1 == 100 // 10 + 1
    # physical coordinates: the default start is the ball at y2 = 0
    assert float(rows[1][2]) == 0.0
    assert (tmp_path / "trajectory.svg").read_text().startswith("<svg")
    assert read_kv(tmp_path / "simulate.kv")["sim.events"] == "none"


@pytest.mark.parametrize("p1", ["100", "1"])
def test_simulate_reports_domain_exit(tmp_path, p1):
    assert run(tmp_path, "simulate", f"gains.p1={p1}", "sim.t_end=0.01", "sim.svg=false") == 1
    assert "domain_exit" in read_kv(tmp_path / "simulate.kv")["sim.events"]
    assert not (tmp_path / "trajectory.svg").exists()


def test_simulate_initial_state_outside_domain(tmp_path):
    assert run(tmp_path, "simulate", "sim.t_end=0.01", "sim.x0=0, 5, 0") == 2


def test_simulate_bad_step(tmp_path):
    assert run(tmp_path, "simulate", "sim.dt=-1") == 2


# --- sweep ----------------------------------------------------------------


def test_sweep_empty_range(tmp_path):
    assert run(tmp_path, "sweep") == 2


def test_sweep_unknown_gain(tmp_path):
    assert run(tmp_path, "sweep", "sweep.gain1=q9", "sweep.values1=1") == 2


def test_sweep_invalid_cell_rejected_up_front(tmp_path):
    assert run(tmp_path, "sweep", "sweep.values1=300,-1") == 2
    assert not (tmp_path / "sweep.csv").exists()


def test_sweep_small_grid(tmp_path):
    code = run(tmp_path, "sweep", "sweep.values1=300,400", "sweep.values2=20", "sweep.t_end=0.05")
    assert code == 0
    with open(tmp_path / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["certificate"] for r in rows] == ["false", "true"]
    assert all(r["converged"] == "false" for r in rows)  # 0.05 s is too short to settle
    assert float(rows[0]["gain1"]) == 300.0 and float(rows[0]["gain2"]) == 20.0


def test_sweep_parallel_matches_serial():
    cfg = pipeline.load_config(None, {"sweep.values1": "350,400", "sweep.t_end": "0.02"})
    serial = pipeline.run_sweep(cfg)
    parallel = pipeline.run_sweep({**cfg, "sweep.workers": 2})
    assert serial == parallel
