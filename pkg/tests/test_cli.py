import csv
import json

import pytest

from collbreak.cli import ConfigError, config_from_dict, main

UNIFORM = {
    "kernel": {"A": 1.0, "alpha": 0.5, "beta": 0.5},
    "daughter": {"variant": "uniform"},
    "initial": {"kind": "two_point", "rho0": 0.5, "rho1": 1.0, "N": 64},
    "T": 2.0,
    "integrator": {"observable_stride": 0.5},
}


def write(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(tmp_path, command, cfg, *extra):
    out = tmp_path / f"out_{command}"
    code = main([command, "--config", write(tmp_path, cfg), "--out", str(out), *extra])
    return code, out


def test_validate_uniform(tmp_path):
    code, out = run(tmp_path, "validate", UNIFORM)
    assert code == 0
    doc = json.loads((out / "validation.json").read_text())
    assert doc["mandatory_passed"] and doc["moment_fits"][0]["epsilon"] >= 1 / 3 - 1e-6
    assert (out / "schema.json").exists()


def test_validate_broken_table(tmp_path):
    lines = [f"{j} {k} 1 2.0" for j in range(1, 9) for k in range(1, 9)]
    (tmp_path / "bad.txt").write_text("\n".join(lines) + "\n")
    cfg = {**UNIFORM, "daughter": {"variant": "custom", "table_path": "bad.txt"}, "validate": {"jk_max": 8}}
    code, _ = run(tmp_path, "validate", cfg)
    assert code == 1


def test_missing_config_file(tmp_path, capsys):
    assert main(["validate", "--config", str(tmp_path / "none.json")]) == 2
    assert "configuration error" in capsys.readouterr().err


@pytest.mark.parametrize(
    "patch",
    [{"kernel": {"A": 1.0, "alpha": 1.0, "beta": 1.0}}, {"daughter": {"variant": "nope"}}, {"T": -1},
     {"bogus": 1}, {"integrator": {"rtol": 0}}, {"initial": {"kind": "two_point", "rho0": 0.1, "rho1": 1.0}},
     {"stationary": {"method": "newton"}}, {"checks": ["mass", "vibes"]}],
)
def test_invalid_configs_exit_2(tmp_path, patch):
    code, _ = run(tmp_path, "simulate", {**UNIFORM, **patch})
    assert code == 2


def test_simulate_monomer_constant(tmp_path):
    cfg = {**UNIFORM, "initial": {"kind": "monomer", "rho1": 2.0, "N": 16}}
    code, out = run(tmp_path, "simulate", cfg)
    assert code == 0
    rows = list(csv.DictReader((out / "trajectory.csv").open()))
    assert {r["M1"] for r in rows} == {"2.0"} and {r["w1"] for r in rows} == {"2.0"}


def test_simulate_uniform_outputs(tmp_path):
    cfg = {**UNIFORM, "snapshot_times": [1.0], "debug_pair_flux": True}
    code, out = run(tmp_path, "simulate", cfg)
    assert code == 0
    checks = {r["name"]: r for r in json.loads((out / "checks.json").read_text())}
    assert checks["mass"]["passed"] and checks["m0_constant"]["passed"]
    assert (out / "final_state.csv").exists() and (out / "pair_flux.csv").exists()
    assert [p.name for p in (out / "snapshots").iterdir()] == ["state_t1.0.csv"]


def test_simulate_integrator_failure(tmp_path):
    cfg = {**UNIFORM, "initial": {"kind": "power_law", "rho0": 0.5, "rho1": 1.0, "N": 32, "support": 8},
           "integrator": {"dt_init": 5.0, "dt_min": 4.0, "dt_max": 5.0, "rtol": 1e-12}, "T": 10.0}
    code, out = run(tmp_path, "simulate", cfg)
    assert code == 3 and (out / "failure_state.csv").exists()


def test_simulate_no_mass_transfer(tmp_path):
    cfg = {**UNIFORM, "daughter": {"variant": "no_mass_transfer"}, "T": 300.0,
           "initial": {"kind": "two_point", "rho0": 0.6, "rho1": 1.0, "N": 32}}
    code, out = run(tmp_path, "simulate", cfg)
    assert code == 0
    final = (out / "final_state.csv").read_text().splitlines()
    assert float(final[1].split(",")[1]) == pytest.approx(1.0, abs=1e-6)


STATIONARY = {**UNIFORM, "initial": {**UNIFORM["initial"], "N": 128}}


def test_stationary_uniform(tmp_path):
    code, out = run(tmp_path, "stationary", STATIONARY)
    assert code == 0
    doc = json.loads((out / "stationary.json").read_text())
    checks = {c["name"]: c for c in doc["checks"]}
    assert checks["nontrivial"]["passed"] and checks["m0_conserved"]["passed"]


def test_stationary_accelerated(tmp_path):
    code, _ = run(tmp_path, "stationary", {**STATIONARY, "stationary": {"method": "accelerated"}})
    assert code == 0


def test_stationary_small_cap_fails_tail_check(tmp_path):
    code, out = run(tmp_path, "stationary", UNIFORM)
    assert code == 1
    checks = {c["name"]: c for c in json.loads((out / "stationary.json").read_text())["checks"]}
    assert not checks["tail"]["passed"]


def test_stationary_horizon_too_short(tmp_path):
    code, _ = run(tmp_path, "stationary", {**UNIFORM, "stationary": {"t_max": 0.5}})
    assert code == 4


def test_stationary_keep_two(tmp_path):
    cfg = {**UNIFORM, "daughter": {"variant": "keep_two"}}
    code, out = run(tmp_path, "stationary", cfg)
    assert code == 0
    checks = {c["name"]: c for c in json.loads((out / "stationary.json").read_text())["checks"]}
    assert checks["w1_below_m0"]["passed"] and checks["w1_below_m0"]["applicable"]


def test_sweep_grid(tmp_path):
    cfg = {**UNIFORM, "sweep": {"rho0": [0.6, 0.8], "rho1": [1.0, 1.2]}}
    code, out = run(tmp_path, "sweep", cfg)
    assert code == 0
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert [(r["rho0"], r["rho1"]) for r in rows] == [("0.6", "1.0"), ("0.6", "1.2"), ("0.8", "1.0"), ("0.8", "1.2")]
    assert all(r["status"] == "ok" for r in rows)


def test_sweep_parallel_is_byte_identical(tmp_path):
    cfg = {**UNIFORM, "sweep": {"rho0": [0.6, 0.8], "rho1": [1.0, 1.2]}}
    _, serial = run(tmp_path, "sweep", cfg)
    text = (serial / "sweep.csv").read_bytes()
    out = tmp_path / "par"
    assert main(["sweep", "--config", write(tmp_path, cfg), "--out", str(out), "--jobs", "2"]) == 0
    assert (out / "sweep.csv").read_bytes() == text


def test_eta_sweep_reports_distances(tmp_path):
    cfg = {**UNIFORM, "daughter": {"variant": "keep_two"},
           "initial": {"kind": "two_point", "rho0": 0.5, "rho1": 1.0, "N": 32},
           "stationary": {"method": "accelerated"}, "sweep": {"eta": [0.1, 0.2]}}
    code, out = run(tmp_path, "sweep", cfg)
    assert code == 0
    lines = (out / "sweep_distances.csv").read_text().splitlines()
    assert lines[0] == "a,b,y1_distance" and len(lines) == 2


def test_sweep_empty_grid(tmp_path):
    code, _ = run(tmp_path, "sweep", {**UNIFORM, "sweep": {"rho0": []}})
    assert code == 2
    code, _ = run(tmp_path, "sweep", UNIFORM)
    assert code == 2


def test_rerun_is_byte_identical(tmp_path):
    init = {"kind": "power_law", "rho0": 0.5, "rho1": 1.0, "N": 32, "support": 8, "perturbation": 1e-6}
    cfg = {**UNIFORM, "initial": init}
    _, out = run(tmp_path, "simulate", cfg, "--seed", "7")
    first = (out / "trajectory.csv").read_bytes()
    _, out = run(tmp_path, "simulate", cfg, "--seed", "7")
    assert (out / "trajectory.csv").read_bytes() == first
    _, out = run(tmp_path, "simulate", cfg, "--seed", "8")
    assert (out / "trajectory.csv").read_bytes() != first


def test_config_object():
    cfg = config_from_dict(UNIFORM)
    assert cfg.initial.N == 64 and cfg.integrator.observable_stride == 0.5
    with pytest.raises(ConfigError):
        config_from_dict([1, 2])
