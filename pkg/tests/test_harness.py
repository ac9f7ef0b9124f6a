import csv
import json
import math

import numpy as np
import pytest

from adiabound import harness as hs
from adiabound.harness import ConfigError, ExperimentConfig, FitError, fit_decay


def _small_cfg(**kw):
    base = dict(hamiltonian={"builtin": "x-to-z", "n": 1}, schedule={"family": "smooth_poly", "Nb": 2}, N=2,
                sweep={"variable": "T", "values": [10.0, 20.0, 30.0, 40.0]}, tol=1e-9)
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_errors():
    with pytest.raises(ConfigError):
        ExperimentConfig(sweep={"variable": "T", "start": 1.0, "stop": 2.0, "num": 0})
    with pytest.raises(ConfigError):
        ExperimentConfig(sweep={"variable": "T", "values": []})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"hamiltonian": {"builtin": "x-to-z", "n": 1}, "bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig(hamiltonian={"builtin": "ising"})
    with pytest.raises(ConfigError):
        ExperimentConfig(sweep={"variable": "N", "values": [1.5]})
    with pytest.raises(ConfigError):
        ExperimentConfig(frame="rotating")
    with pytest.raises(ConfigError):
        ExperimentConfig(sweep={"variable": "T", "start": -1.0, "stop": 2.0, "num": 3, "spacing": "log"})


def test_sweep_values_and_hash():
    cfg = ExperimentConfig(sweep={"variable": "T", "start": 5.0, "stop": 50.0, "num": 10, "spacing": "log"})
    vals = cfg.sweep_values()
    assert len(vals) == 10 and vals[0] == pytest.approx(5.0) and vals[-1] == pytest.approx(50.0)
    assert np.allclose(np.diff(np.log(vals)), math.log(10) / 9)
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.hash() == cfg.hash()
    assert ExperimentConfig(seed=1).hash() != ExperimentConfig(seed=2).hash()


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")


def test_sweep_is_deterministic(tmp_path):
    cfg = _small_cfg()
    a = hs.run_sweep(cfg, out=tmp_path / "a")
    b = hs.run_sweep(cfg, out=tmp_path / "b")
    assert a.csv_path.read_bytes() == b.csv_path.read_bytes()
    with open(a.csv_path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert {r["config_hash"] for r in rows} == {cfg.hash()}
    assert all(r["status"] == "ok" for r in rows)
    doc = json.loads(a.json_path.read_text())
    assert doc["config_hash"] == cfg.hash() and len(doc["wall_time_s"]) == 4
    assert "fit" in doc


def test_sweep_rows_are_consistent():
    res = hs.run_sweep(_small_cfg(), write=False)
    for r in res.rows:
        assert r["JT"] == pytest.approx(r["T"]) and r["epsilon"] == pytest.approx(1 / r["T"])
        assert 0 <= r["fidelity"] <= 1
        assert r["delta_measured"] <= r["delta1"] + r["delta2"] + 1e-12
        assert not r["bound_applies"]
    d = res.column("delta_measured")
    assert np.all(np.diff(d) < 0)


def test_parallel_sweep_matches_serial(tmp_path):
    serial = hs.run_sweep(_small_cfg(), out=tmp_path / "s")
    par = hs.run_sweep(_small_cfg(workers=2), out=tmp_path / "p")
    keys = ("T", "delta_measured", "fidelity", "steps")
    for a, b in zip(serial.rows, par.rows):
        assert all(a[k] == b[k] for k in keys)


def test_sweep_records_failed_rows():
    cfg = _small_cfg(sweep={"variable": "N", "values": [1, 99]}, T=20.0)
    res = hs.run_sweep(cfg, write=False)
    assert res.rows[0]["status"] == "ok"
    assert res.rows[1]["status"] == "error" and res.rows[1]["censored"]


def test_fit_synthetic_exponential():
    N = np.arange(1, 9)
    fit = fit_decay({"N": N, "delta_measured": 2.0 ** (-N)}, "N")
    assert abs(fit.slope + math.log(2)) < 1e-9
    assert fit.r2 == pytest.approx(1.0) and fit.n_used == 8 and fit.n_censored == 0
    assert fit.ci95[0] <= fit.slope <= fit.ci95[1]


def test_fit_constant_and_noisy():
    fit = fit_decay({"x": [1, 2, 3, 4, 5], "delta_measured": [0.1] * 5}, "x")
    assert fit.slope == pytest.approx(0.0, abs=1e-12)
    rng = np.random.default_rng(0)
    x = np.linspace(0, 10, 40)
    y = np.exp(-0.5 * x + 0.05 * rng.normal(size=40))
    fit = fit_decay({"x": x, "delta_measured": y}, "x")
    assert fit.ci95[0] < -0.5 < fit.ci95[1]


def test_fit_censoring():
    rows = [{"N": n, "delta_measured": v} for n, v in enumerate([1e-2, 1e-4, 1e-6, 1e-8, 1e-13, 0.0])]
    fit = fit_decay(rows, "N")
    assert fit.n_used == 4 and fit.n_censored == 2
    rows.append({"N": 9, "delta_measured": 1e-3, "censored": True})
    rows.append({"N": 10, "delta_measured": 1e-3, "status": "error"})
    assert fit_decay(rows, "N").n_censored == 4
    with pytest.raises(FitError):
        fit_decay(rows[:3], "N")
    with pytest.raises(FitError):
        fit_decay({"N": [1, 1, 1, 1], "delta_measured": [1e-2, 1e-3, 1e-4, 1e-5]}, "N")


def test_censored_flag():
    assert hs._censored({"delta_measured": 5e-12, "delta_floor": 1e-12})
    assert not hs._censored({"delta_measured": 5e-11, "delta_floor": 1e-12})
    assert hs._censored({"delta_measured": float("nan"), "delta_floor": 0.0})


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_cli_exit_codes(tmp_path, capsys):
    assert hs.main(["check"]) == hs.EXIT_OK
    assert hs.main(["simulate", "--config", str(tmp_path / "nope.json")]) == hs.EXIT_CONFIG
    bad = _write(tmp_path, {"hamiltonian": {"builtin": "x-to-z", "n": 1}, "unknown": 3})
    assert hs.main(["simulate", "--config", bad]) == hs.EXIT_CONFIG
    assert hs.main(["sweep", "--config", _write(tmp_path, {}, "empty.json")]) == hs.EXIT_CONFIG
    assert hs.main(["simulate", "--seed", str(2**64)]) == hs.EXIT_CONFIG
    with pytest.raises(SystemExit):
        hs.main(["frobnicate"])
    capsys.readouterr()


def test_cli_simulate_and_bound(tmp_path, capsys):
    cfg = _write(tmp_path, {"hamiltonian": {"builtin": "x-to-z", "n": 1},
                            "schedule": {"family": "smooth_poly", "Nb": 2}, "N": 2, "T": 30.0, "tol": 1e-9})
    assert hs.main(["simulate", "--config", cfg]) == hs.EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["T"] == 30.0 and out["status"] == "ok"
    bcfg = _write(tmp_path, {"bound": {"N": 1, "q": 2.0, "xi": 1.0, "d": 1.0}}, "b.json")
    assert hs.main(["bound", "--config", bcfg, "--out", str(tmp_path / "o")]) == hs.EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["T"] == pytest.approx(28.0)
    assert (tmp_path / "o" / "bound.json").exists()
    bad = _write(tmp_path, {"bound": {"N": 1, "q": 0.5}}, "bad.json")
    assert hs.main(["bound", "--config", bad]) == hs.EXIT_CONFIG


def test_cli_superadiabatic(tmp_path, capsys):
    cfg = _write(tmp_path, {"hamiltonian": {"builtin": "x-to-z", "n": 1}, "schedule": {"family": "smooth_poly", "Nb": 2}})
    assert hs.main(["superadiabatic", "--config", cfg, "--out", str(tmp_path / "sa")]) == hs.EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["boundary"]["passed"] and doc["A_numeric"] <= doc["A_analytic"]
    assert (tmp_path / "sa" / "norm_profiles.csv").exists()


def test_cli_sweep_writes_files(tmp_path, capsys):
    cfg = _small_cfg()
    path = _write(tmp_path, cfg.to_dict())
    assert hs.main(["sweep", "--config", path, "--out", str(tmp_path / "sw")]) == hs.EXIT_OK
    capsys.readouterr()
    files = sorted(p.name for p in (tmp_path / "sw").iterdir())
    assert len(files) == 2 and all(f.startswith("sweep_T_") for f in files)
