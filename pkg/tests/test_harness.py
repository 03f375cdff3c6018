"""Experiment harness: configs, runners, writers, CLI."""

import os

import pytest

from replicacs.harness.cli import main as cli_main
from replicacs.harness.config import (ConfigError, ExperimentConfig,
                                      read_config, write_config)
from replicacs.harness.records import column_order, write_records
from replicacs.harness.runs import (run_predict, run_simulate, run_spectrum,
                                    run_sweep_region, run_tune)

RIDGE_PREDICT = {
    "mode": "predict", "terminals": "1", "seed": "11",
    "prior.mu_1": "1.0",
    "reg.kind": "ridge", "reg.weight": "0.7",
    "terminal.1.ensemble": "row_orthogonal", "terminal.1.rho": "1.0",
    "terminal.1.lambda": "1.0", "terminal.1.sigma2": "0.1",
}


def _cfg(items):
    return ExperimentConfig({k: str(v) for k, v in items.items()})


# ---------------------------------------------------------------------------
# Config parsing


def test_config_round_trip(tmp_path):
    cfg = _cfg(RIDGE_PREDICT)
    path = tmp_path / "exp.cfg"
    write_config(cfg, str(path))
    assert read_config(str(path)) == cfg
    assert read_config(str(path)).config_hash == cfg.config_hash


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="banana"):
        _cfg({**RIDGE_PREDICT, "prior.banana": "1"})


def test_missing_required_field_named():
    items = dict(RIDGE_PREDICT)
    del items["terminal.1.lambda"]
    with pytest.raises(ConfigError, match="terminal.1.lambda"):
        _cfg(items)


def test_mode_validation():
    with pytest.raises(ConfigError, match="mode"):
        _cfg({**RIDGE_PREDICT, "mode": "explode"})


def test_simulate_n_guard():
    items = {**RIDGE_PREDICT, "mode": "simulate", "simulate.n": "32",
             "simulate.trials": "2"}
    with pytest.raises(ConfigError, match="simulate.n"):
        _cfg(items)
    items["simulate.n"] = "128"
    with pytest.warns(UserWarning):
        _cfg(items)
    items["simulate.n"] = "256"
    _cfg(items)  # no warning at or above 256


def test_comment_and_grid_parsing(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("\n".join([
        "# full experiment",
        "mode = spectrum   # trailing comment",
        "terminals = 1",
        "terminal.1.ensemble = row_orthogonal",
        "terminal.1.rho = 0.5",
        "spectrum.n = 64",
        "sweep.rho_1 = 0.1:0.5:5",
    ]) + "\n")
    cfg = read_config(str(path))
    assert cfg.mode == "spectrum"
    assert cfg.grid("sweep.rho_1") == pytest.approx([0.1, 0.2, 0.3, 0.4, 0.5])


def test_terminal_all_shorthand():
    items = {
        "mode": "predict", "terminals": "2", "prior.mu": "0.1",
        "reg.kind": "l1",
        "terminal.all.ensemble": "iid_gaussian", "terminal.all.rho": "0.5",
        "terminal.all.lambda": "0.1", "terminal.all.sigma2": "0.01",
    }
    cfg = _cfg(items)
    assert cfg.lam() == (0.1, 0.1)
    assert cfg.ensemble(2).kind == "iid_gaussian"


# ---------------------------------------------------------------------------
# Records


def test_column_order_documented():
    cols = column_order(["seed", "D_rs", "mode", "rho_2", "rho_1", "zz_extra",
                         "q_1", "config_hash"])
    assert cols == ["mode", "rho_1", "rho_2", "D_rs", "q_1", "seed",
                    "config_hash", "zz_extra"]


def test_write_records_csv_stable(tmp_path):
    records = [{"mode": "predict", "D_rs": 0.25, "seed": 1, "converged": True}]
    p1, p2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    write_records(records, p1, "csv")
    write_records(records, p2, "csv")
    assert open(p1, "rb").read() == open(p2, "rb").read()
    header = open(p1).readline().strip()
    assert header == "mode,D_rs,converged,seed"


def test_write_records_json(tmp_path):
    import json
    records = [{"mode": "predict", "D_rs": 0.25, "reason": None}]
    path = str(tmp_path / "a.json")
    write_records(records, path, "json")
    row = json.loads(open(path).readline())
    assert row == {"mode": "predict", "D_rs": 0.25}


# ---------------------------------------------------------------------------
# Runners


def test_run_predict_matches_algebra():
    records = run_predict(_cfg(RIDGE_PREDICT))
    rec = records[0]
    w, lam, s2 = 0.7, 1.0, 0.1
    q_star = ((w * lam) ** 2 + s2) / (1 + w * lam) ** 2
    assert rec["status"] == "ok"
    assert rec["converged"] is True
    assert rec["D_rs"] == pytest.approx(q_star, abs=1e-8)
    assert rec["config_hash"] == _cfg(RIDGE_PREDICT).config_hash


def test_run_predict_nonconverged_omits_d():
    cfg = _cfg({**RIDGE_PREDICT, "terminal.1.ensemble": "iid_gaussian",
                "terminal.1.rho": "0.5", "reg.kind": "l1",
                "prior.mu_1": "0.1", "solver.max_iter": "2"})
    rec = run_predict(cfg)[0]
    assert rec["status"] == "ok" and rec["converged"] is False
    assert "D_rs" not in rec


def test_run_predict_failure_is_record():
    # two_dim_lasso with one terminal fails at solve time, not config time
    cfg = _cfg({**RIDGE_PREDICT, "reg.kind": "two_dim_lasso",
                "reg.phi": "1.0", "reg.alpha": "-1.0"})
    rec = run_predict(cfg)[0]
    assert rec["status"] == "failed"
    assert "reason" in rec


SIM_EXACT = {
    "mode": "simulate", "terminals": "1", "seed": "5",
    "prior.mu_1": "0.3",
    "reg.kind": "zero",
    "terminal.1.ensemble": "row_orthogonal", "terminal.1.rho": "1.0",
    "terminal.1.lambda": "1.0", "terminal.1.sigma2": "0.0",
    "simulate.n": "256", "simulate.trials": "3",
}


def test_run_simulate_exact_inversion():
    rec = run_simulate(_cfg(SIM_EXACT))[0]
    assert rec["status"] == "ok"
    assert rec["D_mc"] <= 1e-12
    assert rec["trials_failed"] == 0


def test_run_simulate_deterministic_and_threaded():
    cfg = _cfg({**SIM_EXACT, "reg.kind": "l1", "terminal.1.sigma2": "0.01",
                "terminal.1.ensemble": "iid_gaussian",
                "terminal.1.rho": "0.5", "terminal.1.lambda": "0.1"})
    r1 = run_simulate(cfg)[0]
    r2 = run_simulate(cfg)[0]
    r4 = run_simulate(cfg, threads=4)[0]
    assert r1["D_mc"] == r2["D_mc"] == r4["D_mc"]


def test_run_simulate_se_scaling():
    base = {**SIM_EXACT, "reg.kind": "l1", "terminal.1.sigma2": "0.01",
            "terminal.1.ensemble": "iid_gaussian", "terminal.1.rho": "0.5",
            "terminal.1.lambda": "0.1"}
    se10 = run_simulate(_cfg({**base, "simulate.trials": "10"}))[0]["D_se"]
    se40 = run_simulate(_cfg({**base, "simulate.trials": "40"}))[0]["D_se"]
    ratio = se10 / se40
    assert 1.0 <= ratio <= 4.0  # ~2 expected, factor-2 band around sqrt(4)


TUNE_BASE = {
    "mode": "tune", "terminals": "1", "seed": "3",
    "prior.mu_1": "1.0",
    "reg.kind": "ridge", "reg.weight": "1.0",
    "terminal.1.ensemble": "row_orthogonal", "terminal.1.rho": "1.0",
    "terminal.1.lambda": "1.0", "terminal.1.sigma2": "0.1",
    "tune.free": "weight",
    "tune.lower.weight": "0.001", "tune.upper.weight": "2.0",
}


def test_run_tune_single_point():
    rec = run_tune(_cfg(TUNE_BASE))[0]
    assert rec["status"] == "ok"
    assert rec["weight_star"] == pytest.approx(0.1, abs=1e-2)
    assert rec["D_star"] <= 0.1  # below the no-shrinkage distortion sigma2


def test_run_tune_snr_sweep_sets_sigma2():
    cfg = _cfg({**TUNE_BASE, "tune.snr_db": "0,10"})
    recs = run_tune(cfg)
    assert len(recs) == 2
    assert recs[0]["snr_db"] == 0.0
    # power is 1.0 for the unit gaussian prior, so sigma2 = 10^(-snr/10)
    assert recs[0]["sigma2_1"] == pytest.approx(1.0)
    assert recs[1]["sigma2_1"] == pytest.approx(0.1)


def test_run_tune_local_optimality_probe():
    rec = run_tune(_cfg(TUNE_BASE))[0]
    w_star = rec["weight_star"]
    import dataclasses
    from replicacs.replica_rs import rs_solve
    from replicacs.harness.runs import _build_problem
    prob = _build_problem(_cfg(TUNE_BASE))
    for factor in (0.5, 2.0):
        trial = dataclasses.replace(
            prob, spec=dataclasses.replace(prob.spec, weight=w_star * factor))
        assert rec["D_star"] <= rs_solve(trial).D + 1e-9


SWEEP_BASE = {
    "mode": "sweep_region", "terminals": "2", "seed": "3",
    "prior.special_case": "dcs_common_innovation",
    "prior.mu_c": "0.3", "prior.mu_0": "0.1",
    "reg.kind": "l1",
    "terminal.all.ensemble": "iid_gaussian", "terminal.all.rho": "0.5",
    "terminal.all.lambda": "0.1", "terminal.all.sigma2": "0.01",
    "solver.damping": "1.0", "solver.quad_order": "21",
    "sweep.rho_1": "0.4,0.7", "sweep.rho_2": "0.4,0.7",
    "sweep.threshold": "1e9",
    "tune.free": "lambda",
    "tune.lower.lambda": "0.001", "tune.upper.lambda": "2.0",
    "tune.rel_tol": "0.02",
}


def test_run_predict_dcs_echoes_setup():
    cfg = _cfg({
        "mode": "predict", "terminals": "2", "seed": "8",
        "prior.special_case": "dcs_common_innovation",
        "prior.mu_c": "0.3", "prior.mu_0": "0.1",
        "reg.kind": "two_dim_lasso", "reg.phi": "1.0", "reg.alpha": "-1.0",
        "terminal.all.ensemble": "iid_gaussian", "terminal.all.rho": "0.6",
        "terminal.all.lambda": "0.1", "terminal.all.sigma2": "0.01",
        "solver.damping": "1.0", "solver.quad_order": "31",
    })
    rec = run_predict(cfg)[0]
    assert rec["status"] == "ok" and rec["converged"]
    assert (rec["mu_c"], rec["mu_0"]) == (0.3, 0.1)
    assert (rec["mu_1"], rec["mu_2"]) == (0.0, 0.0)
    assert rec["rho_1"] == rec["rho_2"] == 0.6
    assert rec["reg_phi"] == 1.0 and rec["reg_alpha"] == -1.0
    assert rec["D_rs"] >= 0.0
    assert rec["q_2"] == pytest.approx(rec["q_1"], rel=1e-6)  # symmetric setup


def test_sweep_infinite_threshold_all_in_region():
    recs = run_sweep_region(_cfg(SWEEP_BASE))
    assert len(recs) == 4
    assert all(r["in_region"] for r in recs)
    for r in recs:
        assert r["D_star"] >= 0.0
        assert r["in_region"] == (r["D_star"] <= r["threshold"])


def test_sweep_region_monotone_and_frontier():
    cfg = _cfg({**SWEEP_BASE, "sweep.threshold": "0.35",
                "sweep.rho_1": "0.3,0.5,0.7", "sweep.rho_2": "0.3,0.5,0.7"})
    recs = run_sweep_region(cfg, threads=2)
    member = {(r["rho_1"], r["rho_2"]): r["in_region"] for r in recs}
    for (r1, r2), inside in member.items():
        if inside:
            for (o1, o2), other in member.items():
                if o1 >= r1 and o2 >= r2:
                    assert other, f"monotonicity violated at {(o1, o2)}"
    frontier = [r for r in recs if r.get("on_frontier")]
    if any(member.values()) and not all(member.values()):
        assert frontier


def test_run_spectrum_identity_step():
    cfg = _cfg({"mode": "spectrum", "terminals": "1", "seed": "2",
                "terminal.1.ensemble": "row_orthogonal",
                "terminal.1.rho": "1.0", "spectrum.n": "64"})
    recs = run_spectrum(cfg)
    summary = recs[-1]
    assert summary["ks_distance"] <= 1e-12
    assert summary["mean_empirical"] == pytest.approx(1.0, abs=1e-12)
    eig_rows = recs[:-1]
    assert all(r["cdf_law"] == 1.0 for r in eig_rows)


def test_run_spectrum_row_orthogonal_moments():
    cfg = _cfg({"mode": "spectrum", "terminals": "1", "seed": "2",
                "terminal.1.ensemble": "row_orthogonal",
                "terminal.1.rho": "0.5", "spectrum.n": "512"})
    summary = run_spectrum(cfg)[-1]
    assert summary["mean_law"] == pytest.approx(0.5)
    assert summary["m2_law"] == pytest.approx(0.5)
    assert summary["mean_empirical"] == pytest.approx(0.5, abs=1e-10)
    assert summary["ks_distance"] <= 1e-10


def test_run_spectrum_mp_ks():
    cfg = _cfg({"mode": "spectrum", "terminals": "1", "seed": "2",
                "terminal.1.ensemble": "iid_gaussian",
                "terminal.1.rho": "0.5", "spectrum.n": "512"})
    summary = run_spectrum(cfg)[-1]
    assert summary["ks_distance"] < 0.05


# ---------------------------------------------------------------------------
# CLI


def _write_cfg(tmp_path, items, name="exp.cfg"):
    path = tmp_path / name
    path.write_text("\n".join(f"{k} = {v}" for k, v in items.items()) + "\n")
    return str(path)


def test_cli_predict_end_to_end(tmp_path):
    cfg_path = _write_cfg(tmp_path, RIDGE_PREDICT)
    out = str(tmp_path / "out.csv")
    code = cli_main(["predict", "--config", cfg_path, "--out", out, "--plot"])
    assert code == 0
    assert os.path.exists(out)
    assert os.path.exists(str(tmp_path / "out_prediction.png"))
    header = open(out).readline()
    assert header.startswith("mode,point,status")


def test_cli_rerun_bit_identical(tmp_path):
    cfg_path = _write_cfg(tmp_path, RIDGE_PREDICT)
    o1, o2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    assert cli_main(["predict", "--config", cfg_path, "--out", o1]) == 0
    assert cli_main(["predict", "--config", cfg_path, "--out", o2]) == 0
    assert open(o1, "rb").read() == open(o2, "rb").read()


def test_cli_seed_override_changes_hash(tmp_path):
    cfg_path = _write_cfg(tmp_path, RIDGE_PREDICT)
    o1, o2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    cli_main(["predict", "--config", cfg_path, "--out", o1])
    cli_main(["predict", "--config", cfg_path, "--out", o2, "--seed", "77"])
    r1 = open(o1).readlines()[1].split(",")
    r2 = open(o2).readlines()[1].split(",")
    assert r1 != r2  # seed and config hash columns differ


def test_cli_config_error_exit_2(tmp_path):
    cfg_path = _write_cfg(tmp_path, {**RIDGE_PREDICT, "mode": "bogus"})
    assert cli_main(["predict", "--config", cfg_path]) == 2
    cfg_path2 = _write_cfg(tmp_path, RIDGE_PREDICT, "ok.cfg")
    assert cli_main(["simulate", "--config", cfg_path2]) == 2  # mode mismatch
    assert cli_main(["predict", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_cli_all_failed_exit_3(tmp_path):
    items = {**RIDGE_PREDICT, "reg.kind": "two_dim_lasso", "reg.phi": "1.0",
             "reg.alpha": "-1.0"}
    cfg_path = _write_cfg(tmp_path, items)
    out = str(tmp_path / "out.csv")
    assert cli_main(["predict", "--config", cfg_path, "--out", out]) == 3


def test_cli_partial_failure_exit_4_and_strict(tmp_path):
    # rho = 4 pushes the default init chi = lambda onto the R-transform
    # domain edge of the wide Gaussian ensemble, so that grid point fails
    # while the rho = 0.5 column succeeds
    items = {**SWEEP_BASE, "terminal.all.allow_wide": "true",
             "sweep.rho_1": "0.5,4.0", "sweep.rho_2": "0.5",
             "tune.rel_tol": "0.05"}
    cfg_path = _write_cfg(tmp_path, items)
    out = str(tmp_path / "out.csv")
    assert cli_main(["sweep-region", "--config", cfg_path, "--out", out]) == 4
    assert cli_main(["sweep-region", "--config", cfg_path, "--out", out,
                     "--strict"]) == 3
    rows = open(out).read().splitlines()
    assert sum(",failed," in r for r in rows) == 1


def test_cli_strict_keeps_success(tmp_path):
    cfg_path = _write_cfg(tmp_path, TUNE_BASE)
    out = str(tmp_path / "out.csv")
    assert cli_main(["tune", "--config", cfg_path, "--out", out,
                     "--strict"]) == 0
