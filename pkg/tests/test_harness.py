import json
import math

import numpy as np
import pytest

from nonlinbandit import ExperimentConfig, run_experiment, run_sweep, write_run_csv
from nonlinbandit.cli import main, parse_link_arg


def _hard_run_config(instance, algo, *, n_arms=5, subset_size=2, horizon=400,
                     delta=0.3, reps=2, seed=7, s_star=(0, 1), output=None,
                     t_grid=None):
    return ExperimentConfig.from_dict({
        "dims": {"N": n_arms, "K": subset_size, "T": horizon, "d": None},
        "link": {"kind": "mnl"},
        "adversary": {
            "kind": "hard_nonpoly",
            "instance": instance.to_json_dict(),
            "s_star": list(s_star),
            "delta": delta,
        },
        "algorithms": [algo],
        "replications": reps,
        "base_seed": seed,
        "t_grid": t_grid,
        "output": output,
        "full_trace": False,
    })


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------

def test_config_roundtrip_idempotent(mnl_hard_m2, tmp_path):
    config = _hard_run_config(mnl_hard_m2, {"name": "exp3", "params": {}})
    first = config.to_dict()
    path = tmp_path / "config.json"
    path.write_text(json.dumps(first))
    second = ExperimentConfig.from_json_file(path).to_dict()
    assert first == second
    assert ExperimentConfig.from_dict(second).config_hash() == config.config_hash()


def test_config_validation(mnl_hard_m2):
    with pytest.raises(ValueError):
        _hard_run_config(mnl_hard_m2, {"name": "nope"})
    cfg = _hard_run_config(mnl_hard_m2, {"name": "exp3", "params": {}}).to_dict()
    cfg["adversary"]["kind"] = "mystery"
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(cfg)
    cfg = _hard_run_config(mnl_hard_m2, {"name": "exp3", "params": {}}).to_dict()
    cfg["replications"] = 0
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(cfg)


# ---------------------------------------------------------------------------
# Determinism and replication independence
# ---------------------------------------------------------------------------

def test_runs_are_byte_identical(mnl_hard_m2, tmp_path):
    config = _hard_run_config(mnl_hard_m2, {"name": "exp3", "params": {}})
    paths = []
    for tag in ("a", "b"):
        results = run_experiment(config)
        path = tmp_path / f"run_{tag}.csv"
        write_run_csv(results, path)
        paths.append(path)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_replications_independent_of_order(mnl_hard_m2):
    config = _hard_run_config(mnl_hard_m2, {"name": "tsallis_inf", "params": {}},
                              reps=3)
    together = run_experiment(config)
    for rep in range(3):
        solo_cfg = _hard_run_config(mnl_hard_m2, {"name": "tsallis_inf", "params": {}},
                                    reps=1, seed=7 + rep)
        solo = run_experiment(solo_cfg)[0]
        assert solo.final_regret == together[rep].final_regret
        assert solo.seed == together[rep].seed


def test_threaded_execution_matches_serial(mnl_hard_m2, monkeypatch):
    config = _hard_run_config(mnl_hard_m2, {"name": "exp3", "params": {}}, reps=3)
    serial = run_experiment(config)
    monkeypatch.setenv("NONLIN_THREADS", "3")
    threaded = run_experiment(config)
    assert [r.final_regret for r in serial] == [r.final_regret for r in threaded]
    assert [r.run_id for r in threaded] == [0, 1, 2]


# ---------------------------------------------------------------------------
# Policy sanity through the harness
# ---------------------------------------------------------------------------

def test_constant_benchmark_policy_zero_regret(mnl_hard_m2):
    config = _hard_run_config(
        mnl_hard_m2, {"name": "constant", "params": {"subset": [0, 1]}},
        horizon=2000, reps=1)
    result = run_experiment(config)[0]
    assert result.final_regret == pytest.approx(0.0, abs=1e-10)


def test_constant_off_policy_regret_matches_clt(mnl_hard_m2, mnl_link):
    delta, horizon = 0.3, 10_000
    config = _hard_run_config(
        mnl_hard_m2, {"name": "constant", "params": {"subset": [2, 3]}},
        horizon=horizon, delta=delta, reps=1, seed=11)
    result = run_experiment(config)[0]
    gamma = mnl_hard_m2.gamma
    base = mnl_hard_m2.baseline(mnl_link)
    # per-round regret is dev_i = g(atom sum) - base on atom rounds, else 0
    devs = np.array([mnl_link(float(atom.sum())) - base
                     for atom in mnl_hard_m2.support])
    second_moment = float(mnl_hard_m2.weights @ devs ** 2)
    var = delta * second_moment - (delta * gamma) ** 2
    sigma = math.sqrt(horizon * var)
    assert abs(result.final_regret - delta * gamma * horizon) < 3 * sigma


def test_constant_policy_on_oblivious_schedule_matches_expectation():
    # realized Bernoulli reward total agrees with the summed expected rewards
    rng_sched = np.random.default_rng(2)
    horizon = 4000
    schedule = rng_sched.uniform(0, 1, size=(horizon, 4))
    config = ExperimentConfig.from_dict({
        "dims": {"N": 4, "K": 2, "T": horizon, "d": None},
        "link": {"kind": "mnl"},
        "adversary": {"kind": "oblivious", "schedule": schedule.tolist()},
        "algorithms": [{"name": "constant", "params": {"subset": [0, 3]}}],
        "replications": 1,
        "base_seed": 5,
        "full_trace": True,
    })
    result = run_experiment(config)[0]
    realized = sum(row[2] for row in result.checkpoints)
    from nonlinbandit import MnlLink
    g = MnlLink()
    expected = float(np.sum(g(schedule[:, [0, 3]].sum(axis=1))))
    sigma = math.sqrt(horizon * 0.25)  # Bernoulli variance bound
    assert abs(realized - expected) < 3 * sigma


def test_sweep_emits_row_per_algo_and_horizon(mnl_hard_m2, tmp_path):
    out = tmp_path / "sweep.csv"
    config = _hard_run_config(mnl_hard_m2, {"name": "exp3", "params": {}},
                              reps=2, t_grid=[100, 200], output=str(out))
    config.algorithm_specs.append({"name": "tsallis_inf", "params": {}})
    rows = run_sweep(config)
    assert [(r["algo"], r["T"]) for r in rows] == [
        ("exp3", 100), ("exp3", 200), ("tsallis_inf", 100), ("tsallis_inf", 200)]
    for row in rows:
        assert row["reps"] == 2 and np.isfinite(row["stderr"])


def test_poly_adversary_through_harness(quadratic_hard_m2):
    link, inst = quadratic_hard_m2
    config = ExperimentConfig.from_dict({
        "dims": {"N": 5, "K": 3, "T": 300, "d": 2},
        "link": {"kind": "polynomial", "coefficients": list(link.coefficients)},
        "adversary": {"kind": "hard_poly", "instance": inst.to_json_dict(),
                       "s_star": [1, 3], "delta": "auto"},
        "algorithms": [{"name": "exp3", "params": {}}],
        "replications": 1,
        "base_seed": 0,
    })
    result = run_experiment(config)[0]
    assert np.isfinite(result.final_regret)


def test_mnl_hard_through_harness(mnl_hard_m2):
    config = ExperimentConfig.from_dict({
        "dims": {"N": 4, "K": 2, "T": 300, "d": None},
        "link": {"kind": "mnl"},
        "adversary": {"kind": "mnl_hard", "instance": mnl_hard_m2.to_json_dict(),
                       "s_star": [0, 2], "delta": 0.4},
        "algorithms": [{"name": "exp3", "params": {}}],
        "replications": 1,
        "base_seed": 3,
    })
    result = run_experiment(config)[0]
    assert np.isfinite(result.final_regret)


def test_failed_replication_recorded_others_proceed(mnl_hard_m2, monkeypatch, tmp_path):
    import nonlinbandit.harness as harness_mod

    original = harness_mod._one_replication

    def flaky(config, algo, horizon, rep):
        if rep == 1:
            raise RuntimeError("boom")
        return original(config, algo, horizon, rep)

    monkeypatch.setattr(harness_mod, "_one_replication", flaky)
    config = _hard_run_config(mnl_hard_m2, {"name": "exp3", "params": {}}, reps=3)
    results = run_experiment(config)
    assert results[1].error is not None and "boom" in results[1].error
    assert results[0].error is None and results[2].error is None
    assert math.isnan(results[1].final_regret)
    out = tmp_path / "flaky.csv"
    write_run_csv(results, out)
    lines = out.read_text().splitlines()
    assert any(line.startswith("1,8,0,-1,nan") for line in lines)


def test_mnl_general_through_harness(rng):
    horizon = 200
    schedule = rng.uniform(0, 1, size=(horizon, 4))
    config = ExperimentConfig.from_dict({
        "dims": {"N": 4, "K": 2, "T": horizon, "d": None},
        "link": {"kind": "mnl"},
        "adversary": {"kind": "mnl_general", "prices": [1.0, 0.7, 0.4, 0.9],
                       "schedule": schedule.tolist()},
        "algorithms": [{"name": "tsallis_inf", "params": {}}],
        "replications": 1,
        "base_seed": 9,
    })
    result = run_experiment(config)[0]
    assert np.isfinite(result.final_regret)
    rewards = {row[2] for row in result.checkpoints}
    assert rewards <= {0.0, 0.4, 0.7, 0.9, 1.0}


def test_exp2_requires_polynomial_link(mnl_hard_m2):
    config = _hard_run_config(mnl_hard_m2, {"name": "exp2", "params": {}})
    config.dims = type(config.dims)(5, 2, 400, degree=1)
    with pytest.raises(ValueError, match="polynomial"):
        run_experiment(config)


def test_stochastic_exp2_through_harness(tmp_path):
    out = tmp_path / "run.csv"
    config = ExperimentConfig.from_dict({
        "dims": {"N": 4, "K": 2, "T": 500, "d": 1},
        "link": {"kind": "polynomial", "coefficients": [0.0, 0.5]},
        "adversary": {"kind": "stochastic", "v": [0.1, 0.5, 0.9, 0.3]},
        "algorithms": [{"name": "exp2", "params": {"gamma_mix": 0.05, "eta": 0.02}}],
        "replications": 2,
        "base_seed": 0,
        "output": str(out),
    })
    results = run_experiment(config)
    write_run_csv(results, out)
    header = out.read_text().splitlines()[0]
    assert header == "run_id,seed,t,subset_rank,reward,inst_regret,cum_regret"


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_cli_find_hard_and_verify(tmp_path, capsys):
    inst_path = tmp_path / "inst.json"
    code = main(["find-hard", "--g", "mnl", "--m", "2", "--b", "2",
                 "--grid", "25", "--out", str(inst_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "gamma=" in out and inst_path.exists()
    code = main(["verify", "--inst", str(inst_path), "--g", "mnl"])
    out = capsys.readouterr().out
    assert code == 0
    assert "VALID" in out


def test_cli_find_hard_explicit_x0(tmp_path, capsys):
    inst_path = tmp_path / "inst.json"
    code = main(["find-hard", "--g", "mnl", "--m", "1", "--b", "2",
                 "--grid", "25", "--x0", "0.3", "--out", str(inst_path)])
    capsys.readouterr()
    assert code == 0
    from nonlinbandit import HardInstance
    assert HardInstance.load(inst_path).x0 == pytest.approx(0.3)


def test_cli_verify_flags_invalid(tmp_path, capsys):
    inst_path = tmp_path / "point.json"
    inst_path.write_text(json.dumps({
        "x0": 0.4, "m": 2, "b": 2, "support": [[0.4, 0.4]],
        "weights": [1.0], "gamma": 0.0, "residuals": [0.0],
    }))
    code = main(["verify", "--inst", str(inst_path), "--g", "mnl"])
    out = capsys.readouterr().out
    assert code == 2
    assert "INVALID" in out


def test_cli_identity_check(capsys):
    code = main(["identity-check", "--trials", "120", "--seed", "1"])
    out = capsys.readouterr().out
    assert code == 0
    assert "PASS" in out


def test_cli_run_and_sweep(tmp_path, mnl_hard_m2, capsys):
    inst_path = tmp_path / "inst.json"
    mnl_hard_m2.save(inst_path)
    run_out = tmp_path / "run.csv"
    config = {
        "dims": {"N": 4, "K": 2, "T": 120, "d": None},
        "link": {"kind": "mnl"},
        "adversary": {"kind": "hard_nonpoly", "instance_path": str(inst_path),
                       "s_star": [0, 1], "delta": "auto"},
        "algorithms": [{"name": "exp3", "params": {}}],
        "replications": 2,
        "base_seed": 0,
        "output": str(run_out),
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(config))
    assert main(["run", "--config", str(cfg_path)]) == 0
    capsys.readouterr()
    assert run_out.read_text().startswith("run_id,seed,t,")

    sweep_out = tmp_path / "sweep.csv"
    config["output"] = str(sweep_out)
    config["t_grid"] = [60, 120]
    sweep_path = tmp_path / "sweep.json"
    sweep_path.write_text(json.dumps(config))
    assert main(["sweep", "--config", str(sweep_path)]) == 0
    capsys.readouterr()
    lines = sweep_out.read_text().splitlines()
    assert lines[0] == "algo,N,K,T,reps,mean_regret,stderr"
    assert len(lines) == 3


def test_cli_unknown_flag_exits_one(capsys):
    assert main(["find-hard", "--nonsense"]) == 1
    err = capsys.readouterr().err
    assert "usage" in err


def test_cli_bad_config_exits_one(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"dims": {"N": 2, "K": 5, "T": 10},
                               "link": {"kind": "mnl"},
                               "adversary": {"kind": "stochastic", "v": [0.1, 0.2]},
                               "algorithms": [{"name": "exp3"}]}))
    assert main(["run", "--config", str(cfg)]) == 1


def test_parse_link_arg():
    assert parse_link_arg("mnl")(1.0) == pytest.approx(0.5)
    poly = parse_link_arg("poly:0,0.5")
    assert poly(2.0) == pytest.approx(1.0)
    tab = parse_link_arg("tab:0:0,2:1")
    assert tab(1.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        parse_link_arg("spline")
