"""End-to-end command-line flows using main() directly."""

import json

import numpy as np
import pytest

from cmdplab import instance_hash, load_instance, slater_constant
from cmdplab.cli import load_policy, main, save_policy
from cmdplab import MixturePolicy, Policy, preset


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def json_out(capsys, *argv):
    code, out = run_cli(capsys, *argv)
    return code, json.loads(out)


# ---------------------------------------------------------------------------
# generate / solve.


def test_generate_preset_writes_instance(tmp_path, capsys):
    out = tmp_path / "chain.json"
    code, doc = json_out(capsys, "generate", "--preset", "two_state_chain",
                         "--out", str(out))
    assert code == 0
    m = load_instance(out)
    assert doc["hash"] == instance_hash(m)
    assert (doc["S"], doc["A"], doc["H"]) == (2, 2, 2)
    assert doc["budget"] == 0.6
    assert doc["zeta"] == 0.6


def test_generate_random_pins_zeta(tmp_path, capsys):
    out = tmp_path / "rand.json"
    code, doc = json_out(capsys, "generate", "--S", "3", "--A", "2", "--H", "3",
                         "--zeta", "0.25", "--seed", "5", "--out", str(out))
    assert code == 0
    assert doc["zeta"] == 0.25
    assert slater_constant(load_instance(out))[0] == 0.25


def test_solve_preset_reports_known_optimum(capsys):
    code, doc = json_out(capsys, "solve", "--preset", "single_state_tradeoff")
    assert code == 0
    assert doc["status"] == "optimal"
    assert doc["optimal_value"] == pytest.approx(0.5, abs=1e-9)
    assert doc["optimal_cost"] == pytest.approx(0.5, abs=1e-9)
    assert doc["lambda_star"] == pytest.approx(1.0, abs=1e-6)
    weights = [c["weight"] for c in doc["policy"]["components"]]
    assert np.allclose(weights, [0.5, 0.5])


def test_solve_infeasible_serializes_non_finite_as_null(tmp_path, capsys):
    # budget below the cheapest policy: c = 1 per step, b = 0.5
    doc = {"S": 1, "A": 1, "H": 1, "P": [[[[1.0]]]], "r": [[[1.0]]],
           "c": [[[1.0]]], "b": 0.5, "s1": 0}
    path = tmp_path / "inf.json"
    path.write_text(json.dumps(doc))
    code, out = json_out(capsys, "solve", "--instance", str(path))
    assert code == 0
    assert out["status"] == "infeasible"
    assert out["optimal_value"] is None
    assert out["lambda_star"] is None
    assert out["policy"] is None


def test_env_source_is_exactly_one_of_preset_or_instance(capsys):
    with pytest.raises(SystemExit):
        main(["solve"])
    capsys.readouterr()
    with pytest.raises(SystemExit):
        main(["solve", "--preset", "two_state_chain", "--instance", "x.json"])


# ---------------------------------------------------------------------------
# train.


def test_train_writes_report_and_policy(tmp_path, capsys):
    out_dir = tmp_path / "run"
    code, doc = json_out(capsys, "train", "--preset", "two_state_chain",
                         "--epsilon", "0.5", "-K", "40", "-T", "10",
                         "--out", str(out_dir))
    assert code == 0  # relaxed verdict passes at this accuracy
    assert doc["verdict"]["passed"] is True
    assert doc["episodes"] == 40
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["config"]["episodes"] == 40
    assert (out_dir / "run.csv").exists()
    assert (out_dir / "policy.json").exists()
    m = preset("two_state_chain")
    mix = load_policy(out_dir / "policy.json", m)
    assert mix.weights().sum() == pytest.approx(1.0, abs=1e-9)


def test_train_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({"epsilon": 0.5, "episodes": 100, "iters": 5}))
    out_dir = tmp_path / "run"
    code, doc = json_out(capsys, "train", "--preset", "two_state_chain",
                         "--config", str(cfg), "--episodes", "30",
                         "--no-charts", "--out", str(out_dir))
    assert doc["episodes"] == 30  # flag beats file
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["config"]["iters"] == 5  # file beats derived default
    assert not (out_dir / "regret.svg").exists()


def test_train_rejects_unknown_config_keys(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"epsilon": 0.5, "learning_rate": 1.0}))
    with pytest.raises(SystemExit, match="unknown config keys"):
        main(["train", "--preset", "two_state_chain", "--config", str(cfg),
              "--out", "unused"])


def test_train_requires_epsilon(capsys):
    with pytest.raises(SystemExit, match="epsilon"):
        main(["train", "--preset", "two_state_chain", "--out", "unused"])


def test_train_failing_verdict_exits_nonzero(tmp_path, capsys):
    # one episode at a tiny accuracy target cannot reach the reward floor
    out_dir = tmp_path / "run"
    code, doc = json_out(capsys, "train", "--preset", "risky_shortcut",
                         "--epsilon", "0.01", "-K", "1", "-T", "1",
                         "--no-charts", "--out", str(out_dir))
    assert code == 1
    assert doc["verdict"]["passed"] is False


def test_train_reproducible_run_csv(tmp_path, capsys):
    args = ["train", "--preset", "two_state_chain", "--epsilon", "0.5",
            "-K", "20", "-T", "8", "--seed", "7", "--no-charts"]
    code1, _ = run_cli(capsys, *args, "--out", str(tmp_path / "a"))
    code2, _ = run_cli(capsys, *args, "--out", str(tmp_path / "b"))
    assert (tmp_path / "a" / "run.csv").read_bytes() == (
        tmp_path / "b" / "run.csv").read_bytes()


# ---------------------------------------------------------------------------
# evaluate / report / suite.


def test_evaluate_agrees_with_dp_on_deterministic_instance(tmp_path, capsys):
    m = preset("two_state_chain")
    mix = MixturePolicy.single(Policy.from_actions([[1, 1], [1, 1]], 2))
    pol = tmp_path / "policy.json"
    save_policy(mix, m, pol)
    code, doc = json_out(capsys, "evaluate", "--preset", "two_state_chain",
                         "--policy", str(pol), "--episodes", "200")
    assert code == 0
    assert doc["dp_reward"] == pytest.approx(0.8, abs=1e-12)
    assert doc["mc"]["reward_mean"] == pytest.approx(0.8, abs=1e-12)
    assert abs(doc["z_reward"]) < 4.0
    assert abs(doc["z_cost"]) < 4.0


def test_policy_round_trip_and_dim_check(tmp_path):
    m = preset("risky_shortcut")
    mix = MixturePolicy(((0.25, Policy.uniform(3, 3, 2)),
                         (0.75, Policy.from_actions(np.ones((3, 3), int), 2))))
    path = tmp_path / "p.json"
    save_policy(mix, m, path)
    back = load_policy(path, m)
    assert np.allclose(back.weights(), [0.25, 0.75])
    for (w1, p1), (w2, p2) in zip(mix.components, back.components):
        assert np.array_equal(p1.rule, p2.rule)
    with pytest.raises(SystemExit):
        load_policy(path, preset("two_state_chain"))  # wrong dimensions


def test_report_rerenders_charts(tmp_path, capsys):
    out_dir = tmp_path / "run"
    run_cli(capsys, "train", "--preset", "two_state_chain", "--epsilon", "0.5",
            "-K", "10", "-T", "4", "--no-charts", "--out", str(out_dir))
    code, doc = json_out(capsys, "report", "--run-dir", str(out_dir))
    assert code == 0
    assert doc["rows"] == 10
    assert (out_dir / "regret.svg").exists()
    assert (out_dir / "cv.svg").exists()


def test_suite_subset_runs_fast_checks(capsys):
    code, out = run_cli(capsys, "suite", "--only", "grid-rounding",
                        "doubling-epochs")
    assert code == 0
    lines = [l for l in out.splitlines() if l.startswith("[")]
    assert len(lines) == 2
    assert all(l.startswith("[PASS]") for l in lines)
    assert "all 2 checks passed" in out


def test_suite_unknown_check_name(capsys):
    with pytest.raises(KeyError):
        main(["suite", "--only", "no-such-check"])
