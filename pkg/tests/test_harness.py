"""Metrics, verdicts, and the on-disk run format.

Episode streams are built by hand from two_state_chain policies whose values
are known exactly (paths: safe 0.3/cost 0, engage 0.8/cost 1, budget 0.6,
optimum 0.6 at weights 0.4/0.6), so every cumulative column is checkable by
mental arithmetic.
"""

import filecmp
import json

import numpy as np
import pytest

from cmdplab import (EpisodeLog, MixturePolicy, Policy, check_final_policy,
                     compute_metrics, emit_report, preset, read_run_csv,
                     render_charts, solve_cmdp_exact, write_run_csv)
from cmdplab.harness import CSV_COLUMNS


@pytest.fixture(scope="module")
def chain():
    m = preset("two_state_chain")
    return m, solve_cmdp_exact(m)


def log_stream(policies, lam=0.0):
    return [EpisodeLog(episode=i, mixture=MixturePolicy.single(p),
                       lambda_trace=np.array([lam, lam]),
                       vc_trace=np.array([0.0, 0.0]),
                       model_updates_cum=i + 1, wall_ms=0.0)
            for i, p in enumerate(policies)]


def safe_policy():
    return Policy.from_actions([[1, 1], [0, 0]], 2)  # path reward 0.3, cost 0


def engage_policy():
    return Policy.from_actions([[1, 1], [1, 1]], 2)  # path reward 0.8, cost 1


# ---------------------------------------------------------------------------
# compute_metrics.


def test_optimal_mixture_has_zero_regret_and_violation(chain):
    m, exact = chain
    logs = [EpisodeLog(i, exact.policy, np.array([0.5]), np.array([0.6]), 0, 0.0)
            for i in range(6)]
    rec = compute_metrics(m, exact, logs)
    assert len(rec.rows) == 6
    assert abs(rec.rows[-1].regret_cum) < 1e-9
    assert rec.rows[-1].cv_cum == 0.0
    assert rec.rows[0].v_r_true == pytest.approx(0.6, abs=1e-12)
    assert rec.rows[0].v_c_true == pytest.approx(0.6, abs=1e-12)
    assert rec.v_star == pytest.approx(0.6, abs=1e-9)
    assert rec.zeta == pytest.approx(0.6)
    assert rec.budget == 0.6


def test_safe_policy_accumulates_linear_regret(chain):
    m, exact = chain
    rec = compute_metrics(m, exact, log_stream([safe_policy()] * 5))
    # regret grows by V* - 0.3 = 0.3 per episode; cost 0 never violates
    for i, row in enumerate(rec.rows):
        assert row.regret_cum == pytest.approx(0.3 * (i + 1), abs=1e-9)
        assert row.cv_cum == 0.0
        assert row.v_c_true == 0.0


def test_violation_uses_positive_part_of_running_sum(chain):
    m, exact = chain
    policies = [engage_policy(), safe_policy(), engage_policy()]
    rec = compute_metrics(m, exact, log_stream(policies))
    # sums of (v_c - b): 0.4, -0.2, 0.2 -> positive parts 0.4, 0, 0.2
    assert [round(r.cv_cum, 9) for r in rec.rows] == [0.4, 0.0, 0.2]
    # regret can be negative when the learner overspends: 0.6 - 0.8 = -0.2
    assert rec.rows[0].regret_cum == pytest.approx(-0.2, abs=1e-12)


def test_lambda_mean_and_update_columns(chain):
    m, exact = chain
    logs = [EpisodeLog(0, MixturePolicy.single(safe_policy()),
                       np.array([0.0, 0.5, 1.0]), np.array([0.0]), 7, 3.25)]
    rec = compute_metrics(m, exact, logs)
    assert rec.rows[0].lambda_mean == 0.5
    assert rec.rows[0].model_updates_cum == 7
    assert rec.rows[0].wall_ms == 3.25
    assert rec.rows[0].interpolated is False


def test_eval_every_interpolates_between_anchors(chain):
    m, exact = chain
    policies = [safe_policy()] * 7
    rec = compute_metrics(m, exact, log_stream(policies), eval_every=3)
    flags = [r.interpolated for r in rec.rows]
    assert flags == [False, True, True, False, True, True, False]
    # constant stream: interpolation reproduces the exact values
    for r in rec.rows:
        assert r.v_r_true == pytest.approx(0.3, abs=1e-12)
    assert rec.eval_every == 3


def test_eval_every_validation_and_empty_stream(chain):
    m, exact = chain
    with pytest.raises(ValueError):
        compute_metrics(m, exact, [], eval_every=0)
    rec = compute_metrics(m, exact, [])
    assert rec.rows == ()


# ---------------------------------------------------------------------------
# Verdicts.


def test_relaxed_verdict_boundaries(chain):
    m, exact = chain
    good = check_final_policy(m, exact, exact.policy, epsilon=0.1, mode="relaxed")
    assert good.passed
    assert good.reward_floor == pytest.approx(0.5, abs=1e-9)
    assert good.cost_cap == pytest.approx(0.7, abs=1e-12)
    # all-engage overshoots the cost cap but not the reward floor
    bad = check_final_policy(m, exact, MixturePolicy.single(engage_policy()),
                             epsilon=0.1, mode="relaxed")
    assert not bad.passed
    assert bad.v_c == pytest.approx(1.0, abs=1e-12)
    assert bad.v_r == pytest.approx(0.8, abs=1e-12)


def test_strict_verdict_requires_feasibility(chain):
    m, exact = chain
    good = check_final_policy(m, exact, exact.policy, epsilon=0.35, mode="strict")
    assert good.passed  # optimal mixture sits exactly on the budget
    assert good.cost_cap == pytest.approx(m.budget, abs=1e-8)
    low = check_final_policy(m, exact, MixturePolicy.single(safe_policy()),
                             epsilon=0.1, mode="strict")
    assert not low.passed  # feasible but 0.3 < reward floor 0.5
    assert low.v_r == pytest.approx(0.3, abs=1e-12)


def test_verdict_rejects_unknown_mode(chain):
    m, exact = chain
    with pytest.raises(ValueError):
        check_final_policy(m, exact, exact.policy, 0.1, "loose")


# ---------------------------------------------------------------------------
# Files.


def test_csv_round_trip_is_exact(chain, tmp_path):
    m, exact = chain
    policies = [engage_policy(), safe_policy(), engage_policy(), safe_policy()]
    rec = compute_metrics(m, exact, log_stream(policies, lam=1.0 / 3.0))
    path = tmp_path / "run.csv"
    write_run_csv(rec, path)
    rows = read_run_csv(path)
    assert len(rows) == 4
    for a, b in zip(rec.rows, rows):
        assert a == b  # %.17g round-trips doubles exactly
    header = path.read_text().splitlines()[0]
    assert header == ",".join(CSV_COLUMNS)


def test_csv_gains_flag_column_only_when_subsampled(chain, tmp_path):
    m, exact = chain
    rec = compute_metrics(m, exact, log_stream([safe_policy()] * 5), eval_every=2)
    path = tmp_path / "run.csv"
    write_run_csv(rec, path)
    header = path.read_text().splitlines()[0]
    assert header == ",".join(CSV_COLUMNS) + ",interpolated"
    rows = read_run_csv(path)
    assert [r.interpolated for r in rows] == [False, True, False, True, False]


def test_emit_report_writes_everything(chain, tmp_path):
    m, exact = chain
    rec = compute_metrics(m, exact, log_stream([safe_policy()] * 3))
    verdict = check_final_policy(m, exact, exact.policy, 0.1, "relaxed")
    out = emit_report(rec, tmp_path / "r1", verdicts=[verdict])
    summary = json.loads((tmp_path / "r1" / "summary.json").read_text())
    assert summary["totals"]["episodes"] == 3
    assert summary["totals"]["regret"] == pytest.approx(0.9, abs=1e-9)
    assert summary["instance_hash"] == rec.instance_hash
    assert summary["verdicts"][0]["passed"] is True
    assert (tmp_path / "r1" / "run.csv").exists()
    assert (tmp_path / "r1" / "regret.svg").exists()
    assert (tmp_path / "r1" / "cv.svg").exists()
    assert set(out) == {"run.csv", "summary.json", "regret.svg", "cv.svg"}


def test_emit_report_is_byte_deterministic(chain, tmp_path):
    m, exact = chain
    rec = compute_metrics(m, exact, log_stream([safe_policy(), engage_policy()]))
    emit_report(rec, tmp_path / "a")
    emit_report(rec, tmp_path / "b")
    for name in ("run.csv", "summary.json", "regret.svg", "cv.svg"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name,
                           shallow=False), name


def test_emit_report_can_skip_charts(chain, tmp_path):
    m, exact = chain
    rec = compute_metrics(m, exact, log_stream([safe_policy()]))
    emit_report(rec, tmp_path / "nc", charts=False)
    assert not (tmp_path / "nc" / "regret.svg").exists()
    assert (tmp_path / "nc" / "run.csv").exists()


def test_render_charts_from_read_back_rows(chain, tmp_path):
    m, exact = chain
    rec = compute_metrics(m, exact, log_stream([safe_policy()] * 4))
    path = tmp_path / "run.csv"
    write_run_csv(rec, path)
    out = render_charts(read_run_csv(path), tmp_path)
    assert sorted(out) == ["cv.svg", "regret.svg"]
    for p in out.values():
        assert "<svg" in open(p).read()
