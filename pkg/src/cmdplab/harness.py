"""Measurement harness: ground-truth metrics, verdicts, and report files.

compute_metrics replays a learner run against the exact solution: every
episode mixture is evaluated on the true kernel (values cached per component
policy, which the learner shares across episodes), giving cumulative regret
sum(V* - V_r) and constraint violation max(0, sum(V_c - b)). Verdicts apply
the relaxed / strict acceptance predicates to the final averaged policy.

emit_report writes a deterministic run.csv (17 significant digits, so parsing
reproduces every float bit-for-bit), a summary.json, and small static SVG
line charts of the regret and violation curves.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .core import (MixturePolicy, TabularCmdp, evaluate_mixture,
                   evaluate_policy, instance_hash, slater_constant)
from .learner import RELAXED, STRICT, LearnerConfig
from .solver import ExactSolution

CSV_COLUMNS = ("k", "v_r_true", "v_c_true", "regret_cum", "cv_cum",
               "lambda_mean", "model_updates_cum", "wall_ms")

# Absolute tolerance for the strict-mode cost check (pure float hygiene).
STRICT_COST_TOL = 1e-9


@dataclass(frozen=True)
class Row:
    """One episode's metrics; `interpolated` marks rows filled by interpolation
    when evaluation was subsampled (eval_every > 1)."""

    k: int
    v_r_true: float
    v_c_true: float
    regret_cum: float
    cv_cum: float
    lambda_mean: float
    model_updates_cum: int
    wall_ms: float
    interpolated: bool = False


@dataclass(frozen=True)
class RunRecord:
    """Header (config snapshot, seed, instance hash, zeta, V*, budget) plus
    one Row per episode."""

    config: dict
    seed: int
    instance_hash: str
    zeta: float
    v_star: float
    budget: float
    eval_every: int
    rows: tuple


@dataclass(frozen=True)
class Verdict:
    """Outcome of a final-policy check: the achieved exact values against the
    reward floor V* - epsilon and the mode's cost cap."""

    mode: str
    epsilon: float
    passed: bool
    v_r: float
    v_c: float
    reward_floor: float
    cost_cap: float


def _policy_values(m: TabularCmdp, mix: MixturePolicy, cache: dict):
    """Exact (reward, cost) of a mixture, caching per component policy identity."""
    r_total = c_total = 0.0
    for w, p in mix.components:
        got = cache.get(id(p))
        if got is None:
            got = (evaluate_policy(m.transition, m.reward, p).initial(m.initial_state),
                   evaluate_policy(m.transition, m.cost, p).initial(m.initial_state))
            cache[id(p)] = got
        r_total += w * got[0]
        c_total += w * got[1]
    return r_total, c_total


def compute_metrics(m: TabularCmdp, exact: ExactSolution, episodes,
                    config: LearnerConfig | None = None, seed: int = 0,
                    eval_every: int = 1) -> RunRecord:
    """Build the RunRecord for a stream of EpisodeLog entries.

    With eval_every > 1 only every Nth episode (and the last) is evaluated
    exactly; the rest interpolate linearly between neighbors and are flagged.
    Cumulative columns are always computed from the per-episode values.
    """
    if eval_every < 1:
        raise ValueError(f"eval_every must be >= 1, got {eval_every}")
    logs = list(episodes)
    n = len(logs)
    zeta, _ = slater_constant(m)
    header_cfg = config.snapshot() if config is not None else {}
    if not logs:
        return RunRecord(header_cfg, seed, instance_hash(m), zeta,
                         exact.optimal_value, m.budget, eval_every, ())

    v_r = np.empty(n)
    v_c = np.empty(n)
    evaluated = np.zeros(n, dtype=bool)
    cache: dict = {}
    for i, log in enumerate(logs):
        if i % eval_every == 0 or i == n - 1:
            v_r[i], v_c[i] = _policy_values(m, log.mixture, cache)
            evaluated[i] = True
    if not evaluated.all():
        idx = np.nonzero(evaluated)[0]
        missing = np.nonzero(~evaluated)[0]
        v_r[missing] = np.interp(missing, idx, v_r[idx])
        v_c[missing] = np.interp(missing, idx, v_c[idx])

    rows = []
    regret = 0.0
    violation_sum = 0.0
    for i, log in enumerate(logs):
        regret += exact.optimal_value - v_r[i]
        violation_sum += v_c[i] - m.budget
        rows.append(Row(
            k=log.episode,
            v_r_true=float(v_r[i]),
            v_c_true=float(v_c[i]),
            regret_cum=float(regret),
            cv_cum=float(max(0.0, violation_sum)),
            lambda_mean=float(np.mean(log.lambda_trace)),
            model_updates_cum=int(log.model_updates_cum),
            wall_ms=float(log.wall_ms),
            interpolated=not bool(evaluated[i]),
        ))
    return RunRecord(header_cfg, seed, instance_hash(m), zeta,
                     exact.optimal_value, m.budget, eval_every, tuple(rows))


def check_final_policy(m: TabularCmdp, exact: ExactSolution, pi_bar: MixturePolicy,
                       epsilon: float, mode: str) -> Verdict:
    """Relaxed: V_r >= V* - eps and V_c <= b + eps.
    Strict: V_r >= V* - eps and V_c <= b (+ 1e-9 float tolerance)."""
    if mode not in (RELAXED, STRICT):
        raise ValueError(f"mode must be {RELAXED!r} or {STRICT!r}, got {mode!r}")
    v_r = evaluate_mixture(m, m.reward, pi_bar)
    v_c = evaluate_mixture(m, m.cost, pi_bar)
    reward_floor = exact.optimal_value - epsilon
    cost_cap = m.budget + (epsilon if mode == RELAXED else STRICT_COST_TOL)
    return Verdict(mode, epsilon, bool(v_r >= reward_floor and v_c <= cost_cap),
                   v_r, v_c, reward_floor, cost_cap)


# ---------------------------------------------------------------------------
# Files.


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_run_csv(record: RunRecord, path) -> None:
    cols = CSV_COLUMNS + (("interpolated",) if record.eval_every > 1 else ())
    lines = [",".join(cols)]
    for r in record.rows:
        cells = [str(r.k), _fmt(r.v_r_true), _fmt(r.v_c_true), _fmt(r.regret_cum),
                 _fmt(r.cv_cum), _fmt(r.lambda_mean), str(r.model_updates_cum),
                 _fmt(r.wall_ms)]
        if record.eval_every > 1:
            cells.append(str(int(r.interpolated)))
        lines.append(",".join(cells))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_run_csv(path) -> list[Row]:
    """Parse a run.csv back into rows (floats reproduce exactly)."""
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln]
    cols = lines[0].split(",")
    if tuple(cols[:8]) != CSV_COLUMNS:
        raise ValueError(f"unexpected columns in {path}: {cols}")
    has_flag = len(cols) > 8
    rows = []
    for ln in lines[1:]:
        c = ln.split(",")
        rows.append(Row(int(c[0]), float(c[1]), float(c[2]), float(c[3]),
                        float(c[4]), float(c[5]), int(c[6]), float(c[7]),
                        bool(int(c[8])) if has_flag else False))
    return rows


def _line_chart(xs, ys, title: str, path) -> None:
    """Minimal static SVG line chart (deterministic output, no dependencies)."""
    width, height, pad = 640, 400, 50
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    sx = (width - 2 * pad) / (x_hi - x_lo)
    sy = (height - 2 * pad) / (y_hi - y_lo)
    pts = " ".join(
        f"{pad + (x - x_lo) * sx:.2f},{height - pad - (y - y_lo) * sy:.2f}"
        for x, y in zip(xs, ys))
    svg = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
        f'y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad}" y="{height - pad + 20}" font-family="sans-serif" '
        f'font-size="12">{x_lo:.6g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 20}" text-anchor="end" '
        f'font-family="sans-serif" font-size="12">{x_hi:.6g}</text>',
        f'<text x="{pad - 6}" y="{height - pad}" text-anchor="end" '
        f'font-family="sans-serif" font-size="12">{y_lo:.6g}</text>',
        f'<text x="{pad - 6}" y="{pad + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="12">{y_hi:.6g}</text>',
        f'<polyline points="{pts}" fill="none" stroke="#1f6feb" stroke-width="1.5"/>',
        "</svg>",
    ]
    with open(path, "w") as f:
        f.write("\n".join(svg) + "\n")


def render_charts(rows, out_dir) -> dict:
    """Write regret.svg and cv.svg for a sequence of rows; returns {name: path}."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    ks = [r.k for r in rows]
    for name, ys in (("regret.svg", [r.regret_cum for r in rows]),
                     ("cv.svg", [r.cv_cum for r in rows])):
        chart_path = os.path.join(out_dir, name)
        _line_chart(ks, ys, name.removesuffix(".svg"), chart_path)
        paths[name] = chart_path
    return paths


def emit_report(record: RunRecord, out_dir, verdicts=(), charts: bool = True) -> dict:
    """Write run.csv, summary.json, and (optionally) regret/violation charts.

    Returns {name: path} for everything written. Output depends only on the
    record and verdicts, so identical runs emit byte-identical files.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    csv_path = os.path.join(out_dir, "run.csv")
    write_run_csv(record, csv_path)
    paths["run.csv"] = csv_path

    last = record.rows[-1] if record.rows else None
    summary = {
        "config": record.config,
        "seed": record.seed,
        "instance_hash": record.instance_hash,
        "zeta": record.zeta,
        "v_star": record.v_star,
        "budget": record.budget,
        "eval_every": record.eval_every,
        "totals": {
            "episodes": len(record.rows),
            "regret": last.regret_cum if last else 0.0,
            "cv": last.cv_cum if last else 0.0,
            "model_updates": last.model_updates_cum if last else 0,
        },
        "verdicts": [asdict(v) for v in verdicts],
    }
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    paths["summary.json"] = summary_path

    if charts and record.rows:
        paths.update(render_charts(record.rows, out_dir))
    return paths
