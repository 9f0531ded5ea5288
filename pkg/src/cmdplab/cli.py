"""Command-line front end.

Subcommands: ``generate`` (instance files), ``solve`` (ground truth),
``train`` (online run + report), ``evaluate`` (Monte-Carlo vs exact values of
a saved policy), ``report`` (re-render charts from a run directory), and
``suite`` (the full acceptance battery). Train options may come from a JSON
config file; explicit flags override file values. Exit code is nonzero iff a
requested verdict or check fails.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from .acceptance import run_checks
from .core import (
    MixturePolicy,
    Policy,
    evaluate_mixture,
    instance_hash,
    load_instance,
    save_instance,
    slater_constant,
)
from .generate import GenSpec, generate, preset, preset_names
from .harness import (
    check_final_policy,
    compute_metrics,
    emit_report,
    read_run_csv,
    render_charts,
)
from .learner import derive_config, run_learner
from .simulate import monte_carlo_value
from .solver import solve_cmdp_exact


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _emit(obj):
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _load_env(args):
    if getattr(args, "preset", None) and getattr(args, "instance", None):
        raise SystemExit("pass either --preset or --instance, not both")
    if getattr(args, "preset", None):
        return preset(args.preset)
    if getattr(args, "instance", None):
        return load_instance(args.instance)
    raise SystemExit("an instance is required: --preset NAME or --instance FILE")


def _mixture_json(mix: MixturePolicy, m) -> dict:
    return {
        "S": m.num_states,
        "A": m.num_actions,
        "H": m.horizon,
        "components": [
            {"weight": w, "rule": p.rule.tolist()} for w, p in mix.components
        ],
    }


def save_policy(mix: MixturePolicy, m, path) -> None:
    with open(path, "w") as f:
        json.dump(_mixture_json(mix, m), f, indent=2, sort_keys=True)
        f.write("\n")


def load_policy(path, m) -> MixturePolicy:
    with open(path) as f:
        doc = json.load(f)
    if (doc["S"], doc["A"], doc["H"]) != (m.num_states, m.num_actions,
                                          m.horizon):
        raise SystemExit(
            f"policy dims ({doc['S']}, {doc['A']}, {doc['H']}) do not match "
            f"instance ({m.num_states}, {m.num_actions}, {m.horizon})")
    comps = tuple(
        (c["weight"], Policy(np.asarray(c["rule"], dtype=float)))
        for c in doc["components"])
    return MixturePolicy(comps)


# ---------------------------------------------------------------------------
# Subcommands.


def cmd_generate(args) -> int:
    if args.preset:
        m = preset(args.preset)
    else:
        m = generate(GenSpec(args.S, args.A, args.H, zeta_target=args.zeta,
                             dirichlet_alpha=args.alpha, seed=args.seed))
    save_instance(m, args.out)
    zeta, _ = slater_constant(m)
    _emit({
        "path": args.out,
        "hash": instance_hash(m),
        "S": m.num_states, "A": m.num_actions, "H": m.horizon,
        "budget": m.budget,
        "zeta": zeta,
    })
    return 0


def cmd_solve(args) -> int:
    m = _load_env(args)
    sol = solve_cmdp_exact(m, tol=args.tol)
    out = {
        "status": sol.status,
        "optimal_value": _finite(sol.optimal_value),
        "optimal_cost": _finite(sol.optimal_cost),
        "lambda_star": _finite(sol.lambda_star),
        "policy": _mixture_json(sol.policy, m) if sol.policy else None,
    }
    _emit(out)
    return 0


_TRAIN_DEFAULTS = {
    "mode": "relaxed", "epsilon": None, "delta": 0.1, "episodes": None,
    "iters": None, "dual_cap": None, "grid_step": None, "bonus_scale": 1.0,
    "seed": 0, "eval_every": 1, "timing": False,
}


def _merge_train_options(args):
    """Flag > config-file > default, keyed by the long option names."""
    from_file = {}
    if args.config:
        with open(args.config) as f:
            from_file = json.load(f)
        unknown = set(from_file) - set(_TRAIN_DEFAULTS)
        if unknown:
            raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    merged = {}
    for key, default in _TRAIN_DEFAULTS.items():
        flag = getattr(args, key)
        merged[key] = flag if flag is not None else from_file.get(key, default)
    return merged


def cmd_train(args) -> int:
    m = _load_env(args)
    opt = _merge_train_options(args)
    if opt["epsilon"] is None:
        raise SystemExit("--epsilon is required (flag or config file)")
    zeta, _ = slater_constant(m)
    cfg = derive_config(
        opt["mode"], float(opt["epsilon"]), float(opt["delta"]), m, zeta=zeta,
        bonus_scale=float(opt["bonus_scale"]),
        episodes=opt["episodes"], iters=opt["iters"],
        dual_cap=opt["dual_cap"], grid_step=opt["grid_step"])
    res = run_learner(m, cfg, seed=int(opt["seed"]),
                      measure_time=bool(opt["timing"]))
    exact = solve_cmdp_exact(m)
    record = compute_metrics(m, exact, res.episodes, config=cfg,
                             seed=res.seed, eval_every=int(opt["eval_every"]))
    verdict = check_final_policy(m, exact, res.final_policy,
                                 float(opt["epsilon"]), opt["mode"])
    paths = emit_report(record, args.out, verdicts=[verdict],
                        charts=not args.no_charts)
    policy_path = os.path.join(args.out, "policy.json")
    save_policy(res.final_policy, m, policy_path)
    paths["policy.json"] = policy_path
    last = record.rows[-1]
    _emit({
        "paths": paths,
        "episodes": len(record.rows),
        "regret": last.regret_cum,
        "cv": last.cv_cum,
        "model_updates": last.model_updates_cum,
        "verdict": {
            "mode": verdict.mode, "passed": verdict.passed,
            "v_r": verdict.v_r, "v_c": verdict.v_c,
            "reward_floor": verdict.reward_floor,
            "cost_cap": verdict.cost_cap,
        },
    })
    return 0 if verdict.passed else 1


def cmd_evaluate(args) -> int:
    m = _load_env(args)
    mix = load_policy(args.policy, m)
    est = monte_carlo_value(m, mix, episodes=args.episodes, seed=args.seed)
    dp_r = evaluate_mixture(m, m.reward, mix)
    dp_c = evaluate_mixture(m, m.cost, mix)
    _emit({
        "dp_reward": dp_r,
        "dp_cost": dp_c,
        "mc": est,
        "z_reward": (est["reward_mean"] - dp_r) / max(est["reward_se"], 1e-12),
        "z_cost": (est["cost_mean"] - dp_c) / max(est["cost_se"], 1e-12),
        "episodes": args.episodes,
    })
    return 0


def cmd_report(args) -> int:
    rows = read_run_csv(os.path.join(args.run_dir, "run.csv"))
    paths = render_charts(rows, args.run_dir)
    _emit({"paths": paths, "rows": len(rows)})
    return 0


def cmd_suite(args) -> int:
    results = run_checks(args.only or None)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} of {len(results)} checks failed: "
              f"{', '.join(failed)}")
        return 1
    print(f"all {len(results)} checks passed")
    return 0


# ---------------------------------------------------------------------------
# Parser.


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cmdplab",
        description="Tabular constrained-MDP laboratory: generate, solve, "
                    "train, evaluate, report, suite.")
    sub = p.add_subparsers(dest="command", required=True)

    names = sorted(preset_names())

    g = sub.add_parser("generate", help="write an instance JSON file")
    g.add_argument("--preset", choices=names)
    g.add_argument("--S", type=int, default=3)
    g.add_argument("--A", type=int, default=2)
    g.add_argument("--H", type=int, default=3)
    g.add_argument("--zeta", type=float, default=0.5,
                   help="exact Slater constant to pin")
    g.add_argument("--alpha", type=float, default=1.0,
                   help="Dirichlet concentration for kernel rows")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="instance.json")
    g.set_defaults(fn=cmd_generate)

    s = sub.add_parser("solve", help="exact solve; prints JSON")
    s.add_argument("--instance")
    s.add_argument("--preset", choices=names)
    s.add_argument("--tol", type=float, default=1e-8)
    s.set_defaults(fn=cmd_solve)

    t = sub.add_parser("train", help="online primal-dual run plus report")
    t.add_argument("--instance")
    t.add_argument("--preset", choices=names)
    t.add_argument("--config", help="JSON file with train options; "
                                    "flags override file values")
    t.add_argument("--mode", choices=("relaxed", "strict"), default=None)
    t.add_argument("--epsilon", type=float, default=None)
    t.add_argument("--delta", type=float, default=None)
    t.add_argument("--episodes", "-K", type=int, default=None)
    t.add_argument("--iters", "-T", type=int, default=None)
    t.add_argument("--dual-cap", type=float, default=None)
    t.add_argument("--grid-step", type=float, default=None)
    t.add_argument("--bonus-scale", type=float, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--eval-every", type=int, default=None)
    t.add_argument("--timing", action="store_true", default=None,
                   help="record wall times (breaks byte-reproducibility)")
    t.add_argument("--out", default="run_out")
    t.add_argument("--no-charts", action="store_true")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("evaluate", help="Monte-Carlo check of a saved policy")
    e.add_argument("--instance")
    e.add_argument("--preset", choices=names)
    e.add_argument("--policy", required=True)
    e.add_argument("--episodes", type=int, default=20_000)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(fn=cmd_evaluate)

    r = sub.add_parser("report", help="re-render charts from run.csv")
    r.add_argument("--run-dir", required=True)
    r.set_defaults(fn=cmd_report)

    u = sub.add_parser("suite", help="run the acceptance battery")
    u.add_argument("--only", nargs="*", metavar="CHECK",
                   help="subset of check names (default: all)")
    u.set_defaults(fn=cmd_suite)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
