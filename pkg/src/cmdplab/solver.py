"""Exact CMDP solving on the true model.

Two independent routes to the constrained optimum
max V_r(s1) subject to V_c(s1) <= b:

* solve_cmdp_exact: bisection on the scalar dual. The Lagrangian dual
  g(lambda) = max_pi [V_r - lambda (V_c - b)] is convex piecewise-linear with
  subgradient b - V_c(pi_lambda); the primal optimum is recovered by mixing
  the two deterministic policies bracketing the sign change of the
  subgradient so the mixture cost hits b exactly.
* brute_force_cmdp: exhaustive enumeration of all A**(S*H) deterministic
  policies plus every feasible/infeasible two-policy mixing, exact up to
  floating point. Used as the ground-truth oracle for small instances.

Both return an ExactSolution; the mixture-of-two form is fully general here
because the achievable (V_r, V_c) set is the convex hull of the deterministic
policies' value pairs and a single linear constraint cuts it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import (MixturePolicy, Policy, TabularCmdp, ValueTable,
                   evaluate_policy, greedy_backup, slater_constant)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"

# Slack for calling a float-valued cost feasible in the enumeration oracle.
_FEAS_SLACK = 1e-12


class InstanceTooLargeError(ValueError):
    """Deterministic-policy count exceeds the enumeration budget."""


class DegenerateInstanceError(RuntimeError):
    """Dual bisection found no feasible bracket below the lambda cap."""


@dataclass(frozen=True)
class ExactSolution:
    """Solved CMDP: optimal value/cost at s1, an optimal mixture, and the dual point.

    status is "optimal" or "infeasible"; infeasible solutions carry NaN
    values, policy None, and lambda_star = inf (the dual is unbounded).
    """

    status: str
    optimal_value: float
    optimal_cost: float
    policy: MixturePolicy | None
    lambda_star: float


def solve_unconstrained(kernel: np.ndarray, stage: np.ndarray, sense: str = "max"):
    """Optimal deterministic policy for a single (possibly signed) stage table.

    sense is "max" or "min"; ties go to the lowest action index. Returns
    (Policy, ValueTable).
    """
    if sense not in ("max", "min"):
        raise ValueError(f"sense must be 'max' or 'min', got {sense!r}")
    actions, v = greedy_backup(kernel, stage, maximize=sense == "max")
    return Policy.from_actions(actions, kernel.shape[2]), ValueTable(v)


def dual_value(m: TabularCmdp, lam: float):
    """Evaluate the dual: g(lambda) = max_pi [V_{r - lambda c}] + lambda*b.

    Returns (g(lambda), maximizing deterministic policy, that policy's cost
    value at s1). b - cost is a subgradient of g at lambda.
    """
    if lam < 0:
        raise ValueError(f"dual variable must be >= 0, got {lam}")
    stage = m.reward - lam * m.cost
    pi, v = solve_unconstrained(m.transition, stage, "max")
    g = v.initial(m.initial_state) + lam * m.budget
    cost = evaluate_policy(m.transition, m.cost, pi).initial(m.initial_state)
    return g, pi, cost


def _reward_value(m: TabularCmdp, pi: Policy) -> float:
    return evaluate_policy(m.transition, m.reward, pi).initial(m.initial_state)


def _mix_two(m, pi_feas, cost_feas, pi_inf, cost_inf, lambda_star):
    """Mix the bracket endpoints so the mixture cost equals b exactly."""
    r_feas, r_inf = _reward_value(m, pi_feas), _reward_value(m, pi_inf)
    if cost_inf <= m.budget or abs(cost_feas - cost_inf) < 1e-15:
        # Degenerate bracket: both endpoints feasible (or equal cost); the
        # higher-reward endpoint alone is optimal among the two.
        r, c, pi = max((r_feas, cost_feas, pi_feas), (r_inf, cost_inf, pi_inf),
                       key=lambda t: t[0])
        return ExactSolution(OPTIMAL, r, c, MixturePolicy.single(pi), lambda_star)
    alpha = (m.budget - cost_inf) / (cost_feas - cost_inf)
    alpha = min(max(alpha, 0.0), 1.0)
    value = alpha * r_feas + (1 - alpha) * r_inf
    cost = alpha * cost_feas + (1 - alpha) * cost_inf
    comps = [(alpha, pi_feas), (1.0 - alpha, pi_inf)]
    mix = MixturePolicy(tuple((w, p) for w, p in comps if w > 0))
    return ExactSolution(OPTIMAL, value, cost, mix, lambda_star)


def solve_cmdp_exact(m: TabularCmdp, tol: float = 1e-8) -> ExactSolution:
    """Constrained optimum via dual bisection and two-policy mixing.

    The bracket [lam_lo, lam_hi] keeps cost(pi_lam_lo) > b >= cost(pi_lam_hi)
    and shrinks to width tol; lambda_star reports its midpoint. If no
    feasible side appears below the cap 4H/max(zeta, tol), the instance is
    numerically degenerate: fall back to brute force when small enough,
    otherwise raise DegenerateInstanceError.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    zeta, _ = slater_constant(m)
    if zeta < 0:
        return ExactSolution(INFEASIBLE, math.nan, math.nan, None, math.inf)
    _, pi0, cost0 = dual_value(m, 0.0)
    if cost0 <= m.budget:
        return ExactSolution(
            OPTIMAL, _reward_value(m, pi0), cost0, MixturePolicy.single(pi0), 0.0)

    cap = 4.0 * m.horizon / max(zeta, tol)
    lam_lo, lam_hi = 0.0, 1.0
    while True:
        _, pi_hi, cost_hi = dual_value(m, lam_hi)
        if cost_hi <= m.budget:
            break
        if lam_hi > cap:
            if m.num_actions ** (m.num_states * m.horizon) <= 4096:
                return brute_force_cmdp(m)
            raise DegenerateInstanceError(
                f"no feasible dual point below cap {cap:.3g} (zeta={zeta:.3g})")
        lam_lo, lam_hi = lam_hi, 2.0 * lam_hi

    while lam_hi - lam_lo > tol:
        mid = 0.5 * (lam_lo + lam_hi)
        _, _, cost_mid = dual_value(m, mid)
        if cost_mid <= m.budget:
            lam_hi = mid
        else:
            lam_lo = mid
    _, pi_inf, cost_inf = dual_value(m, lam_lo)
    _, pi_feas, cost_feas = dual_value(m, lam_hi)
    return _mix_two(m, pi_feas, cost_feas, pi_inf, cost_inf, 0.5 * (lam_lo + lam_hi))


def brute_force_cmdp(m: TabularCmdp, max_policies: int = 4096) -> ExactSolution:
    """Enumeration oracle: exact optimum over all deterministic policies and pairs.

    Requires A**(S*H) <= max_policies. Scans every deterministic policy's
    (reward, cost) pair, then every feasible/infeasible pair mixed to cost
    exactly b; with one linear constraint this search is exhaustive.
    lambda_star reports the reward/cost slope of the optimal mixing pair
    (the shadow price), or 0 when the unconstrained optimum is feasible.
    """
    count = m.num_actions ** (m.num_states * m.horizon)
    if count > max_policies:
        raise InstanceTooLargeError(
            f"{count} deterministic policies exceed the cap {max_policies}")
    policies = []
    r_vals = np.empty(count)
    c_vals = np.empty(count)
    for i, assignment in enumerate(
            itertools.product(range(m.num_actions), repeat=m.horizon * m.num_states)):
        actions = np.array(assignment, dtype=int).reshape(m.horizon, m.num_states)
        pi = Policy.from_actions(actions, m.num_actions)
        policies.append(pi)
        r_vals[i] = _reward_value(m, pi)
        c_vals[i] = evaluate_policy(m.transition, m.cost, pi).initial(m.initial_state)

    feas = c_vals <= m.budget + _FEAS_SLACK
    if not feas.any():
        return ExactSolution(INFEASIBLE, math.nan, math.nan, None, math.inf)

    fi = np.nonzero(feas)[0]
    best_f = fi[np.argmax(r_vals[fi])]
    best_value = r_vals[best_f]
    best = ExactSolution(OPTIMAL, float(best_value), float(c_vals[best_f]),
                         MixturePolicy.single(policies[best_f]), 0.0)
    if feas.all():
        return best

    ii = np.nonzero(~feas)[0]
    # Mixture of feasible i and infeasible j with cost pinned at b:
    # alpha on i solves alpha*c_i + (1-alpha)*c_j = b.
    denom = c_vals[fi][:, None] - c_vals[ii][None, :]
    alpha = np.clip((m.budget - c_vals[ii][None, :]) / denom, 0.0, 1.0)
    mix_r = alpha * r_vals[fi][:, None] + (1 - alpha) * r_vals[ii][None, :]
    pair_best = np.unravel_index(np.argmax(mix_r), mix_r.shape)
    if mix_r[pair_best] <= best_value:
        # The best single policy wins; lambda_star = 0 only if it is the
        # unconstrained maximum, otherwise the constraint is active at a vertex
        # and the shadow price comes from the best straddling pair.
        if best_value >= r_vals.max() - _FEAS_SLACK:
            return best
        i, j = fi[pair_best[0]], ii[pair_best[1]]
        slope = (r_vals[j] - r_vals[i]) / (c_vals[j] - c_vals[i])
        return ExactSolution(best.status, best.optimal_value, best.optimal_cost,
                             best.policy, max(float(slope), 0.0))
    i, j = fi[pair_best[0]], ii[pair_best[1]]
    a = float(alpha[pair_best])
    value = float(mix_r[pair_best])
    cost = a * c_vals[i] + (1 - a) * c_vals[j]
    slope = max(float((r_vals[j] - r_vals[i]) / (c_vals[j] - c_vals[i])), 0.0)
    comps = tuple((w, p) for w, p in ((a, policies[i]), (1 - a, policies[j])) if w > 0)
    return ExactSolution(OPTIMAL, value, float(cost), MixturePolicy(comps), slope)
