"""Finite-horizon tabular CMDP primitives.

A constrained MDP here is the tuple (S, A, H, P, r, c, b, s1): a non-stationary
transition kernel P[h][s][a][s'], per-step reward and cost tables in [0, 1],
a cost budget b, and a fixed initial state. Values are computed by exact
backward recursion; mixtures of policies are evaluated as weighted averages of
component values (the mixing draw happens once per episode, so the identity is
exact, not an approximation).

All indices (states, actions, steps) are 0-based internally. Step h runs
0..H-1 and value tables carry an extra all-zero terminal row at index H.
Arrays are copied and frozen at construction; every function here is pure, so
instances and policies can be shared freely across threads or processes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

# Validation tolerance for anything that should be a probability distribution.
PROB_TOL = 1e-9


def _frozen(a, dtype=float) -> np.ndarray:
    """Copy `a` into a read-only ndarray."""
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Violation:
    """One invariant breach found by a validator.

    kind: short machine-readable tag, e.g. "row_sum" or "reward_range".
    location: offending index tuple ((h, s, a) for table entries), or None
        for scalar fields like the budget.
    magnitude: size of the breach (distance past the allowed bound).
    """

    kind: str
    location: tuple | None
    magnitude: float
    message: str

    def __str__(self) -> str:
        return self.message


@dataclass(frozen=True)
class TabularCmdp:
    """Immutable tabular CMDP.

    transition has shape (H, S, A, S), reward and cost have shape (H, S, A).
    Construction freezes the arrays but does not validate; run validate_cmdp
    (the file loader does, and rejects on any violation).
    """

    num_states: int
    num_actions: int
    horizon: int
    transition: np.ndarray
    reward: np.ndarray
    cost: np.ndarray
    budget: float
    initial_state: int

    def __post_init__(self):
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "reward", _frozen(self.reward))
        object.__setattr__(self, "cost", _frozen(self.cost))


@dataclass(frozen=True)
class Policy:
    """Non-stationary randomized Markov policy: rule[h][s] is a distribution over actions."""

    rule: np.ndarray  # (H, S, A)

    def __post_init__(self):
        if np.ndim(self.rule) != 3:
            raise ValueError(f"policy rule must be (H, S, A), got shape {np.shape(self.rule)}")
        object.__setattr__(self, "rule", _frozen(self.rule))

    @classmethod
    def from_actions(cls, actions, num_actions: int) -> "Policy":
        """One-hot policy from an (H, S) integer action table."""
        actions = np.asarray(actions, dtype=int)
        h, s = actions.shape
        rule = np.zeros((h, s, num_actions))
        rule[np.arange(h)[:, None], np.arange(s)[None, :], actions] = 1.0
        return cls(rule)

    @classmethod
    def uniform(cls, horizon: int, num_states: int, num_actions: int) -> "Policy":
        return cls(np.full((horizon, num_states, num_actions), 1.0 / num_actions))

    def validate(self) -> list[str]:
        problems = []
        if np.any(self.rule < 0):
            problems.append("negative action probability")
        bad = np.abs(self.rule.sum(axis=2) - 1.0) > PROB_TOL
        for h, s in zip(*np.nonzero(bad)):
            problems.append(f"rule row (h={h}, s={s}) sums to {self.rule[h, s].sum()!r}")
        return problems


@dataclass(frozen=True)
class MixturePolicy:
    """Finite mixture over policies; the component is drawn once per episode.

    components is a sequence of (weight, Policy) pairs. Weights must be
    nonnegative and sum to 1 within PROB_TOL; at least one component.
    """

    components: tuple

    def __post_init__(self):
        comps = tuple((float(w), p) for w, p in self.components)
        if not comps:
            raise ValueError("mixture needs at least one component")
        if any(w < 0 for w, _ in comps):
            raise ValueError("mixture weights must be nonnegative")
        total = sum(w for w, _ in comps)
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"mixture weights sum to {total!r}, expected 1")
        object.__setattr__(self, "components", comps)

    @classmethod
    def single(cls, policy: Policy) -> "MixturePolicy":
        return cls(((1.0, policy),))

    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])


@dataclass(frozen=True)
class ValueTable:
    """Backed-up values: values[h][s] for h = 0..H, with row H identically zero."""

    values: np.ndarray  # (H + 1, S)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))

    def initial(self, s1: int) -> float:
        return float(self.values[0, s1])


def validate_cmdp(m: TabularCmdp) -> list[Violation]:
    """Check every structural invariant; returns all breaches with location and magnitude.

    Checked: array shapes against the declared (S, A, H), transition rows are
    distributions within PROB_TOL, reward/cost entries inside [0, 1], budget
    inside (0, H], initial state inside range. An empty list means valid.
    """
    out = []
    s_, a_, h_ = m.num_states, m.num_actions, m.horizon

    def bad(kind, loc, mag, msg):
        out.append(Violation(kind, loc, float(mag), msg))

    if min(s_, a_, h_) < 1:
        bad("dimensions", None, 0.0, f"S, A, H must be >= 1, got ({s_}, {a_}, {h_})")
        return out
    shapes = {
        "transition": (m.transition.shape, (h_, s_, a_, s_)),
        "reward": (m.reward.shape, (h_, s_, a_)),
        "cost": (m.cost.shape, (h_, s_, a_)),
    }
    for name, (got, want) in shapes.items():
        if got != want:
            bad("shape", None, 0.0, f"{name} shape {got} does not match declared {want}")
    if any(got != want for got, want in shapes.values()):
        return out

    neg = np.minimum(m.transition, 0.0)
    for h, s, a, sn in zip(*np.nonzero(neg < 0)):
        bad("transition_negative", (int(h), int(s), int(a), int(sn)), -neg[h, s, a, sn],
            f"P[{h}][{s}][{a}][{sn}] = {m.transition[h, s, a, sn]!r} is negative")
    sums = m.transition.sum(axis=3)
    off = np.abs(sums - 1.0)
    for h, s, a in zip(*np.nonzero(off > PROB_TOL)):
        bad("row_sum", (int(h), int(s), int(a)), off[h, s, a],
            f"P[{h}][{s}][{a}] sums to {sums[h, s, a]!r}, off by {off[h, s, a]:.3g}")
    for name, table in (("reward", m.reward), ("cost", m.cost)):
        breach = np.maximum(table - 1.0, -np.minimum(table, 0.0))
        for h, s, a in zip(*np.nonzero(breach > 0)):
            bad(f"{name}_range", (int(h), int(s), int(a)), breach[h, s, a],
                f"{name}[{h}][{s}][{a}] = {table[h, s, a]!r} outside [0, 1]")
    if not (0.0 < m.budget <= h_):
        bad("budget", None, abs(m.budget), f"budget {m.budget!r} outside (0, {h_}]")
    if not (0 <= m.initial_state < s_):
        bad("initial_state", None, 0.0, f"initial state {m.initial_state} outside [0, {s_})")
    return out


def normalize_transition_rows(kernel: np.ndarray) -> np.ndarray:
    """Divide every transition row by its sum (applied exactly once at load time)."""
    kernel = np.array(kernel, dtype=float)
    return kernel / kernel.sum(axis=3, keepdims=True)


def evaluate_policy(kernel: np.ndarray, stage: np.ndarray, policy: Policy) -> ValueTable:
    """Exact value of `policy` for stage table g: V_h(s) = E[ sum_{t>=h} g_t ].

    kernel is (H, S, A, S), stage is (H, S, A). The stage may be signed (the
    solver evaluates r - lambda*c through here). Shapes must agree exactly.
    """
    if kernel.ndim != 4 or stage.shape != kernel.shape[:3] or policy.rule.shape != kernel.shape[:3]:
        raise ValueError(
            f"shape mismatch: kernel {kernel.shape}, stage {stage.shape}, policy {policy.rule.shape}")
    horizon, s_, _ = stage.shape
    v = np.zeros((horizon + 1, s_))
    for h in range(horizon - 1, -1, -1):
        q = stage[h] + kernel[h] @ v[h + 1]
        v[h] = np.einsum("sa,sa->s", policy.rule[h], q)
    return ValueTable(v)


def evaluate_mixture(m: TabularCmdp, stage: np.ndarray, mix: MixturePolicy) -> float:
    """Value of a mixture at (h=0, s1): the weighted average of component values."""
    return float(sum(
        w * evaluate_policy(m.transition, stage, p).initial(m.initial_state)
        for w, p in mix.components))


def greedy_backup(kernel: np.ndarray, stage: np.ndarray, maximize: bool = True):
    """Unconstrained backward induction; returns ((H, S) action table, (H+1, S) values).

    Ties resolve to the lowest action index (numpy argmax/argmin semantics).
    """
    horizon, s_, _ = stage.shape
    v = np.zeros((horizon + 1, s_))
    actions = np.zeros((horizon, s_), dtype=int)
    for h in range(horizon - 1, -1, -1):
        q = stage[h] + kernel[h] @ v[h + 1]
        a = q.argmax(axis=1) if maximize else q.argmin(axis=1)
        actions[h] = a
        v[h] = q[np.arange(s_), a]
    return actions, v


def slater_constant(m: TabularCmdp):
    """Budget slack zeta = b - min_pi V_c(s1), with the minimizing policy.

    zeta > 0 means the constraint has interior slack; zeta < 0 means the
    instance is infeasible (even the cheapest policy exceeds the budget).
    """
    actions, v = greedy_backup(m.transition, m.cost, maximize=False)
    zeta = m.budget - float(v[0, m.initial_state])
    return zeta, Policy.from_actions(actions, m.num_actions)


# ---------------------------------------------------------------------------
# Instance files. JSON with 0-based indices:
#   {"S":, "A":, "H":, "P": [h][s][a][s'], "r": [h][s][a], "c": [h][s][a],
#    "b":, "s1":}


def _instance_payload(m: TabularCmdp) -> dict:
    return {
        "S": m.num_states,
        "A": m.num_actions,
        "H": m.horizon,
        "P": m.transition.tolist(),
        "r": m.reward.tolist(),
        "c": m.cost.tolist(),
        "b": m.budget,
        "s1": m.initial_state,
    }


def save_instance(m: TabularCmdp, path) -> None:
    with open(path, "w") as f:
        json.dump(_instance_payload(m), f, indent=2, sort_keys=True)
        f.write("\n")


def load_instance(path) -> TabularCmdp:
    """Read, validate, and renormalize an instance file.

    Any validation violation rejects the file. Transition rows are
    renormalized exactly once here so downstream arithmetic sees rows that
    sum to 1 at machine precision.
    """
    try:
        with open(path) as f:
            raw = json.load(f)
        m = TabularCmdp(
            num_states=int(raw["S"]),
            num_actions=int(raw["A"]),
            horizon=int(raw["H"]),
            transition=np.asarray(raw["P"], dtype=float),
            reward=np.asarray(raw["r"], dtype=float),
            cost=np.asarray(raw["c"], dtype=float),
            budget=float(raw["b"]),
            initial_state=int(raw["s1"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ValueError(f"malformed instance file {path}: {e}") from e
    problems = validate_cmdp(m)
    if problems:
        head = "; ".join(str(p) for p in problems[:5])
        more = f" (+{len(problems) - 5} more)" if len(problems) > 5 else ""
        raise ValueError(f"invalid instance {path}: {head}{more}")
    return TabularCmdp(
        m.num_states, m.num_actions, m.horizon,
        normalize_transition_rows(m.transition), m.reward, m.cost,
        m.budget, m.initial_state)


def instance_hash(m: TabularCmdp) -> str:
    """sha256 over the canonical JSON serialization of the instance."""
    blob = json.dumps(_instance_payload(m), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
