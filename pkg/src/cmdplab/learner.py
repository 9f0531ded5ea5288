"""Model-based primal-dual learner for online constrained MDPs.

Each episode runs T inner iterations against the current empirical model:
the primal step does one greedy backward induction on the Lagrangian stage
(optimistic reward minus lambda times pessimistic cost), and the dual step
moves lambda by eta * (pessimistic cost value - shifted budget), projected
onto a finite grid {0, eps1, 2*eps1, ..., U}. The episode's behavior policy
is the uniform mixture of the T greedy policies; one trajectory is sampled
from it and folded into the counts.

Confidence bonuses are Bernstein-style:

    scale * (c1 * sqrt(Var_phat(V_next) * log(1/delta') / n)
             + c2 * H * log(1/delta') / n)

with c1 = 460/9, c2 = 544/9, delta' = delta / (200 S A H^2 K^2), and n the
size of the batch behind the current empirical row. Optimistic reward backups
clip at H, pessimistic cost backups clip at 0, and state-action pairs with no
built batch default to the extremes (H for reward, 0 for cost).

The empirical kernel row for a pair is rebuilt from scratch each time its
total visit count crosses a power of two, using only the transitions observed
since the previous rebuild; batch sizes per pair therefore follow
1, 1, 2, 4, 8, ... and each pair is rebuilt at most log2(K) + 1 times.

Budget shift: relaxed mode aims at b' = b + shift (slack spent on faster
learning), strict mode at b' = b - shift (margin spent on safety). The true
kernel is never read here; callers pass in the known reward/cost tables and
the learner sees the environment only through sampled transitions.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import MixturePolicy, Policy, TabularCmdp, ValueTable
from .simulate import episode_stream, sample_mixture_episode

BONUS_C1 = 460.0 / 9.0
BONUS_C2 = 544.0 / 9.0

RELAXED = "relaxed"
STRICT = "strict"


@dataclass(frozen=True)
class ScaleMultipliers:
    """User scaling applied to the derived K, T, U, eps1 (the formulas fix orders, not constants)."""

    k: float = 1.0
    t: float = 1.0
    u: float = 1.0
    eps1: float = 1.0


@dataclass(frozen=True)
class LearnerConfig:
    """Hyperparameters for one run. Build through make() or derive_config().

    dual_cap is U (always an exact multiple of grid_step), grid_step is eps1,
    shift is the budget shift (tau in relaxed mode, Delta in strict mode).
    delta_prime is the per-estimate failure probability delta/(200 S A H^2 K^2).
    """

    num_states: int
    num_actions: int
    horizon: int
    episodes: int  # K
    iters: int  # T, dual updates per episode
    dual_cap: float  # U
    grid_step: float  # eps1
    eta: float
    delta: float
    delta_prime: float
    mode: str
    shift: float
    c1: float = BONUS_C1
    c2: float = BONUS_C2
    bonus_scale: float = 1.0

    @classmethod
    def make(cls, num_states, num_actions, horizon, episodes, iters, dual_cap,
             grid_step, delta, mode, shift, eta=None, c1=BONUS_C1, c2=BONUS_C2,
             bonus_scale=1.0) -> "LearnerConfig":
        """Validate, round U up to the grid, and default eta = U / (H sqrt(T))."""
        if episodes < 1 or iters < 1:
            raise ValueError(f"episodes and iters must be >= 1, got {episodes}, {iters}")
        if not (dual_cap > 0 and grid_step > 0):
            raise ValueError(f"dual_cap and grid_step must be positive")
        if not 0 < delta < 1:
            raise ValueError(f"delta must be in (0, 1), got {delta}")
        if mode not in (RELAXED, STRICT):
            raise ValueError(f"mode must be {RELAXED!r} or {STRICT!r}, got {mode!r}")
        if shift < 0:
            raise ValueError(f"shift must be >= 0, got {shift}")
        if bonus_scale < 0:
            raise ValueError(f"bonus_scale must be >= 0, got {bonus_scale}")
        steps = math.ceil(dual_cap / grid_step - 1e-12)
        dual_cap = steps * grid_step
        if eta is None:
            eta = dual_cap / (horizon * math.sqrt(iters))
        delta_prime = delta / (200.0 * num_states * num_actions
                               * horizon**2 * episodes**2)
        return cls(num_states, num_actions, horizon, int(episodes), int(iters),
                   float(dual_cap), float(grid_step), float(eta), float(delta),
                   float(delta_prime), mode, float(shift), float(c1), float(c2),
                   float(bonus_scale))

    @property
    def log_inv_delta_prime(self) -> float:
        return math.log(1.0 / self.delta_prime)

    def b_prime(self, budget: float) -> float:
        """The shifted budget the dual update tracks."""
        return budget + self.shift if self.mode == RELAXED else budget - self.shift

    def snapshot(self) -> dict:
        keys = ("num_states", "num_actions", "horizon", "episodes", "iters",
                "dual_cap", "grid_step", "eta", "delta", "delta_prime", "mode",
                "shift", "c1", "c2", "bonus_scale")
        return {k: getattr(self, k) for k in keys}


def derive_config(mode, epsilon, delta, m: TabularCmdp, zeta=None,
                  multipliers: ScaleMultipliers = ScaleMultipliers(),
                  bonus_scale=1.0, episodes=None, iters=None, dual_cap=None,
                  grid_step=None) -> LearnerConfig:
    """Fill a config from the accuracy target epsilon via the rate formulas.

    Relaxed mode (any 0 < epsilon <= H):
        T = H^4/eps^4, U = H/eps, eps1 = eps^3/H^3, shift = eps/2,
        K = S A H^3 / eps^2.
    Strict mode (needs the instance's zeta > 0 and 0 < epsilon <= H - zeta):
        T = H^6/(zeta^4 eps^2), U = H^2/(zeta (H - eps)),
        eps1 = eps^2 zeta^2 / H^4, shift = zeta eps / (2H),
        K = S A H^5 / (eps^2 zeta^2).
    K, T are ceilinged to integers; explicit keyword overrides win over the
    formulas (multipliers only scale derived values).
    """
    s_, a_, h_ = m.num_states, m.num_actions, m.horizon
    if mode == RELAXED:
        if not 0 < epsilon <= h_:
            raise ValueError(f"relaxed mode needs 0 < epsilon <= H, got {epsilon}")
        t0 = h_**4 / epsilon**4
        u0 = h_ / epsilon
        e0 = epsilon**3 / h_**3
        shift = epsilon / 2.0
        k0 = s_ * a_ * h_**3 / epsilon**2
    elif mode == STRICT:
        if zeta is None:
            raise ValueError("strict mode needs the instance's budget slack zeta")
        if not zeta > 0:
            raise ValueError(f"strict mode needs zeta > 0, got {zeta}")
        if not 0 < epsilon <= h_ - zeta:
            raise ValueError(
                f"strict mode needs 0 < epsilon <= H - zeta = {h_ - zeta}, got {epsilon}")
        t0 = h_**6 / (zeta**4 * epsilon**2)
        u0 = h_**2 / (zeta * (h_ - epsilon))
        e0 = epsilon**2 * zeta**2 / h_**4
        shift = zeta * epsilon / (2.0 * h_)
        if not shift < zeta:  # pragma: no cover - implied by epsilon < 2H
            raise ValueError(f"shift {shift} must stay below zeta {zeta}")
        k0 = s_ * a_ * h_**5 / (epsilon**2 * zeta**2)
    else:
        raise ValueError(f"mode must be {RELAXED!r} or {STRICT!r}, got {mode!r}")
    episodes = int(episodes) if episodes is not None else max(1, math.ceil(multipliers.k * k0))
    iters = int(iters) if iters is not None else max(1, math.ceil(multipliers.t * t0))
    dual_cap = float(dual_cap) if dual_cap is not None else multipliers.u * u0
    grid_step = float(grid_step) if grid_step is not None else multipliers.eps1 * e0
    return LearnerConfig.make(s_, a_, h_, episodes, iters, dual_cap, grid_step,
                              delta, mode, shift, bonus_scale=bonus_scale)


# ---------------------------------------------------------------------------
# Empirical model with doubling batches.


@dataclass
class CountTables:
    """Visit statistics per (h, s, a): lifetime totals, the accumulating batch,
    the size of the last built batch (0 = none yet), rebuild count, and the
    per-pair history of built batch sizes."""

    total: np.ndarray  # (H, S, A) lifetime visits
    batch_counts: np.ndarray  # (H, S, A, S) transitions since last rebuild
    batch_size: np.ndarray  # (H, S, A) size of the batch behind kernel rows
    epochs: np.ndarray  # (H, S, A) number of rebuilds
    history: dict = field(default_factory=dict)


@dataclass
class EmpiricalModel:
    """Counts plus the current empirical kernel.

    kernel rows are defined only where counts.batch_size >= 1; undefined rows
    stay zero and are never consulted (the backup takes the default branch).
    """

    counts: CountTables
    kernel: np.ndarray  # (H, S, A, S)

    @classmethod
    def empty(cls, num_states: int, num_actions: int, horizon: int) -> "EmpiricalModel":
        shape = (horizon, num_states, num_actions)
        return cls(
            CountTables(
                total=np.zeros(shape, dtype=np.int64),
                batch_counts=np.zeros(shape + (num_states,), dtype=np.int64),
                batch_size=np.zeros(shape, dtype=np.int64),
                epochs=np.zeros(shape, dtype=np.int64),
            ),
            kernel=np.zeros(shape + (num_states,)),
        )

    @classmethod
    def from_kernel(cls, kernel: np.ndarray, batch_size: int = 1) -> "EmpiricalModel":
        """Fully populated model with every row backed by a batch of the given size."""
        horizon, s_, a_, _ = kernel.shape
        model = cls.empty(s_, a_, horizon)
        model.kernel = np.array(kernel, dtype=float)
        model.counts.total[:] = batch_size
        model.counts.batch_size[:] = batch_size
        model.counts.epochs[:] = 1
        return model


def record_transition(model: EmpiricalModel, h: int, s: int, a: int, s_next: int) -> bool:
    """Fold one transition into the counts; True iff the (h, s, a) row was rebuilt.

    Rebuilds happen when the lifetime count hits a power of two (1, 2, 4, ...);
    the new row is the distribution of the batch accumulated since the last
    rebuild, and the batch then resets.
    """
    c = model.counts
    c.total[h, s, a] += 1
    c.batch_counts[h, s, a, s_next] += 1
    n = int(c.total[h, s, a])
    if n & (n - 1):
        return False
    batch = c.batch_counts[h, s, a]
    size = int(batch.sum())
    model.kernel[h, s, a] = batch / size
    c.batch_size[h, s, a] = size
    c.epochs[h, s, a] += 1
    c.history.setdefault((h, s, a), []).append(size)
    batch[:] = 0
    return True


def compute_bonus(p_hat, v_next, n: int, cfg: LearnerConfig) -> float:
    """Bernstein bonus for one (h, s, a) row against the value vector v_next."""
    if n < 1:
        raise ValueError(f"bonus needs a built batch (n >= 1), got n={n}")
    p_hat = np.asarray(p_hat, dtype=float)
    v_next = np.asarray(v_next, dtype=float)
    mean = float(p_hat @ v_next)
    var = max(float(p_hat @ (v_next * v_next)) - mean * mean, 0.0)
    log_term = cfg.log_inv_delta_prime
    return cfg.bonus_scale * (cfg.c1 * math.sqrt(var * log_term / n)
                              + cfg.c2 * cfg.horizon * log_term / n)


def _q_tables(model, reward, cost, cfg, vr_next, vc_next, h):
    """Clipped optimistic-reward / pessimistic-cost action values at step h."""
    horizon, s_, a_ = reward.shape
    qr = np.empty((s_, a_))
    qc = np.empty((s_, a_))
    batch_size = model.counts.batch_size
    for s in range(s_):
        for a in range(a_):
            n = int(batch_size[h, s, a])
            if n == 0:
                qr[s, a] = horizon  # optimistic default for unseen pairs
                qc[s, a] = 0.0
                continue
            p = model.kernel[h, s, a]
            qr[s, a] = min(
                reward[h, s, a] + compute_bonus(p, vr_next, n, cfg) + p @ vr_next,
                float(horizon))
            qc[s, a] = max(
                cost[h, s, a] - compute_bonus(p, vc_next, n, cfg) + p @ vc_next,
                0.0)
    return qr, qc


def lagrangian_greedy_backup(model, reward, cost, lam: float, cfg: LearnerConfig):
    """Greedy backward induction on q_r - lam * q_c over the empirical model.

    Returns (deterministic Policy, optimistic reward ValueTable, pessimistic
    cost ValueTable); the tables hold the values of the returned policy, with
    ties going to the lowest action index.
    """
    horizon, s_, a_ = reward.shape
    vr = np.zeros((horizon + 1, s_))
    vc = np.zeros((horizon + 1, s_))
    actions = np.zeros((horizon, s_), dtype=int)
    rng_s = np.arange(s_)
    for h in range(horizon - 1, -1, -1):
        qr, qc = _q_tables(model, reward, cost, cfg, vr[h + 1], vc[h + 1], h)
        best = (qr - lam * qc).argmax(axis=1)
        actions[h] = best
        vr[h] = qr[rng_s, best]
        vc[h] = qc[rng_s, best]
    return Policy.from_actions(actions, a_), ValueTable(vr), ValueTable(vc)


def policy_value_bounds(model, reward, cost, policy: Policy, cfg: LearnerConfig):
    """Optimistic-reward and pessimistic-cost values of a fixed policy.

    Same clipped backups as the greedy sweep, but combined with the policy's
    own action distribution; used to check the optimism guarantee.
    """
    horizon, s_, a_ = reward.shape
    vr = np.zeros((horizon + 1, s_))
    vc = np.zeros((horizon + 1, s_))
    for h in range(horizon - 1, -1, -1):
        qr, qc = _q_tables(model, reward, cost, cfg, vr[h + 1], vc[h + 1], h)
        vr[h] = np.einsum("sa,sa->s", policy.rule[h], qr)
        vc[h] = np.einsum("sa,sa->s", policy.rule[h], qc)
    return ValueTable(vr), ValueTable(vc)


# ---------------------------------------------------------------------------
# Dual ascent on the grid.


@dataclass(frozen=True)
class DualState:
    """Current dual variable plus the grid it lives on."""

    lam: float
    grid_step: float  # eps1
    cap: float  # U, an exact multiple of grid_step
    eta: float

    @classmethod
    def initial(cls, cfg: LearnerConfig) -> "DualState":
        return cls(0.0, cfg.grid_step, cfg.dual_cap, cfg.eta)


def round_to_grid(lam_raw: float, grid_step: float, cap: float) -> float:
    """Clamp to [0, cap], then round to the nearest grid multiple (midpoints down)."""
    if lam_raw <= 0.0:
        return 0.0
    if lam_raw >= cap:
        return cap
    x = lam_raw / grid_step
    idx = math.floor(x)
    if x - idx > 0.5:
        idx += 1
    idx = min(idx, int(round(cap / grid_step)))
    return idx * grid_step


def dual_step(state: DualState, v_c_hat: float, b_prime: float) -> DualState:
    """One projected ascent step: lam <- grid(lam + eta * (v_c_hat - b_prime))."""
    raw = state.lam + state.eta * (v_c_hat - b_prime)
    return replace(state, lam=round_to_grid(raw, state.grid_step, state.cap))


def _uniform_mixture(policies) -> MixturePolicy:
    """Uniform mixture with identical components (by identity) merged."""
    groups = {}
    for p in policies:
        entry = groups.get(id(p))
        if entry is None:
            groups[id(p)] = [p, 1]
        else:
            entry[1] += 1
    n = len(policies)
    return MixturePolicy(tuple((count / n, p) for p, count in groups.values()))


def primal_dual_episode(model, reward, cost, initial_state, cfg: LearnerConfig,
                        b_prime: float, cache: dict | None = None):
    """Run the T inner primal-dual iterations against the fixed model.

    Returns (mixture of the T greedy policies, lambda trace, trace of the
    pessimistic cost values the dual saw). `cache` memoizes backups by lambda
    (valid until the model changes); since lambda lives on a finite grid this
    collapses repeated iterations to dictionary hits.
    """
    if cache is None:
        cache = {}
    state = DualState.initial(cfg)
    lam_trace = np.empty(cfg.iters)
    vc_trace = np.empty(cfg.iters)
    policies = []
    for t in range(cfg.iters):
        hit = cache.get(state.lam)
        if hit is None:
            hit = lagrangian_greedy_backup(model, reward, cost, state.lam, cfg)
            cache[state.lam] = hit
        pi, _, vc = hit
        v_c_hat = float(vc.values[0, initial_state])
        lam_trace[t] = state.lam
        vc_trace[t] = v_c_hat
        policies.append(pi)
        state = dual_step(state, v_c_hat, b_prime)
    return _uniform_mixture(policies), lam_trace, vc_trace


# ---------------------------------------------------------------------------
# The online loop.


@dataclass
class EpisodeLog:
    """Per-episode artifacts: the behavior mixture, the dual traces, cumulative
    model rebuilds, and (when timing is on) wall time in milliseconds."""

    episode: int
    mixture: MixturePolicy
    lambda_trace: np.ndarray
    vc_trace: np.ndarray
    model_updates_cum: int
    wall_ms: float


@dataclass
class LearnerResult:
    """Everything a run produced: the final averaged mixture, per-episode logs,
    and the final empirical model."""

    final_policy: MixturePolicy
    episodes: list
    model: EmpiricalModel
    config: LearnerConfig
    seed: int


def run_learner(env: TabularCmdp, cfg: LearnerConfig, seed: int,
                measure_time: bool = False, max_episodes: int = 1_000_000) -> LearnerResult:
    """Full online run: K episodes of plan / sample / update.

    The environment is touched only through sampled transitions (episode k
    uses the derived stream episode_stream(seed, k)). Identical (env, cfg,
    seed) reproduce bit-identical results; wall_ms stays 0.0 unless
    measure_time is set, because real timings cannot be reproducible.
    """
    if (cfg.num_states, cfg.num_actions, cfg.horizon) != (
            env.num_states, env.num_actions, env.horizon):
        raise ValueError(
            f"config dims ({cfg.num_states}, {cfg.num_actions}, {cfg.horizon}) "
            f"do not match instance ({env.num_states}, {env.num_actions}, {env.horizon})")
    if cfg.episodes > max_episodes:
        raise ValueError(f"cfg.episodes={cfg.episodes} exceeds the hard cap {max_episodes}")
    b_prime = cfg.b_prime(env.budget)
    if b_prime <= 0:
        raise ValueError(f"shifted budget b'={b_prime} must be positive")
    model = EmpiricalModel.empty(env.num_states, env.num_actions, env.horizon)
    cache: dict = {}
    logs = []
    weight_by_id: dict = {}
    for k in range(cfg.episodes):
        t0 = time.perf_counter() if measure_time else 0.0
        mixture, lam_trace, vc_trace = primal_dual_episode(
            model, env.reward, env.cost, env.initial_state, cfg, b_prime, cache)
        rng = episode_stream(seed, k)
        _, traj = sample_mixture_episode(env, mixture, rng)
        touched = False
        for step in traj.steps:
            if record_transition(model, step.h, step.state, step.action, step.next_state):
                touched = True
        if touched:
            cache.clear()
        for w, p in mixture.components:
            entry = weight_by_id.get(id(p))
            if entry is None:
                weight_by_id[id(p)] = [p, w]
            else:
                entry[1] += w
        wall = (time.perf_counter() - t0) * 1e3 if measure_time else 0.0
        logs.append(EpisodeLog(k, mixture, lam_trace, vc_trace,
                               int(model.counts.epochs.sum()), wall))
    final = MixturePolicy(tuple(
        (w / cfg.episodes, p) for p, w in weight_by_id.values()))
    return LearnerResult(final, logs, model, cfg, seed)
