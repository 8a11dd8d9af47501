"""Closed-loop simulation of stopping policies.

The single-trajectory path (`run_policy`) mirrors the decision loop one step
at a time and records everything; `evaluate` repeats it over independently
seeded runs and reports a confidence interval. The batched simulators
propagate all runs of a threshold or softmax policy in lockstep through
vectorized belief updates; they exist because the search procedure in
`spsa` evaluates objectives thousands of times.

Decision epochs run from time 0: the first action is taken at the initial
belief before any transition, so the undiscounted immediate stop available
to the dynamic program exists in simulation too and simulated values of the
solved policy line up with the solved value function. From time 1 on, each
step is: state transition, observation, belief update, then the policy acts
on the updated belief. A stop at time n with l stops in hand pays rho^n
times the expected level-l reward under the current belief; the budget then
drops by one and the run ends when it hits zero or the horizon runs out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError, check_in_range
from .dp import CONTINUE, STOP
from .filtering import sample_initial_state, sample_step, update
from .model import Model
from .policy import (
    Policy,
    SoftmaxParams,
    SoftmaxPolicy,
    ThresholdParams,
    ThresholdPolicy,
)


def default_horizon(model: Model, epsilon: float = 0.1) -> int:
    """Horizon that caps the truncation error at epsilon (discounted case)
    or the worst-case stopping time (undiscounted case)."""
    from .dp import finite_stop_bound, horizon_for_tolerance

    if model.rho < 1.0:
        return horizon_for_tolerance(model, epsilon)
    return int(math.ceil(finite_stop_bound(model)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Full record of one closed-loop run."""

    seed: int
    states: np.ndarray  # (n_steps + 1,) true states, entry 0 is the initial draw
    observations: np.ndarray  # (n_steps,)
    beliefs: np.ndarray  # (n_steps + 1, S), row 0 is the prior
    actions: np.ndarray  # (n_steps,) 1 stop, 2 continue
    stop_times: np.ndarray  # times n at which a stop was declared
    stop_levels: np.ndarray  # stops remaining when each stop was declared
    reward: float

    @property
    def n_steps(self) -> int:
        return len(self.actions)


def run_policy(
    model: Model,
    policy: Policy,
    horizon: int | None = None,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
) -> Trajectory:
    """Simulate one trajectory of `policy` against `model`.

    Pass either a seed or a ready generator; the recorded seed is -1 when an
    external generator is supplied.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
        recorded_seed = -1 if seed is None else int(seed)
    else:
        recorded_seed = -1
    if horizon is None:
        horizon = default_horizon(model)
    check_in_range(int(horizon), "horizon", low=1)

    penalty = model.continue_penalty if model.continue_penalty is not None else 0.0
    x = sample_initial_state(model, rng)
    pi = model.pi0.copy()
    l = model.L

    states = [x]
    observations: list[int] = []
    beliefs = [pi.copy()]
    actions: list[int] = []
    stop_times: list[int] = []
    stop_levels: list[int] = []
    total = 0.0
    disc = 1.0

    for n in range(0, int(horizon) + 1):
        if n > 0:
            x, y = sample_step(model, x, rng)
            pi, _ = update(model, pi, y)
            disc *= model.rho
            states.append(x)
            observations.append(y)
            beliefs.append(pi.copy())
        u = int(policy.act(pi, l, n, rng))
        if u not in (STOP, CONTINUE):
            raise ValidationError(f"policy returned invalid action {u!r}")
        actions.append(u)

        if u == STOP:
            total += disc * float(pi @ model.rewards[l - 1])
            stop_times.append(n)
            stop_levels.append(l)
            l -= 1
            if l == 0:
                break
        else:
            total += disc * penalty

    return Trajectory(
        seed=recorded_seed,
        states=np.asarray(states, dtype=np.int64),
        observations=np.asarray(observations, dtype=np.int64),
        beliefs=np.asarray(beliefs, dtype=np.float64),
        actions=np.asarray(actions, dtype=np.int64),
        stop_times=np.asarray(stop_times, dtype=np.int64),
        stop_levels=np.asarray(stop_levels, dtype=np.int64),
        reward=float(total),
    )


def run_linear(model: Model, params: ThresholdParams, **kwargs) -> Trajectory:
    return run_policy(model, ThresholdPolicy(params), **kwargs)


def run_softmax(model: Model, params: SoftmaxParams, **kwargs) -> Trajectory:
    return run_policy(model, SoftmaxPolicy(params), **kwargs)


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Monte Carlo estimate of a policy's value with a 95% normal interval."""

    label: str
    runs: int
    horizon: int
    seed: int
    mean: float
    stderr: float
    ci_low: float
    ci_high: float
    rewards: np.ndarray = field(repr=False)

    def to_dict(self, include_rewards: bool = False) -> dict:
        doc = {
            "label": self.label,
            "runs": self.runs,
            "horizon": self.horizon,
            "seed": self.seed,
            "mean": self.mean,
            "stderr": self.stderr,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
        }
        if include_rewards:
            doc["rewards"] = self.rewards.tolist()
        return doc


def _report(label, rewards, horizon, seed) -> EvalReport:
    rewards = np.asarray(rewards, dtype=np.float64)
    runs = len(rewards)
    mean = float(rewards.mean())
    stderr = float(rewards.std(ddof=1) / math.sqrt(runs)) if runs > 1 else 0.0
    return EvalReport(
        label=label,
        runs=runs,
        horizon=int(horizon),
        seed=int(seed),
        mean=mean,
        stderr=stderr,
        ci_low=mean - 1.96 * stderr,
        ci_high=mean + 1.96 * stderr,
        rewards=rewards,
    )


def evaluate(
    model: Model,
    policy: Policy,
    runs: int = 1000,
    horizon: int | None = None,
    seed: int = 0,
    label: str = "policy",
) -> EvalReport:
    """Average discounted reward of `policy` over `runs` seeded trajectories.

    Run i uses the i-th child seed of `seed`, so estimates are bit-for-bit
    reproducible and runs are independent.
    """
    check_in_range(int(runs), "runs", low=1)
    if horizon is None:
        horizon = default_horizon(model)
    child_seeds = np.random.SeedSequence(seed).generate_state(runs, dtype=np.uint64)
    rewards = np.empty(runs, dtype=np.float64)
    for i in range(runs):
        rng = np.random.default_rng(child_seeds[i])
        rewards[i] = run_policy(model, policy, horizon=horizon, rng=rng).reward
    return _report(label, rewards, horizon, seed)


# ---------------------------------------------------------------------------
# Batched simulation. The chain is autonomous: states and observations do not
# depend on actions, so drawing every random number up front from one seed
# makes two policies evaluated under the same seed see identical scenarios
# (common random numbers).
# ---------------------------------------------------------------------------


def _draw_batch_randomness(model: Model, horizon: int, runs: int, seed) -> tuple:
    rng = np.random.default_rng(seed)
    u_init = rng.random(runs)
    u_state = rng.random((horizon, runs))
    u_obs = rng.random((horizon, runs))
    # one extra action row: the first decision happens before any transition
    u_act = rng.random((horizon + 1, runs))
    return u_init, u_state, u_obs, u_act


def _inverse_cdf(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    # first index where the row cdf exceeds the uniform draw
    return (cdf_rows > u[:, None]).argmax(axis=1)


def _batch_core(model, horizon, runs, seed, act_fn):
    """Shared driver: act_fn(Pi, levels, u_act) -> bool stop mask."""
    S = model.S
    u_init, u_state, u_obs, u_act = _draw_batch_randomness(model, horizon, runs, seed)
    P_cdf = np.cumsum(model.P, axis=1)
    B_cdf = np.cumsum(model.B, axis=1)
    penalty = model.continue_penalty if model.continue_penalty is not None else 0.0

    x = _inverse_cdf(np.broadcast_to(np.cumsum(model.pi0), (runs, S)), u_init)
    Pi = np.broadcast_to(model.pi0, (runs, S)).copy()
    levels = np.full(runs, model.L, dtype=np.int64)
    total = np.zeros(runs, dtype=np.float64)
    disc = 1.0

    for n in range(horizon + 1):
        if n > 0:
            x = _inverse_cdf(P_cdf[x], u_state[n - 1])
            y = _inverse_cdf(B_cdf[x], u_obs[n - 1])
            pre = Pi @ model.P
            post = pre * model.B[:, y].T
            sigma = post.sum(axis=1)
            dead_filter = sigma <= 0.0
            if dead_filter.any():
                post[dead_filter] = pre[dead_filter]
                sigma = post.sum(axis=1)
            Pi = post / sigma[:, None]
            disc *= model.rho

        alive = levels > 0
        if not alive.any():
            break
        stop = act_fn(Pi, levels, u_act[n]) & alive
        if stop.any():
            idx = np.flatnonzero(stop)
            rows = model.rewards[levels[idx] - 1]
            total[idx] += disc * np.einsum("ij,ij->i", Pi[idx], rows)
            levels[idx] -= 1
        cont = alive & ~stop
        if penalty != 0.0 and cont.any():
            total[cont] += disc * penalty
    return total


def simulate_threshold_batch(
    model: Model, theta: np.ndarray, horizon: int, runs: int, seed
) -> np.ndarray:
    """Per-run discounted rewards of the linear threshold policy `theta`."""
    theta = np.asarray(theta, dtype=np.float64)

    def act(Pi, levels, u_act):
        rows = theta[np.maximum(levels, 1) - 1]
        S = Pi.shape[1]
        scores = Pi[:, 1] - rows[:, S - 2]
        if S > 2:
            scores = scores + np.einsum("ij,ij->i", Pi[:, 2:], rows[:, : S - 2])
        return scores <= 0.0

    return _batch_core(model, int(horizon), int(runs), seed, act)


def simulate_softmax_batch(
    model: Model, weights: np.ndarray, horizon: int, runs: int, seed
) -> np.ndarray:
    """Per-run discounted rewards of the softmax policy `weights`."""
    weights = np.asarray(weights, dtype=np.float64)

    def act(Pi, levels, u_act):
        rows = weights[np.maximum(levels, 1) - 1]  # (runs, 2, S - 1)
        z = np.einsum("rus,rs->ru", rows, Pi[:, 1:])
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        p_stop = e[:, 0] / e.sum(axis=1)
        return u_act < p_stop

    return _batch_core(model, int(horizon), int(runs), seed, act)


__all__ = [
    "EvalReport",
    "Trajectory",
    "default_horizon",
    "evaluate",
    "run_linear",
    "run_policy",
    "run_softmax",
    "simulate_threshold_batch",
    "simulate_softmax_batch",
]
