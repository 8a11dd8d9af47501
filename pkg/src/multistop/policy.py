"""Executable stopping policies.

Includes the constrained linear threshold family with its unconstrained
spherical parametrization, a softmax baseline, grid-table lookup of solved
policies, time-periodic stopping, and the repeated single-stop heuristic.

A policy maps (belief, stops remaining, decision time, rng) to an action:
1 stops, 2 continues. Deterministic policies ignore the rng; only the
periodic baseline reads the time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from ._validation import ValidationError, as_float_array, check_in_range
from .dp import CONTINUE, STOP, BeliefGrid, ValueTable, solve
from .model import Model


@runtime_checkable
class Policy(Protocol):
    """Minimal interface every executable policy provides."""

    def act(
        self, belief: np.ndarray, stops_remaining: int, t: int, rng: np.random.Generator
    ) -> int: ...


def theta_from_phi(phi) -> np.ndarray:
    """Map unconstrained spherical coordinates to feasible threshold slopes.

    ``phi`` has shape (L, S - 1); so does the result. The squared-sine
    product structure pins every feasibility and nesting inequality:
    the last column is nonnegative and grows with the remaining-stop level,
    the second-to-last stays at least 1 and shrinks with the level, and the
    remaining columns are scaled-down copies of the second-to-last. Products
    accumulate one factor at a time, so those inequalities hold exactly in
    floating point, not merely up to tolerance.
    """
    phi = as_float_array(phi, "phi", ndim=2)
    L, width = phi.shape
    if L < 1 or width < 1:
        raise ValidationError(f"phi must be (L, S - 1) with L, S - 1 >= 1, got {phi.shape}")
    sin2 = np.sin(phi) ** 2
    theta = np.empty_like(phi)

    last = width - 1
    base = phi[0, last] ** 2
    suffix = 1.0
    theta[L - 1, last] = base * suffix
    for l in range(L - 1, 0, -1):  # level l, filling rows bottom-up
        suffix = sin2[l - 1, last] * suffix
        theta[l - 1, last] = base * suffix

    if width >= 2:
        col = width - 2
        base = phi[0, col] ** 2
        prefix = 1.0
        theta[0, col] = 1.0 + base * prefix
        for l in range(2, L + 1):
            prefix = prefix * sin2[l - 1, col]
            theta[l - 1, col] = 1.0 + base * prefix

    for i in range(width - 2):
        shrink = 1.0
        for l in range(L):
            shrink = shrink * sin2[l, i]
        theta[:, i] = theta[:, width - 2] * shrink
    return theta


def feasibility_violations(theta, tol: float = 0.0) -> list[str]:
    """Constraint violations of a threshold slope array; empty means feasible.

    Checks, per level l: the offset column is nonnegative, interior slopes
    are nonnegative and at most the cap column, the cap column is at least 1;
    and across levels: offsets nondecreasing in l, slopes nonincreasing.
    """
    theta = as_float_array(theta, "theta", ndim=2)
    L, width = theta.shape
    out = []
    last, cap = width - 1, width - 2
    for l in range(L):
        if theta[l, last] < -tol:
            out.append(f"offset negative at level {l + 1}")
        if width >= 2 and theta[l, cap] < 1.0 - tol:
            out.append(f"cap column below 1 at level {l + 1}")
        for i in range(width - 2):
            if theta[l, i] < -tol:
                out.append(f"slope {i + 1} negative at level {l + 1}")
            if theta[l, i] > theta[l, cap] + tol:
                out.append(f"slope {i + 1} above cap at level {l + 1}")
    for l in range(1, L):
        if theta[l - 1, last] > theta[l, last] + tol:
            out.append(f"offsets decrease from level {l} to {l + 1}")
        for i in range(width - 1):
            if theta[l - 1, i] < theta[l, i] - tol:
                out.append(f"slope {i + 1} increases from level {l} to {l + 1}")
    return out


@dataclass(frozen=True, eq=False)
class ThresholdParams:
    """Feasible linear threshold coefficients, one row per stop level.

    ``theta[l - 1]`` holds the hyperplane coefficients used when l stops
    remain; ``phi`` optionally carries the spherical coordinates the slopes
    came from.
    """

    theta: np.ndarray
    phi: np.ndarray | None = None

    def __post_init__(self):
        theta = as_float_array(self.theta, "theta", ndim=2)
        violations = feasibility_violations(theta)
        if violations:
            raise ValidationError("infeasible threshold parameters: " + "; ".join(violations))
        object.__setattr__(self, "theta", theta)
        if self.phi is not None:
            phi = as_float_array(self.phi, "phi", ndim=2)
            if phi.shape != theta.shape:
                raise ValidationError("phi and theta shapes differ")
            object.__setattr__(self, "phi", phi)

    @classmethod
    def from_phi(cls, phi) -> "ThresholdParams":
        phi = as_float_array(phi, "phi", ndim=2)
        return cls(theta=theta_from_phi(phi), phi=phi)

    @property
    def L(self) -> int:
        return self.theta.shape[0]

    def to_dict(self) -> dict:
        doc = {"type": "threshold", "theta": self.theta.tolist()}
        if self.phi is not None:
            doc["phi"] = self.phi.tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ThresholdParams":
        phi = doc.get("phi")
        return cls(
            theta=np.asarray(doc["theta"], dtype=np.float64),
            phi=None if phi is None else np.asarray(phi, dtype=np.float64),
        )


def threshold_scores(theta: np.ndarray, beliefs: np.ndarray, l: int) -> np.ndarray:
    """Signed distance to the stop hyperplane at level l; <= 0 means stop."""
    b = np.atleast_2d(beliefs)
    row = theta[l - 1]
    S = b.shape[1]
    scores = b[:, 1] - row[S - 2]
    if S > 2:
        scores = scores + b[:, 2:] @ row[: S - 2]
    return scores


def linear_threshold_action(params, pi, l: int) -> int:
    """Stop exactly when the belief lies on or below the level-l hyperplane."""
    theta = params.theta if isinstance(params, ThresholdParams) else np.asarray(params)
    score = threshold_scores(theta, np.asarray(pi, dtype=np.float64), int(l))[0]
    return STOP if score <= 0.0 else CONTINUE


@dataclass(frozen=True, eq=False)
class SoftmaxParams:
    """Weights of a stochastic two-action policy, shape (L, 2, S - 1).

    Action u's preference at level l is the inner product of
    ``weights[l - 1, u - 1]`` with the belief's last S - 1 coordinates (the
    first coordinate's weight is pinned at zero for identifiability).
    """

    weights: np.ndarray

    def __post_init__(self):
        w = as_float_array(self.weights, "weights")
        if w.ndim != 3 or w.shape[1] != 2:
            raise ValidationError(f"weights must have shape (L, 2, S - 1), got {w.shape}")
        object.__setattr__(self, "weights", w)

    @property
    def L(self) -> int:
        return self.weights.shape[0]

    def to_dict(self) -> dict:
        return {"type": "softmax", "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "SoftmaxParams":
        return cls(weights=np.asarray(doc["weights"], dtype=np.float64))


def softmax_probabilities(params: SoftmaxParams, pi, l: int) -> np.ndarray:
    """Action distribution (stop, continue) at belief pi with l stops left."""
    pi = np.asarray(pi, dtype=np.float64)
    z = params.weights[l - 1] @ pi[1:]
    z = z - z.max()  # overflow guard; softmax is shift-invariant
    e = np.exp(z)
    return e / e.sum()


def softmax_action(params: SoftmaxParams, pi, l: int, rng: np.random.Generator) -> int:
    p_stop = softmax_probabilities(params, pi, l)[0]
    return STOP if rng.random() < p_stop else CONTINUE


@dataclass(frozen=True, eq=False)
class ThresholdPolicy:
    params: ThresholdParams

    def act(self, belief, stops_remaining, t, rng) -> int:
        return linear_threshold_action(self.params, belief, stops_remaining)


@dataclass(frozen=True, eq=False)
class SoftmaxPolicy:
    params: SoftmaxParams

    def act(self, belief, stops_remaining, t, rng) -> int:
        return softmax_action(self.params, belief, stops_remaining, rng)


@dataclass(frozen=True, eq=False)
class TablePolicy:
    """Nearest-grid-point lookup of a solved action table."""

    table: ValueTable

    def act(self, belief, stops_remaining, t, rng) -> int:
        return int(self.table.action_at(belief, stops_remaining))


@dataclass(frozen=True, eq=False)
class PeriodicPolicy:
    """Stops on a fixed clock (t = period, 2 period, ...) regardless of belief."""

    period: int

    def act(self, belief, stops_remaining, t, rng) -> int:
        return STOP if t > 0 and t % self.period == 0 else CONTINUE


@dataclass(frozen=True, eq=False)
class RepeatedSingleStopPolicy:
    """Applies a solved one-stop rule at every level, belief carried forward."""

    table: ValueTable

    def act(self, belief, stops_remaining, t, rng) -> int:
        return int(self.table.action_at(belief, 1))


def periodic_policy(period: int) -> PeriodicPolicy:
    check_in_range(int(period), "period", low=1)
    return PeriodicPolicy(period=int(period))


def heuristic_policy(model: Model, grid: BeliefGrid | None = None) -> RepeatedSingleStopPolicy:
    """Solve the one-stop problem once and reuse its rule for every stop."""
    single = model.with_(L=1, rewards=model.rewards[:1])
    return RepeatedSingleStopPolicy(table=solve(single, grid=grid))


def policy_to_dict(policy) -> dict:
    if isinstance(policy, ThresholdPolicy):
        return policy.params.to_dict()
    if isinstance(policy, SoftmaxPolicy):
        return policy.params.to_dict()
    if isinstance(policy, PeriodicPolicy):
        return {"type": "periodic", "period": policy.period}
    if isinstance(policy, TablePolicy):
        return {"type": "table", "table": policy.table.to_dict()}
    if isinstance(policy, RepeatedSingleStopPolicy):
        return {"type": "heuristic", "table": policy.table.to_dict()}
    raise ValidationError(f"cannot serialize policy of type {type(policy).__name__}")


def policy_from_dict(doc: dict, model: Model | None = None) -> Policy:
    """Rebuild a policy from its JSON form.

    ``table``-bearing kinds load verbatim; ``optimal`` and ``heuristic``
    without an embedded table are solved on the spot and need a model. An
    optional ``grid`` key sets the solve resolution.
    """
    kind = doc.get("type")
    if kind == "threshold":
        return ThresholdPolicy(ThresholdParams.from_dict(doc))
    if kind == "softmax":
        return SoftmaxPolicy(SoftmaxParams.from_dict(doc))
    if kind == "periodic":
        return periodic_policy(doc["period"])
    if kind == "table" or (kind == "optimal" and "table" in doc):
        return TablePolicy(ValueTable.from_dict(doc["table"]))
    if kind == "heuristic" and "table" in doc:
        return RepeatedSingleStopPolicy(ValueTable.from_dict(doc["table"]))
    if kind in ("optimal", "heuristic"):
        if model is None:
            raise ValidationError(f"policy type {kind!r} needs a model to solve against")
        grid = None
        if "grid" in doc:
            grid = BeliefGrid(model.S, int(doc["grid"]))
        if kind == "optimal":
            return TablePolicy(solve(model, grid=grid))
        return heuristic_policy(model, grid=grid)
    raise ValidationError(f"unknown policy type {kind!r}")


def load_policy(path, model: Model | None = None) -> Policy:
    doc = json.loads(Path(path).read_text())
    return policy_from_dict(doc, model=model)


def save_policy(policy, path) -> None:
    Path(path).write_text(json.dumps(policy_to_dict(policy), indent=2) + "\n")
