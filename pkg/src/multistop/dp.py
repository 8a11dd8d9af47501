"""Grid-based value iteration for the multiple-stopping Bellman equations.

The belief simplex is discretized to the rational grid of a chosen
resolution; expectations over next observations are evaluated by
nearest-grid-point lookup of the updated beliefs. Each sweep applies the
stop/continue Bellman operator jointly for every remaining-stop level.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import comb

import numpy as np

from ._validation import ValidationError, check_in_range
from .model import Model, max_abs_reward

logger = logging.getLogger(__name__)

STOP, CONTINUE = 1, 2


class ConvergenceError(RuntimeError):
    """Value iteration hit the sweep limit before reaching tolerance."""

    def __init__(self, residual: float, max_iter: int):
        super().__init__(
            f"no convergence after {max_iter} sweeps, sup-norm residual {residual:.3e}"
        )
        self.residual = residual


class BeliefGrid:
    """All beliefs whose coordinates are integer multiples of 1/resolution.

    Points are stored in ascending lexicographic order, which makes the
    nearest-point tie rule (lexicographically smallest wins) fall out of a
    plain argmin. Point count is C(resolution + S - 1, S - 1).
    """

    def __init__(self, S: int, resolution: int):
        check_in_range(int(S), "state count", low=2)
        check_in_range(int(resolution), "grid resolution", low=1)
        self.S = int(S)
        self.resolution = int(resolution)
        self.points = _simplex_lattice(self.S, self.resolution)

    @classmethod
    def from_min_points(cls, S: int, min_points: int = 100) -> "BeliefGrid":
        """Smallest-resolution grid with at least the requested point count."""
        M = 1
        while comb(M + S - 1, S - 1) < min_points:
            M += 1
        return cls(S, M)

    def __len__(self) -> int:
        return self.points.shape[0]

    def lookup(self, beliefs) -> np.ndarray:
        """Indices of the nearest grid points in Euclidean distance.

        Accepts a single belief or a (K, S) batch; ties resolve to the
        lexicographically smallest point.
        """
        b = np.asarray(beliefs, dtype=np.float64)
        squeeze = b.ndim == 1
        b = np.atleast_2d(b)
        if b.shape[1] != self.S:
            raise ValidationError(f"beliefs have {b.shape[1]} entries, grid has {self.S}")
        out = np.empty(b.shape[0], dtype=np.int64)
        # chunked so the (rows, points, S) difference tensor stays small
        chunk = max(1, int(4_000_000 / (len(self) * self.S)))
        for start in range(0, b.shape[0], chunk):
            block = b[start : start + chunk]
            d2 = ((block[:, None, :] - self.points[None, :, :]) ** 2).sum(axis=2)
            out[start : start + chunk] = np.argmin(d2, axis=1)
        return out[0] if squeeze else out


def _simplex_lattice(S: int, M: int) -> np.ndarray:
    counts = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            counts.append(prefix + [remaining])
            return
        for c in range(remaining + 1):
            rec(prefix + [c], remaining - c, slots - 1)

    rec([], M, S)
    return np.array(counts, dtype=np.float64) / M


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Converged values and actions per (grid point, stops remaining).

    ``V`` has shape (grid, L + 1) with the zero-stops column fixed at 0;
    ``policy`` has shape (grid, L) holding 1 (stop) or 2 (continue), with
    ties resolved to stop. ``marginal`` is the value of one extra stop,
    V(pi, l) - V(pi, l - 1), per level l = 1..L.
    """

    grid: BeliefGrid
    V: np.ndarray
    policy: np.ndarray
    iterations: int
    residual: float

    @property
    def L(self) -> int:
        return self.policy.shape[1]

    @property
    def marginal(self) -> np.ndarray:
        return np.diff(self.V, axis=1)

    def value_at(self, beliefs, l: int) -> np.ndarray:
        return self.V[self.grid.lookup(beliefs), l]

    def action_at(self, beliefs, l: int) -> np.ndarray:
        return self.policy[self.grid.lookup(beliefs), l - 1]

    def to_dict(self) -> dict:
        return {
            "states": self.grid.S,
            "resolution": self.grid.resolution,
            "V": self.V.tolist(),
            "policy": self.policy.tolist(),
            "iterations": self.iterations,
            "residual": self.residual,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ValueTable":
        grid = BeliefGrid(doc["states"], doc["resolution"])
        return cls(
            grid=grid,
            V=np.asarray(doc["V"], dtype=np.float64),
            policy=np.asarray(doc["policy"], dtype=np.int8),
            iterations=int(doc["iterations"]),
            residual=float(doc["residual"]),
        )


def _transition_tables(model: Model, grid: BeliefGrid):
    """Per-(grid point, observation) likelihoods and nearest-grid successors."""
    pts = grid.points
    predicted = pts @ model.P  # row g holds P' pi_g
    sigma = predicted @ model.B  # (G, Y)
    posts = model.B.T[None, :, :] * predicted[:, None, :]
    safe = np.where(sigma > 0.0, sigma, 1.0)
    posts = posts / safe[:, :, None]
    # zero-likelihood observations carry zero weight, so their index is moot
    G, Y = sigma.shape
    nidx = grid.lookup(posts.reshape(G * Y, -1)).reshape(G, Y)
    return sigma, nidx


def _initial_values(model: Model, pts: np.ndarray) -> np.ndarray:
    """Value of stopping at every one of the next l steps, per level."""
    G = pts.shape[0]
    V = np.zeros((G, model.L + 1))
    c = np.zeros(model.S)
    for l in range(1, model.L + 1):
        c = model.rewards[l - 1] + model.rho * (model.P @ c)
        V[:, l] = pts @ c
    return V


def solve(
    model: Model,
    grid: BeliefGrid | None = None,
    tol: float = 1e-6,
    max_iter: int = 10_000,
    horizon: int | None = None,
) -> ValueTable:
    """Run value iteration until the sup-norm residual drops below tol.

    With ``horizon`` set, exactly that many sweeps are applied from the
    all-zero table instead, which yields the finite-horizon value function;
    otherwise iteration starts from the repeated-stopping rollout values,
    which are a tight lower-bound guess. Requires rho < 1.
    """
    if model.rho >= 1.0:
        raise ValidationError("value iteration requires discount rho < 1")
    if grid is None:
        grid = BeliefGrid.from_min_points(model.S, 100)
    pts = grid.points
    sigma, nidx = _transition_tables(model, grid)
    stop_now = pts @ model.rewards.T  # (G, L)

    if horizon is not None:
        check_in_range(int(horizon), "horizon", low=1)
        V = np.zeros((len(grid), model.L + 1))
        sweeps = int(horizon)
    else:
        V = _initial_values(model, pts)
        sweeps = int(max_iter)

    policy = np.full((len(grid), model.L), CONTINUE, dtype=np.int8)
    residual = np.inf
    it = 0
    for it in range(1, sweeps + 1):
        V_next = np.zeros_like(V)
        for l in range(1, model.L + 1):
            expect_keep = (sigma * V[nidx, l]).sum(axis=1)
            expect_spent = (sigma * V[nidx, l - 1]).sum(axis=1)
            q_stop = stop_now[:, l - 1] + model.rho * expect_spent
            q_cont = model.rho * expect_keep
            stop_mask = q_stop >= q_cont
            V_next[:, l] = np.where(stop_mask, q_stop, q_cont)
            policy[:, l - 1] = np.where(stop_mask, STOP, CONTINUE)
        residual = float(np.max(np.abs(V_next - V)))
        V = V_next
        if horizon is None and residual < tol:
            break
        if it % 200 == 0:
            logger.debug("sweep %d residual %.3e", it, residual)
    else:
        if horizon is None:
            raise ConvergenceError(residual, max_iter)
    return ValueTable(grid=grid, V=V, policy=policy, iterations=it, residual=residual)


def stopping_sets(table: ValueTable) -> np.ndarray:
    """Boolean stop indicators per level, shape (L, grid points)."""
    return (table.policy == STOP).T.copy()


def finite_stop_bound(model: Model) -> float:
    """Latest time any optimal policy can still be stopping.

    Valid when the best stop reward is positive and continuing costs a
    strictly negative floor per step: waiting longer than
    L * max_reward / |floor| can only lose money.
    """
    r_max = float(model.rewards.max())
    if r_max <= 0:
        raise ValidationError("finite-stop bound needs a positive maximum stop reward")
    floor = model.continue_penalty
    if floor is None or floor >= 0:
        raise ValidationError(
            "finite-stop bound needs a strictly negative continue_penalty"
        )
    return model.L * r_max / abs(floor)


def horizon_for_tolerance(model: Model, epsilon: float) -> int:
    """Shortest horizon whose truncation error bound is at most epsilon.

    The discounted tail after N steps is bounded by rho^N / (1 - rho) times
    the largest absolute reward.
    """
    check_in_range(float(epsilon), "epsilon", low=0.0, low_open=True)
    rho = model.rho
    if not 0.0 < rho < 1.0:
        raise ValidationError(f"horizon bound needs rho in (0, 1), got {rho}")
    scale = max_abs_reward(model)
    if scale == 0.0:
        return 0

    def ok(N: int) -> bool:
        return rho**N / (1.0 - rho) * scale <= epsilon

    N = 0 if ok(0) else int(np.ceil(np.log(epsilon * (1.0 - rho) / scale) / np.log(rho)))
    N = max(N, 0)
    while not ok(N):
        N += 1
    while N > 0 and ok(N - 1):
        N -= 1
    return N
