"""Simultaneous-perturbation stochastic search over policy parameters.

Maximizes the simulated discounted reward of a policy family by finite
differences along random +/-1 directions: two simulations per iteration
estimate the gradient regardless of dimension. The threshold family is
searched in its unconstrained spherical coordinates, so every iterate maps
to feasible, nested thresholds by construction; the softmax family is
searched directly in weight space.

Both sides of each finite difference reuse one simulation seed by default.
The chain is autonomous, so the two evaluations then see identical state
and observation draws and the difference isolates the policy change.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError, check_in_range
from .model import Model
from .policy import SoftmaxParams, ThresholdParams, theta_from_phi
from .sim import default_horizon, simulate_softmax_batch, simulate_threshold_batch

PARAMETRIZATIONS = ("threshold", "softmax")


@dataclass(frozen=True)
class SpsaConfig:
    """Tuning knobs for the search.

    Step sizes follow the standard two-sequence schedule: the ascent gain
    a_n = eps_gain / (n + 1 + varsigma)^kappa and the perturbation size
    c_n = mu_gain / (n + 1)^upsilon, with n counted from zero.
    """

    kappa: float = 0.602
    upsilon: float = 0.2
    varsigma: float = 0.5
    eps_gain: float = 0.1667
    mu_gain: float = 2.0
    max_iter: int = 1000
    grad_tol: float = 1e-3
    mc_runs: int = 100
    horizon: int | None = None
    seed: int = 0
    common_random_numbers: bool = True

    def __post_init__(self):
        check_in_range(self.kappa, "kappa", low=0.5, high=1.0, low_open=True)
        check_in_range(self.upsilon, "upsilon", low=0.0, high=1.0, low_open=True)
        check_in_range(self.varsigma, "varsigma", low=0.0)
        check_in_range(self.eps_gain, "eps_gain", low=0.0, low_open=True)
        check_in_range(self.mu_gain, "mu_gain", low=0.0, low_open=True)
        check_in_range(self.max_iter, "max_iter", low=1)
        check_in_range(self.grad_tol, "grad_tol", low=0.0)
        check_in_range(self.mc_runs, "mc_runs", low=1)
        if self.horizon is not None:
            check_in_range(self.horizon, "horizon", low=1)

    def gains(self, n: int) -> tuple[float, float]:
        a_n = self.eps_gain / (n + 1 + self.varsigma) ** self.kappa
        c_n = self.mu_gain / (n + 1) ** self.upsilon
        return a_n, c_n


@dataclass(frozen=True, eq=False)
class SpsaResult:
    """Best iterate found by one search, with its per-iteration trace.

    ``trace`` columns: iteration, J at the plus probe, J at the minus probe,
    gradient-estimate norm.
    """

    parametrization: str
    phi: np.ndarray
    objective: float
    iterations: int
    converged: bool
    seed: int
    trace: np.ndarray = field(repr=False)

    @property
    def theta(self) -> np.ndarray:
        if self.parametrization != "threshold":
            raise ValidationError("theta is only defined for the threshold parametrization")
        return theta_from_phi(self.phi)

    def params(self):
        if self.parametrization == "threshold":
            return ThresholdParams.from_phi(self.phi)
        return SoftmaxParams(weights=self.phi)


def gradient_estimate(objective, phi, c_n, omega, seed_plus, seed_minus):
    """Two-sided difference along one +/-1 direction.

    Returns (gradient, J_plus, J_minus). For +/-1 entries the componentwise
    division by omega equals multiplication, so the whole direction shares
    one scalar difference quotient.
    """
    J_plus = objective(phi + c_n * omega, seed_plus)
    J_minus = objective(phi - c_n * omega, seed_minus)
    return (J_plus - J_minus) / (2.0 * c_n) * omega, J_plus, J_minus


def _make_objective(model: Model, parametrization: str, horizon: int, mc_runs: int):
    if parametrization == "threshold":

        def objective(phi, seed):
            theta = theta_from_phi(phi)
            return float(simulate_threshold_batch(model, theta, horizon, mc_runs, seed).mean())

    else:

        def objective(phi, seed):
            return float(simulate_softmax_batch(model, phi, horizon, mc_runs, seed).mean())

    return objective


def initial_phi(
    model: Model, parametrization: str, rng: np.random.Generator
) -> np.ndarray:
    """Random starting point in the shape the parametrization expects."""
    if parametrization == "threshold":
        return rng.uniform(0.25, 1.5, size=(model.L, model.S - 1))
    return rng.normal(0.0, 1.0, size=(model.L, 2, model.S - 1))


def train(
    model: Model,
    config: SpsaConfig | None = None,
    init_phi: np.ndarray | None = None,
    parametrization: str = "threshold",
    objective=None,
) -> SpsaResult:
    """Run one search from one starting point.

    Iterates until the gradient-estimate norm drops below ``grad_tol`` or
    ``max_iter`` iterations pass. The returned iterate is the one with the
    best objective under a fixed validation seed, not necessarily the last;
    simulation noise makes the final iterate a poor default. A custom
    ``objective(phi, seed) -> float`` replaces the simulated one, which is
    how deterministic surrogates are searched.
    """
    if parametrization not in PARAMETRIZATIONS:
        raise ValidationError(f"unknown parametrization {parametrization!r}")
    config = config or SpsaConfig()
    horizon = config.horizon if config.horizon is not None else default_horizon(model)
    if objective is None:
        objective = _make_objective(model, parametrization, horizon, config.mc_runs)

    root = np.random.SeedSequence(config.seed)
    omega_ss, sim_ss, val_ss, init_ss = root.spawn(4)
    omega_rng = np.random.default_rng(omega_ss)
    sim_seeds = sim_ss.generate_state(2 * config.max_iter, dtype=np.uint64)
    val_seed = val_ss.generate_state(1, dtype=np.uint64)[0]

    if init_phi is None:
        phi = initial_phi(model, parametrization, np.random.default_rng(init_ss))
    else:
        phi = np.array(init_phi, dtype=np.float64)
        expected = (model.L, model.S - 1) if parametrization == "threshold" else (
            model.L,
            2,
            model.S - 1,
        )
        if phi.shape != expected:
            raise ValidationError(f"init_phi must have shape {expected}, got {phi.shape}")

    best_phi = phi.copy()
    best_J = objective(phi, val_seed)
    trace = np.empty((config.max_iter, 4), dtype=np.float64)
    converged = False
    n_done = 0

    for n in range(config.max_iter):
        a_n, c_n = config.gains(n)
        omega = omega_rng.integers(0, 2, size=phi.shape) * 2 - 1
        seed_plus = sim_seeds[2 * n]
        seed_minus = seed_plus if config.common_random_numbers else sim_seeds[2 * n + 1]
        grad, J_plus, J_minus = gradient_estimate(
            objective, phi, c_n, omega, seed_plus, seed_minus
        )
        grad_norm = float(np.linalg.norm(grad))
        trace[n] = (n, J_plus, J_minus, grad_norm)
        n_done = n + 1

        phi = phi + a_n * grad
        J_val = objective(phi, val_seed)
        if J_val > best_J:
            best_J = J_val
            best_phi = phi.copy()

        if grad_norm <= config.grad_tol:
            converged = True
            break

    return SpsaResult(
        parametrization=parametrization,
        phi=best_phi,
        objective=float(best_J),
        iterations=n_done,
        converged=converged,
        seed=config.seed,
        trace=trace[:n_done].copy(),
    )


def train_multistart(
    model: Model,
    config: SpsaConfig | None = None,
    n_starts: int = 10,
    parametrization: str = "threshold",
    return_all: bool = False,
):
    """Repeat the search from independent random starts; keep the best.

    Start i runs with the i-th child seed of ``config.seed`` and a fresh
    random initial point. The finalists are then re-scored under one shared
    seed and a larger simulation batch, so the comparison across starts is
    not at the mercy of each start's own validation noise.
    """
    check_in_range(int(n_starts), "n_starts", low=1)
    config = config or SpsaConfig()
    root = np.random.SeedSequence(config.seed)
    start_seeds = root.generate_state(n_starts, dtype=np.uint64)
    results = [
        train(
            model,
            config=dataclasses.replace(config, seed=int(s)),
            parametrization=parametrization,
        )
        for s in start_seeds
    ]

    horizon = config.horizon if config.horizon is not None else default_horizon(model)
    objective = _make_objective(model, parametrization, horizon, 5 * config.mc_runs)
    shared_seed = root.spawn(1)[0].generate_state(1, dtype=np.uint64)[0]
    scores = [objective(r.phi, shared_seed) for r in results]
    rescored = [
        dataclasses.replace(r, objective=float(score))
        for r, score in zip(results, scores)
    ]
    best = max(rescored, key=lambda r: r.objective)
    if return_all:
        return best, rescored
    return best
