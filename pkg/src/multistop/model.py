"""POMDP model definition, validation, and (de)serialization.

A model bundles the hidden Markov chain (transition matrix, observation law,
initial belief) with the control problem data: per-stop reward vectors, the
discount factor, and the stop budget. Observation laws are either an explicit
row-stochastic matrix or a Poisson count distribution with state-dependent
rates, discretized to a finite alphabet by lumping the upper tail into the
last bin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from ._validation import (
    ValidationError,
    as_float_array,
    check_belief,
    check_in_range,
    check_probability_vector,
    check_stochastic_matrix,
)

TAIL_MASS = 1e-6  # default per-state probability left in the lumped tail bin


@dataclass(frozen=True, eq=False)
class PoissonObservations:
    """Poisson count observations with one rate per state.

    ``y_max`` bounds the observed alphabet: counts y < y_max keep their exact
    pmf value and the last bin absorbs the entire upper tail, so each row of
    the discretized matrix sums to one exactly.
    """

    rates: np.ndarray
    y_max: int | None = None

    def __post_init__(self):
        rates = as_float_array(self.rates, "rates", ndim=1)
        if np.any(rates < 0):
            raise ValidationError("Poisson rates must be nonnegative")
        object.__setattr__(self, "rates", rates)
        if self.y_max is not None:
            check_in_range(int(self.y_max), "y_max", low=1)
            object.__setattr__(self, "y_max", int(self.y_max))

    @property
    def n_states(self) -> int:
        return self.rates.shape[0]


@dataclass(frozen=True, eq=False)
class ExplicitObservations:
    """Finite-alphabet observation law given directly as a row-stochastic matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "matrix", check_stochastic_matrix(self.matrix, "observation matrix")
        )

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]


ObservationLaw = PoissonObservations | ExplicitObservations


def default_y_max(rates, tail_mass: float = TAIL_MASS) -> int:
    """Smallest count bound at which every state's cdf reaches 1 - tail_mass."""
    rates = as_float_array(rates, "rates", ndim=1)
    y = 1
    while True:
        # cdf up to y-1 must cover the target mass for every rate
        if np.all(stats.poisson.cdf(y - 1, rates) >= 1.0 - tail_mass):
            return y
        y += 1


def discretize_observations(law: ObservationLaw, y_max: int | None = None) -> np.ndarray:
    """Materialize an observation law as an S x Y row-stochastic matrix.

    For Poisson laws, entry (i, y) is the pmf at y for y < y_max and the
    column y_max receives the full upper tail, so rows sum to one exactly.
    Explicit laws are returned as-is.
    """
    if isinstance(law, ExplicitObservations):
        return law.matrix
    if y_max is None:
        y_max = law.y_max if law.y_max is not None else default_y_max(law.rates)
    y_max = int(check_in_range(int(y_max), "y_max", low=1))
    rates = law.rates
    counts = np.arange(y_max)
    B = stats.poisson.pmf(counts[None, :], rates[:, None])
    tail = 1.0 - B.sum(axis=1)
    # exact row normalization under tail lumping
    np.clip(tail, 0.0, None, out=tail)
    return np.hstack([B, tail[:, None]])


@dataclass(frozen=True, eq=False)
class Model:
    """Validated multiple-stopping POMDP parameter set.

    Attributes
    ----------
    P : (S, S) row-stochastic transition matrix.
    obs : observation law (explicit matrix or Poisson rates).
    rewards : (L, S) array; ``rewards[l-1]`` is the stop reward collected when
        l stops remain, so a trajectory's first stop pays ``rewards[L-1]``.
        The continue reward is fixed at zero.
    rho : discount factor in [0, 1].
    L : stop budget (>= 1).
    pi0 : initial belief on the simplex.
    continue_penalty : optional strictly negative per-step floor on the
        continue reward, required only to bound undiscounted (rho = 1) runs.
    """

    P: np.ndarray
    obs: ObservationLaw
    rewards: np.ndarray
    rho: float
    L: int
    pi0: np.ndarray
    continue_penalty: float | None = None
    B: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = check_stochastic_matrix(self.P, "transition matrix")
        S = P.shape[0]
        if P.shape[1] != S or S < 2:
            raise ValidationError(f"transition matrix must be square with S >= 2, got {P.shape}")
        if self.obs.n_states != S:
            raise ValidationError(
                f"observation law has {self.obs.n_states} states, transition matrix has {S}"
            )
        L = int(self.L)
        check_in_range(L, "stop budget L", low=1)
        rewards = as_float_array(self.rewards, "rewards")
        if rewards.ndim == 1:
            rewards = np.tile(rewards, (L, 1))
        if rewards.shape != (L, S):
            raise ValidationError(
                f"rewards must have shape ({L}, {S}) or ({S},), got {rewards.shape}"
            )
        rho = float(self.rho)
        check_in_range(rho, "discount rho", low=0.0, high=1.0)
        if rho == 1.0:
            if rewards.max() <= 0:
                raise ValidationError("rho = 1 requires a positive maximum stop reward")
            if self.continue_penalty is None or self.continue_penalty >= 0:
                raise ValidationError(
                    "rho = 1 requires a strictly negative continue_penalty to bound run length"
                )
        pi0 = check_belief(self.pi0, S=S, tol=1e-12)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "pi0", pi0)
        object.__setattr__(self, "B", discretize_observations(self.obs))

    @property
    def S(self) -> int:
        return self.P.shape[0]

    @property
    def Y(self) -> int:
        """Size of the (discretized) observation alphabet."""
        return self.B.shape[1]

    def with_(self, **changes) -> "Model":
        """Return a copy with the given fields replaced."""
        kwargs = dict(
            P=self.P,
            obs=self.obs,
            rewards=self.rewards,
            rho=self.rho,
            L=self.L,
            pi0=self.pi0,
            continue_penalty=self.continue_penalty,
        )
        kwargs.update(changes)
        return Model(**kwargs)


def model_from_dict(doc: dict) -> Model:
    """Build a Model from the documented file format (see load_model)."""
    try:
        S = int(doc["states"])
        transition = doc["transition"]
        observation = doc["observation"]
        rewards = doc["rewards"]
        discount = doc["discount"]
        stops = int(doc["stops"])
        initial_belief = doc["initial_belief"]
    except KeyError as exc:
        raise ValidationError(f"model file is missing required key {exc}") from None

    P = as_float_array(transition, "transition")
    if P.ndim == 1:
        if P.size != S * S:
            raise ValidationError(f"row-major transition needs {S * S} numbers, got {P.size}")
        P = P.reshape(S, S)
    if P.shape != (S, S):
        raise ValidationError(f"transition has shape {P.shape}, expected ({S}, {S})")

    if not isinstance(observation, dict) or len(observation) != 1:
        raise ValidationError('observation must be {"poisson": {...}} or {"explicit": {...}}')
    (kind, params), = observation.items()
    if kind == "poisson":
        obs = PoissonObservations(
            rates=params["rates"], y_max=params.get("y_max")
        )
    elif kind == "explicit":
        obs = ExplicitObservations(matrix=params["matrix"])
    else:
        raise ValidationError(f"unknown observation kind {kind!r}")

    rew = as_float_array(rewards, "rewards")
    penalty = doc.get("continue_penalty")
    return Model(
        P=P,
        obs=obs,
        rewards=rew,
        rho=float(discount),
        L=stops,
        pi0=as_float_array(initial_belief, "initial_belief", ndim=1),
        continue_penalty=None if penalty is None else float(penalty),
    )


def model_to_dict(model: Model) -> dict:
    """Serialize a Model to the documented file format (plain decimal JSON types)."""
    if isinstance(model.obs, PoissonObservations):
        observation = {"poisson": {"rates": model.obs.rates.tolist()}}
        if model.obs.y_max is not None:
            observation["poisson"]["y_max"] = model.obs.y_max
    else:
        observation = {"explicit": {"matrix": model.obs.matrix.tolist()}}
    doc = {
        "states": model.S,
        "transition": model.P.tolist(),
        "observation": observation,
        "rewards": model.rewards.tolist(),
        "discount": model.rho,
        "stops": model.L,
        "initial_belief": model.pi0.tolist(),
    }
    if model.continue_penalty is not None:
        doc["continue_penalty"] = model.continue_penalty
    return doc


def _read_document(path: Path) -> dict:
    text = path.read_bytes()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            return tomllib.loads(text.decode("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"cannot parse {path} as TOML: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"cannot parse {path} as JSON: {exc}") from None


def load_model(path) -> Model:
    """Load and validate a model file (JSON, or TOML by .toml suffix).

    The document carries keys ``states``, ``transition`` (row-major),
    ``observation`` ({"poisson": {"rates": [...]}} or {"explicit":
    {"matrix": [...]}}), ``rewards`` (list of L vectors or one shared
    vector), ``discount``, ``stops``, ``initial_belief``. Unknown top-level
    keys are ignored so scenario files can extend the format.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"model file {path} does not exist")
    doc = _read_document(path)
    if not isinstance(doc, dict):
        raise ValidationError(f"model file {path} must contain a single object")
    return model_from_dict(doc)


def save_model(model: Model, path) -> None:
    """Write a model as JSON; load_model(save_model(m)) round-trips bit-exactly."""
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model), indent=2) + "\n")


def max_abs_reward(model: Model) -> float:
    """Largest absolute reward over all stop levels, states, and actions."""
    m = float(np.abs(model.rewards).max())
    if model.continue_penalty is not None:
        m = max(m, abs(model.continue_penalty))
    return m
