"""Hidden Markov belief recursion and chain/observation sampling.

All functions are pure; simulation callers own their RNG streams.
"""

from __future__ import annotations

import numpy as np

from ._validation import ValidationError
from .model import Model

# beliefs are renormalized every update; drift beyond this is a hard error
DRIFT_TOL = 1e-6


class ZeroLikelihoodError(ValueError):
    """The observation has probability zero under the predicted belief."""


def update(model: Model, pi: np.ndarray, y: int) -> tuple[np.ndarray, float]:
    """One Bayes filter step: prediction through P, correction by observation y.

    Returns the posterior belief and the observation likelihood
    sigma(pi, y) = 1' B_y P' pi. Raises ZeroLikelihoodError when the
    observation is impossible under the model.
    """
    pi = np.asarray(pi, dtype=np.float64)
    if not 0 <= y < model.Y:
        raise ValidationError(f"observation {y} outside alphabet of size {model.Y}")
    predicted = model.P.T @ pi
    numer = model.B[:, y] * predicted
    sigma = float(numer.sum())
    if sigma <= 0.0:
        raise ZeroLikelihoodError(f"observation {y} has zero likelihood")
    post = numer / sigma
    drift = abs(post.sum() - 1.0)
    if drift > DRIFT_TOL:
        raise ValidationError(f"belief drifted {drift:.3e} from the simplex")
    return post / post.sum(), sigma


def update_all(model: Model, pi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior beliefs and likelihoods for every observation at once.

    Returns (T, sigma): T has shape (Y, S) with row y the posterior after
    observing y (rows with sigma = 0 hold the predicted belief unchanged),
    and sigma has shape (Y,) summing to one.
    """
    predicted = model.P.T @ np.asarray(pi, dtype=np.float64)
    numer = model.B.T * predicted[None, :]
    sigma = numer.sum(axis=1)
    safe = np.where(sigma > 0.0, sigma, 1.0)
    post = numer / safe[:, None]
    post[sigma <= 0.0] = predicted
    return post, sigma


def sample_step(model: Model, x: int, rng: np.random.Generator) -> tuple[int, int]:
    """Advance the hidden chain one step and draw the matching observation."""
    x_next = int(rng.choice(model.S, p=model.P[x]))
    y = int(rng.choice(model.Y, p=model.B[x_next]))
    return x_next, y


def sample_initial_state(model: Model, rng: np.random.Generator) -> int:
    return int(rng.choice(model.S, p=model.pi0))
