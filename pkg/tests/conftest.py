import numpy as np
import pytest

from multistop import ExplicitObservations, Model, solve
from multistop.cli import load_scenario


@pytest.fixture(scope="session")
def eq16():
    """Three-state interest chain, Poisson counts, five stops."""
    return load_scenario("eq16").model


@pytest.fixture(scope="session")
def eq16_table(eq16):
    return solve(eq16)


@pytest.fixture(scope="session")
def eq16_nonmonotone():
    """Same chain with a hump-shaped reward; threshold structure breaks."""
    return load_scenario("eq16_ex2").model


@pytest.fixture(scope="session")
def eq16_two_rewards():
    """Two stops with different reward vectors; nesting breaks."""
    return load_scenario("eq16_ex3").model


@pytest.fixture(scope="session")
def periscope():
    return load_scenario("periscope_eq24")


def make_two_state(rho: float = 0.8, L: int = 2) -> Model:
    """Small chain where every quantity can be recomputed by hand.

    State 1 is the good state: sticky transitions, observations that lean
    toward the second symbol, and the larger reward.
    """
    return Model(
        P=np.array([[0.8, 0.2], [0.3, 0.7]]),
        obs=ExplicitObservations(np.array([[0.25, 0.75], [0.8, 0.2]])),
        rewards=np.array([1.0, 0.5]),
        rho=rho,
        L=L,
        pi0=np.array([0.5, 0.5]),
    )


@pytest.fixture
def two_state():
    return make_two_state()


@pytest.fixture
def rng():
    return np.random.default_rng(0)
