import numpy as np
import pytest

from switchq import presets
from switchq.bellman import value_max
from switchq.lyapunov import build_cert
from switchq.mdp_model import Problem
from switchq.switching import build_family


def random_problem(seed, S=3, A=2, m=3, gamma=0.9, alpha=0.1, eta=0.0):
    rng = np.random.default_rng(seed)
    return Problem(
        n_states=S,
        n_actions=A,
        transition=rng.dirichlet(np.ones(S), size=S * A),
        reward=rng.standard_normal((S * A, S)),
        gamma=gamma,
        alpha=alpha,
        features=rng.standard_normal((S * A, m)),
        sampling=rng.dirichlet(np.ones(S * A)),
        eta=eta,
    )


def random_problems(count, cond_max=1e4, **kwargs):
    """
    yield (seed, problem) for count seeded random problems, skipping draws
    whose Phi^T D Phi has condition number above cond_max
    """
    seed = 0
    while count > 0:
        p = random_problem(seed, **kwargs)
        M = p.features.T @ (p.sampling[:, None] * p.features)
        if np.linalg.cond(M) <= cond_max:
            yield seed, p
            count -= 1
        seed += 1


def with_fixed_point(base: Problem, seed=0):
    """
    same problem with a reward chosen so that theta_star solves the
    projected Bellman equation: R = Phi theta* - gamma P V* + (I - Pi_D) z
    """
    rng = np.random.default_rng(seed)
    theta_star = rng.standard_normal(base.m)
    z = rng.standard_normal(base.n_pairs)
    V = value_max(base, theta_star).V
    R = (
        base.features @ theta_star
        - base.gamma * (base.transition @ V)
        + (np.eye(base.n_pairs) - base.projection.Pi_D) @ z
    )
    reward = np.repeat(R[:, None], base.n_states, axis=1)
    return base.replace(reward=reward), theta_star


@pytest.fixture
def elq():
    return presets.load_preset("elq-converges")


@pytest.fixture
def pqvi():
    return presets.load_preset("pqvi-converges")


@pytest.fixture
def jsr_gt1():
    return presets.load_preset("example-jsr-gt1")


@pytest.fixture
def trajectory_example():
    return presets.load_preset("example-trajectory")


@pytest.fixture
def eta20():
    return presets.load_preset("example-eta20")


@pytest.fixture
def example3d():
    return presets.load_preset("example-3d")


@pytest.fixture
def family3d(example3d):
    return build_family(example3d)


@pytest.fixture
def cert3d(family3d):
    return build_cert(family3d, 0.975, 4)


@pytest.fixture
def fixed_point3d(example3d):
    return with_fixed_point(example3d, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
