"""
Switching structure of linear Q-learning: the two-point linearization of
the max operator, policy-indexed mode matrices, mode families, convex-hull
weights and the exact pairwise representation
T(theta) - T(theta_bar) = A_mu (theta - theta_bar).
"""

__copyright__ = "Copyright (C) 2026 switchq developers"

import dataclasses
import logging
from typing import List, Optional

import numpy as np

from switchq.bellman import residual_g, value_max
from switchq.constants import (
    DEGENERATE_SPREAD_TOL,
    ENUMERATION_CAP,
    LINEARIZATION_TOL,
    PAIRWISE_TOL,
)
from switchq.exceptions import EnumerationCapExceeded, RepresentationDefect
from switchq.mdp_model import (
    DeterministicPolicy,
    Policy,
    Problem,
    StochasticPolicy,
    enumerate_policies,
    policy_selector_matrix,
)

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True, eq=False)
class ModeFamily:
    """
    modes[i] is the mode matrix of policies[i]; the order is the one of
    enumerate_policies
    """

    modes: np.ndarray
    policies: List[DeterministicPolicy]
    alpha: float
    eta: float
    gamma: float
    kind: str

    def __len__(self) -> int:
        return self.modes.shape[0]

    @property
    def dim(self) -> int:
        return self.modes.shape[1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.modes, ord=2, axis=(1, 2))

    def labels(self) -> List[str]:
        return [pol.label() for pol in self.policies]


@dataclasses.dataclass(frozen=True, eq=False)
class PairwiseWitness:
    mu: StochasticPolicy
    mode: np.ndarray
    residual: float


def linearize_max(
    p: Problem, theta: np.ndarray, theta_bar: np.ndarray
) -> StochasticPolicy:
    """
    Stochastic policy mu with V_theta - V_theta_bar = Pi^mu Phi (theta -
    theta_bar). Per state mu puts weight lambda_s on the first maximizer of
    e = Phi (theta - theta_bar) and the rest on the first minimizer.
    """
    theta = np.asarray(theta, dtype=float)
    theta_bar = np.asarray(theta_bar, dtype=float)
    S = p.n_states
    e = (p.features @ (theta - theta_bar)).reshape(p.n_actions, S).T
    y = value_max(p, theta).V - value_max(p, theta_bar).V

    rows_idx = np.arange(S)
    a_min = np.argmin(e, axis=1)
    a_max = np.argmax(e, axis=1)
    e_min = e[rows_idx, a_min]
    e_max = e[rows_idx, a_max]
    scale = 1.0 + float(np.max(np.abs(e)))
    spread = e_max - e_min
    live = spread > DEGENERATE_SPREAD_TOL * scale

    lam = np.zeros(S)
    lam[live] = (y[live] - e_min[live]) / spread[live]
    lam = np.clip(lam, 0.0, 1.0)

    rows = np.zeros((S, p.n_actions))
    np.add.at(rows, (rows_idx, a_min), 1.0 - lam)
    np.add.at(rows, (rows_idx, a_max), lam)

    mu = StochasticPolicy(rows)
    defect = float(
        np.max(np.abs(y - np.sum(rows * e, axis=1))) if S else 0.0
    )
    if defect > LINEARIZATION_TOL * scale:
        raise RepresentationDefect(defect, "max linearization defect")
    return mu


def mode_matrix(
    p: Problem,
    pol: Policy,
    alpha: Optional[float] = None,
    eta: Optional[float] = None,
) -> np.ndarray:
    """A_mu = I - alpha M + alpha gamma N Pi^mu Phi - alpha eta I"""
    alpha = p.alpha if alpha is None else alpha
    eta = p.eta if eta is None else eta
    cache = p.projection
    selector = policy_selector_matrix(pol)
    return (
        (1.0 - alpha * eta) * np.eye(p.m)
        - alpha * cache.M
        + alpha * p.gamma * (cache.N @ selector @ p.features)
    )


def build_family(
    p: Problem,
    alpha: Optional[float] = None,
    eta: Optional[float] = None,
    cap: int = ENUMERATION_CAP,
) -> ModeFamily:
    """
    mode matrices of every deterministic policy
    @param eta: 0 builds the direct family, eta > 0 the regularized one
    """
    alpha = p.alpha if alpha is None else float(alpha)
    eta = p.eta if eta is None else float(eta)
    policies = enumerate_policies(p, cap=cap)
    cache = p.projection

    S = p.n_states
    actions = np.array([pol.actions for pol in policies], dtype=int)
    # rows of Pi^pi Phi are the features of the chosen pairs
    chosen = p.features[actions * S + np.arange(S)[None, :]]
    base = (1.0 - alpha * eta) * np.eye(p.m) - alpha * cache.M
    modes = base[None, :, :] + alpha * p.gamma * np.matmul(cache.N, chosen)
    modes.flags.writeable = False

    kind = "regularized" if eta > 0 else "direct"
    logger.info(
        "built %s family with %d modes of size %d", kind, len(policies), p.m
    )
    return ModeFamily(
        modes=modes,
        policies=policies,
        alpha=alpha,
        eta=eta,
        gamma=p.gamma,
        kind=kind,
    )


def hull_weights(
    mu: StochasticPolicy, cap: int = ENUMERATION_CAP
) -> np.ndarray:
    """
    c_pi(mu) = prod_s mu(pi(s)|s), ordered like enumerate_policies
    """
    S, A = mu.rows.shape
    if A**S > cap:
        raise EnumerationCapExceeded(A**S, cap)
    weights = np.ones(1)
    for s in range(S):
        weights = np.outer(weights, mu.rows[s]).ravel()
    return weights


def mode_from_weights(family: ModeFamily, weights: np.ndarray) -> np.ndarray:
    """sum_pi c_pi A_pi"""
    return np.tensordot(np.asarray(weights, dtype=float), family.modes, 1)


def pairwise_mode(
    p: Problem,
    theta: np.ndarray,
    theta_bar: np.ndarray,
    alpha: Optional[float] = None,
    eta: Optional[float] = None,
) -> PairwiseWitness:
    """
    exact switched representation of one step of the (regularized)
    deterministic map between two parameters
    """
    alpha = p.alpha if alpha is None else alpha
    eta = p.eta if eta is None else eta
    theta = np.asarray(theta, dtype=float)
    theta_bar = np.asarray(theta_bar, dtype=float)

    def step(x):
        return x + alpha * residual_g(p, x) - alpha * eta * x

    mu = linearize_max(p, theta, theta_bar)
    mode = mode_matrix(p, mu, alpha=alpha, eta=eta)
    x = theta - theta_bar
    residual = float(
        np.linalg.norm(step(theta) - step(theta_bar) - mode @ x)
    )
    if residual > PAIRWISE_TOL * (1.0 + float(np.linalg.norm(x))):
        raise RepresentationDefect(residual, "pairwise representation defect")
    return PairwiseWitness(mu=mu, mode=mode, residual=residual)
