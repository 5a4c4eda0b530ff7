"""
Bellman and projection maps: greedy values, the projected Bellman residual,
deterministic linear Q-learning, projected Q-value iteration, their
regularized versions, and a plain fixed-point solver.
"""

__copyright__ = "Copyright (C) 2026 switchq developers"

import dataclasses
import logging
from typing import Callable, Dict, NamedTuple, Optional

import numpy as np

from switchq.constants import (
    DIVERGENCE_FACTOR,
    PAIRWISE_TOL,
    SOLVER_MAX_ITER,
    SOLVER_TOL,
)
from switchq.exceptions import InvalidOverride, SingularProjection
from switchq.mdp_model import Problem, expected_reward

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True, eq=False)
class ProjectionCache:
    """
    Matrices derived once per Problem.

    M = Phi^T D Phi, M_eta = M + eta I, K = Phi^T D, N = Phi^T D P,
    Pi_D the D-orthogonal projection and Gamma_eta its regularized version.
    R holds the expected reward so the maps do not recompute it.
    """

    M: np.ndarray
    M_eta: np.ndarray
    K: np.ndarray
    N: np.ndarray
    Pi_D: np.ndarray
    Gamma_eta: np.ndarray
    R: np.ndarray

    @classmethod
    def build(cls, p: Problem) -> "ProjectionCache":
        phi, d = p.features, p.sampling
        K = phi.T * d[None, :]
        M = K @ phi
        M = 0.5 * (M + M.T)
        lam_min = float(np.linalg.eigvalsh(M)[0])
        if lam_min <= 0.0:
            raise SingularProjection(f"lambda_min(Phi^T D Phi)={lam_min:.3e}")
        M_eta = M + p.eta * np.eye(p.m)
        Pi_D = phi @ np.linalg.solve(M, K)
        Gamma_eta = phi @ np.linalg.solve(M_eta, K)

        defect = float(np.max(np.abs(Pi_D @ Pi_D - Pi_D)))
        if defect > PAIRWISE_TOL * max(1.0, float(np.max(np.abs(Pi_D)))):
            raise SingularProjection(
                f"||Pi_D^2 - Pi_D||={defect:.3e}", "projection not idempotent"
            )
        return cls(
            M=M,
            M_eta=M_eta,
            K=K,
            N=K @ p.transition,
            Pi_D=Pi_D,
            Gamma_eta=Gamma_eta,
            R=expected_reward(p).R,
        )


class ValueMax(NamedTuple):
    V: np.ndarray
    argmax: np.ndarray


class SupContraction(NamedTuple):
    value: float
    contracts: bool


@dataclasses.dataclass(frozen=True, eq=False)
class FixedPointReport:
    theta_star: np.ndarray
    iterations: int
    final_residual: float
    certified: bool
    status: str = "converged"
    diverged_at: Optional[int] = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def q_table(p: Problem, theta: np.ndarray) -> np.ndarray:
    """Q_theta arranged as an (|S|, |A|) table"""
    q = p.features @ np.asarray(theta, dtype=float)
    return q.reshape(p.n_actions, p.n_states).T


def value_max(p: Problem, theta: np.ndarray) -> ValueMax:
    """
    greedy value V_theta(s) = max_a phi(s,a)^T theta
    @return: V and the lexicographically first maximizing action per state
    """
    q = q_table(p, theta)
    argmax = np.argmax(q, axis=1)
    return ValueMax(q[np.arange(p.n_states), argmax], argmax)


def _target(p: Problem, theta: np.ndarray) -> np.ndarray:
    """R + gamma P V_theta"""
    cache = p.projection
    return cache.R + p.gamma * (p.transition @ value_max(p, theta).V)


def residual_g(p: Problem, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return p.projection.K @ (_target(p, theta) - p.features @ theta)


def regularized_residual(p: Problem, theta: np.ndarray) -> np.ndarray:
    """g(theta) - eta theta; its zeros are the regularized fixed points"""
    theta = np.asarray(theta, dtype=float)
    return residual_g(p, theta) - p.eta * theta


def projected_residual(p: Problem, theta: np.ndarray) -> float:
    """||Phi theta - Pi_D (R + gamma P V_theta)||_2"""
    theta = np.asarray(theta, dtype=float)
    target = p.projection.Pi_D @ _target(p, theta)
    return float(np.linalg.norm(p.features @ theta - target))


def step_dlq(p: Problem, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return theta + p.alpha * residual_g(p, theta)


def step_pqvi(p: Problem, theta: np.ndarray) -> np.ndarray:
    cache = p.projection
    return np.linalg.solve(cache.M, cache.K @ _target(p, theta))


def step_reg_dlq(p: Problem, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return step_dlq(p, theta) - p.alpha * p.eta * theta


def step_rpvi(p: Problem, theta: np.ndarray) -> np.ndarray:
    cache = p.projection
    try:
        return np.linalg.solve(cache.M_eta, cache.K @ _target(p, theta))
    except np.linalg.LinAlgError:
        raise SingularProjection("Phi^T D Phi + eta I")


def rpvi_sup_contraction(p: Problem) -> SupContraction:
    """
    gamma ||Gamma_eta P||_inf, a sufficient condition for the regularized
    projected Q-VI to contract in the sup norm
    """
    gp = p.projection.Gamma_eta @ p.transition
    value = p.gamma * float(np.max(np.sum(np.abs(gp), axis=1)))
    return SupContraction(value, value < 1.0)


def sample_update(
    p: Problem, theta: np.ndarray, index: int, s_next: int
) -> np.ndarray:
    """
    one-sample direction phi(x)(r + gamma max_a phi(s',a)^T theta
    - phi(x)^T theta) - eta theta for the pair x = index and successor s'
    """
    theta = np.asarray(theta, dtype=float)
    phi_x = p.features[index]
    next_q = p.features[p.n_states * np.arange(p.n_actions) + s_next] @ theta
    td = (
        p.reward[index, s_next]
        + p.gamma * float(np.max(next_q))
        - float(phi_x @ theta)
    )
    return phi_x * td - p.eta * theta


def td_errors(p: Problem, theta: np.ndarray) -> np.ndarray:
    """delta(theta) = R + gamma P V_theta - Phi theta"""
    theta = np.asarray(theta, dtype=float)
    return _target(p, theta) - p.features @ theta


def coordinate_bias(p: Problem, theta: np.ndarray, index: int) -> np.ndarray:
    """b = Phi^T (e_x e_x^T - D) delta(theta) for the visited pair x"""
    delta = td_errors(p, theta)
    return p.features[index] * delta[index] - p.projection.K @ delta


def transition_noise(
    p: Problem, theta: np.ndarray, index: int, s_next: int
) -> np.ndarray:
    """xi = phi(x)(r + gamma V_theta(s') - R(x) - gamma (P V_theta)(x))"""
    V = value_max(p, theta).V
    expected = p.projection.R[index] + p.gamma * float(p.transition[index] @ V)
    realized = p.reward[index, s_next] + p.gamma * V[s_next]
    return p.features[index] * (realized - expected)


_MAPS: Dict[str, Callable] = {
    "dlq": step_dlq,
    "reg_dlq": step_reg_dlq,
    "pqvi": step_pqvi,
    "rpvi": step_rpvi,
}

_RESIDUALS: Dict[str, Callable] = {
    "dlq": residual_g,
    "pqvi": residual_g,
    "reg_dlq": regularized_residual,
    "rpvi": regularized_residual,
}


def _certifies(p: Problem, map: str, certificate) -> bool:
    """the certificate's modes are the switched family of this map"""
    from switchq.switching import build_family

    if map not in ("dlq", "reg_dlq"):
        return False
    family = build_family(p, eta=0.0 if map == "dlq" else p.eta)
    modes = np.asarray(certificate.modes, dtype=float)
    if modes.shape != family.modes.shape:
        logger.warning("certificate modes do not match the %s family", map)
        return False
    scale = max(1.0, float(np.max(np.abs(family.modes))))
    if float(np.max(np.abs(modes - family.modes))) > PAIRWISE_TOL * scale:
        logger.warning("certificate modes do not match the %s family", map)
        return False
    return True


def solve_fixed_point(
    p: Problem,
    map: str = "dlq",
    tol: float = SOLVER_TOL,
    max_iter: int = SOLVER_MAX_ITER,
    certificate=None,
    theta0: Optional[np.ndarray] = None,
) -> FixedPointReport:
    """
    plain fixed-point iteration of one of the deterministic maps
    @param map: dlq, reg_dlq, pqvi or rpvi
    @param certificate: optional LyapunovCert for the map's mode family;
    the report is certified only when it is valid with rate below one and
    its modes are the family of a dlq or reg_dlq map on this problem
    @return: FixedPointReport
    """
    if map not in _MAPS:
        raise InvalidOverride(map, f"map must be one of {sorted(_MAPS)}")
    if tol <= 0:
        raise InvalidOverride(tol, "solver tolerance must be positive")
    step, residual = _MAPS[map], _RESIDUALS[map]

    theta = (
        np.zeros(p.m)
        if theta0 is None
        else np.asarray(theta0, dtype=float).reshape(p.m)
    )
    limit = DIVERGENCE_FACTOR * (1.0 + float(np.linalg.norm(theta)))
    certified = bool(
        certificate is not None
        and getattr(certificate, "valid", False)
        and certificate.beta < 1.0
        and _certifies(p, map, certificate)
    )

    status, diverged_at, k = "max_iter", None, 0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, max_iter + 1):
            nxt = step(p, theta)
            if not np.all(np.isfinite(nxt)) or np.linalg.norm(nxt) > limit:
                theta, status, diverged_at = nxt, "diverged", k
                break
            delta = float(np.linalg.norm(nxt - theta))
            done = delta <= tol * (1.0 + float(np.linalg.norm(theta)))
            theta = nxt
            if done:
                status = "converged"
                break
        final = float(np.linalg.norm(residual(p, theta)))

    if status == "converged":
        logger.info(
            "%s converged after %d iterations, residual %.3e",
            map,
            k,
            final,
        )
    else:
        logger.warning("%s finished with status %s at step %d", map, status, k)
    return FixedPointReport(
        theta_star=theta,
        iterations=k,
        final_residual=final,
        certified=certified,
        status=status,
        diverged_at=diverged_at,
    )
