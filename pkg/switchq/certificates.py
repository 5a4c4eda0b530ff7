"""
Closed-form constants and per-step error envelopes for deterministic,
i.i.d. and Markovian linear Q-learning, plus exhaustive checks of the
noise growth inequalities they rest on.

Every envelope is the scalar recursion c(k+1) = lam c(k) + residual; for
lam < 1 it equals lam^k c(0) + residual (1 - lam^k) / (1 - lam).
"""

__copyright__ = "Copyright (C) 2026 switchq developers"

import dataclasses
import logging
from pathlib import Path
from typing import NamedTuple, Optional, Union

import numpy as np

from switchq.bellman import (
    coordinate_bias,
    regularized_residual,
    sample_update,
    td_errors,
    transition_noise,
)
from switchq.exceptions import EnumerationCapExceeded, InvariantViolation
from switchq.lyapunov import LyapunovCert, lyap_norm
from switchq.mdp_model import Problem, expected_reward, feature_radius

logger = logging.getLogger(__name__)

KINDS = ("deterministic", "iid", "markov")


@dataclasses.dataclass(frozen=True, eq=False)
class BoundInputs:
    beta_eps: float
    sqrt_C: float
    phi_max: float
    R_max: float
    gamma: float
    alpha: float
    theta_star: np.ndarray
    Q_star_inf: float
    delta_star_inf: float
    Phi_2: float
    estimate: bool = True

    def __post_init__(self):
        if not 0.0 < self.beta_eps < 1.0:
            raise InvariantViolation(
                self.beta_eps, "beta_eps must be in (0,1)"
            )
        scalars = (
            self.sqrt_C,
            self.phi_max,
            self.R_max,
            self.Q_star_inf,
            self.delta_star_inf,
            self.Phi_2,
        )
        if any(not v >= 0.0 for v in scalars):
            raise InvariantViolation(scalars, "bound inputs must be >= 0")


def bound_inputs(
    p: Problem, cert: LyapunovCert, theta_star: np.ndarray
) -> BoundInputs:
    theta_star = np.asarray(theta_star, dtype=float)
    radius = feature_radius(p)
    return BoundInputs(
        beta_eps=cert.beta_eps,
        sqrt_C=float(np.sqrt(cert.c_eps_upper)),
        phi_max=radius.phi_max,
        R_max=expected_reward(p).R_max,
        gamma=p.gamma,
        alpha=p.alpha,
        theta_star=theta_star,
        Q_star_inf=float(np.max(np.abs(p.features @ theta_star))),
        delta_star_inf=float(np.max(np.abs(td_errors(p, theta_star)))),
        Phi_2=radius.phi_2,
        estimate=cert.estimate,
    )


@dataclasses.dataclass(frozen=True, eq=False)
class Envelope:
    """
    bounds on E p(x_k) (p), E||x_k||_2 (euclid) and E||Phi x_k||_2 (q) for
    k = 0..k_max; applicable only when lam < 1
    """

    kind: str
    lam: float
    residual: float
    p: np.ndarray
    euclid: np.ndarray
    q: np.ndarray
    applicable: bool
    estimate: bool

    @property
    def limit(self) -> float:
        if self.lam >= 1.0:
            return float("inf")
        return self.residual / (1.0 - self.lam)

    @property
    def curve(self) -> np.ndarray:
        return self.p

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lambda": self.lam,
            "residual": self.residual,
            "limit": self.limit,
            "applicable": self.applicable,
            "estimate": self.estimate,
        }


def _recursion(lam: float, residual: float, start: float, k_max: int):
    out = np.empty(k_max + 1)
    out[0] = start
    with np.errstate(over="ignore"):
        for k in range(k_max):
            out[k + 1] = lam * out[k] + residual
    return out


def _envelope(kind, inputs, lam, residual, x0_p, k_max, x0_norm):
    x0_norm = x0_p if x0_norm is None else x0_norm
    euclid = _recursion(lam, residual, inputs.sqrt_C * x0_norm, k_max)
    applicable = lam < 1.0
    if not applicable:
        logger.warning(
            "%s envelope rate %.6f >= 1; the bound is valid but grows",
            kind,
            lam,
        )
    return Envelope(
        kind=kind,
        lam=float(lam),
        residual=float(residual),
        p=_recursion(lam, residual, x0_p, k_max),
        euclid=euclid,
        q=inputs.Phi_2 * euclid,
        applicable=applicable,
        estimate=inputs.estimate,
    )


def det_envelope(
    inputs: BoundInputs,
    x0_p: float,
    k_max: int,
    x0_norm: Optional[float] = None,
) -> Envelope:
    """
    beta^k p(x0), and sqrt(C) beta^k ||x0|| for the Euclidean error
    @param x0_norm: ||x0||_2; defaults to x0_p, itself an upper bound
    """
    return _envelope(
        "deterministic", inputs, inputs.beta_eps, 0.0, x0_p, k_max, x0_norm
    )


def iid_rate(inputs: BoundInputs) -> float:
    return inputs.beta_eps + 2.0 * inputs.alpha * inputs.sqrt_C * (
        1.0 + inputs.gamma
    ) * inputs.phi_max**2


def iid_envelope(
    inputs: BoundInputs,
    x0_p: float,
    k_max: int,
    x0_norm: Optional[float] = None,
) -> Envelope:
    residual = (
        2.0
        * inputs.alpha
        * inputs.sqrt_C
        * inputs.phi_max
        * (inputs.R_max + (1.0 + inputs.gamma) * inputs.Q_star_inf)
    )
    return _envelope(
        "iid", inputs, iid_rate(inputs), residual, x0_p, k_max, x0_norm
    )


def markov_envelope(
    inputs: BoundInputs,
    x0_p: float,
    k_max: int,
    x0_norm: Optional[float] = None,
) -> Envelope:
    lam = inputs.beta_eps + 2.0 * (iid_rate(inputs) - inputs.beta_eps)
    residual = (
        2.0
        * inputs.alpha
        * inputs.sqrt_C
        * inputs.phi_max
        * (
            inputs.R_max
            + (1.0 + inputs.gamma) * inputs.Q_star_inf
            + inputs.delta_star_inf
        )
    )
    return _envelope("markov", inputs, lam, residual, x0_p, k_max, x0_norm)


def envelope_for(
    kind: str,
    inputs: BoundInputs,
    x0_p: float,
    k_max: int,
    x0_norm: Optional[float] = None,
) -> Envelope:
    builders = {
        "deterministic": det_envelope,
        "iid": iid_envelope,
        "markov": markov_envelope,
    }
    return builders[kind](inputs, x0_p, k_max, x0_norm)


class InclusionConstants(NamedTuple):
    C: float
    rate: float


def inclusion_constants(cert: LyapunovCert) -> InclusionConstants:
    """
    ||A_{k-1} ... A_0 x|| <= C rate^k ||x|| for every product of matrices
    from the convex hull of the certified family
    """
    return InclusionConstants(float(np.sqrt(cert.c_eps_upper)), cert.beta_eps)


@dataclasses.dataclass(frozen=True, eq=False)
class NoiseGrowthReport:
    """
    exhaustive conditional expectations against the linear growth bounds;
    markov_lhs and markov_rhs are indexed by the visited pair
    """

    iid_lhs: float
    iid_rhs: float
    markov_lhs: np.ndarray
    markov_rhs: float
    mean_w_defect: float
    mean_xi_defect: float

    @property
    def iid_slack(self) -> float:
        return self.iid_rhs - self.iid_lhs

    @property
    def markov_slack(self) -> float:
        return float(self.markov_rhs - np.max(self.markov_lhs))

    @property
    def holds(self) -> bool:
        return self.iid_slack >= 0.0 and self.markov_slack >= 0.0


def noise_growth_check(
    p: Problem,
    cert: LyapunovCert,
    theta: np.ndarray,
    theta_star: np.ndarray,
    max_outcomes: int = 10**5,
) -> NoiseGrowthReport:
    """
    E[p(w) | theta] and E[p(b + xi) | X, theta] by finite summation over
    every (pair, successor) outcome, compared with their growth bounds
    """
    theta = np.asarray(theta, dtype=float)
    n_out = p.n_pairs * p.n_states
    if n_out > max_outcomes:
        raise EnumerationCapExceeded(n_out, max_outcomes)
    inputs = bound_inputs(p, cert, theta_star)
    c = inputs.sqrt_C
    p_x = float(lyap_norm(cert, theta - inputs.theta_star))
    base = (
        2.0
        * c
        * inputs.phi_max
        * (inputs.R_max + (1.0 + inputs.gamma) * inputs.Q_star_inf)
    )
    growth = 2.0 * c * (1.0 + inputs.gamma) * inputs.phi_max**2

    mean = regularized_residual(p, theta)
    iid_lhs, mean_w = 0.0, np.zeros(p.m)
    markov_lhs = np.zeros(p.n_pairs)
    mean_xi = 0.0
    for i in range(p.n_pairs):
        succ = np.flatnonzero(p.transition[i] > 0.0)
        probs = p.transition[i, succ]
        w = np.array(
            [sample_update(p, theta, i, s) - mean for s in succ]
        )
        noise = np.array([transition_noise(p, theta, i, s) for s in succ])
        bias = coordinate_bias(p, theta, i)
        iid_lhs += p.sampling[i] * float(probs @ lyap_norm(cert, w))
        mean_w += p.sampling[i] * (probs @ w)
        markov_lhs[i] = float(probs @ lyap_norm(cert, bias + noise))
        mean_xi = max(mean_xi, float(np.max(np.abs(probs @ noise))))

    report = NoiseGrowthReport(
        iid_lhs=iid_lhs,
        iid_rhs=base + growth * p_x,
        markov_lhs=markov_lhs,
        markov_rhs=base
        + 2.0 * c * inputs.phi_max * inputs.delta_star_inf
        + 2.0 * growth * p_x,
        mean_w_defect=float(np.max(np.abs(mean_w))),
        mean_xi_defect=mean_xi,
    )
    if not report.holds:
        logger.warning(
            "noise growth bound violated: iid slack %.3e markov slack %.3e",
            report.iid_slack,
            report.markov_slack,
        )
    return report


def write_envelope_csv(
    env: Envelope, path: Union[str, Path], config=None
) -> Path:
    from switchq.io import write_csv

    k = np.arange(env.p.shape[0])
    rows = np.column_stack([k, env.p, env.euclid, env.q])
    return write_csv(
        path,
        ["k", "p_bound", "euclid_bound", "q_bound"],
        rows,
        comments=[
            f"kind={env.kind} lambda={env.lam!r} residual={env.residual!r} "
            f"applicable={env.applicable} estimate={env.estimate}"
        ],
        config=config,
        integer_columns=1,
    )
