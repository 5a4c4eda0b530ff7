"""
Truncated piecewise quadratic Lyapunov functions of a mode family

    V^t(x) = sum_{l=0}^{t} beta^(-2l) max_{|w|=l} ||A_w x||_2^2,
    p_t(x) = sqrt(V^t(x)),

the bound c_eps_upper with ||x|| <= p_T(x) <= sqrt(c_eps_upper) ||x||, the
drift inequalities behind the certified contraction and norm-ball meshes.
"""

__copyright__ = "Copyright (C) 2026 switchq developers"

import dataclasses
import logging
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Union

import numpy as np

from switchq.constants import (
    DEFAULT_LYAP_DEPTH,
    DEFAULT_RESOLUTION,
    DRIFT_TOL,
    MESH_TOL,
    PRODUCT_CAP,
)
from switchq.exceptions import (
    CertificateRefused,
    ProductCapExceeded,
    RepresentationDefect,
    UnsupportedDimension,
)
from switchq.jsr import (
    as_modes,
    product_count,
    spectral_norms,
    spectral_radii,
    word_products,
)
from switchq.mdp_model import StochasticPolicy
from switchq.switching import ModeFamily, hull_weights, mode_from_weights

logger = logging.getLogger(__name__)

# vectors times words evaluated per block
_CHUNK = 1 << 21


@dataclasses.dataclass(frozen=True, eq=False)
class LyapunovCert:
    """
    products[l] stacks A_w for every word of length l (products[0] is the
    identity). The tail part of c_eps_upper is an estimate.
    """

    beta_eps: float
    depth: int
    products: List[np.ndarray]
    c_eps_upper: float
    valid: bool
    head: float
    tail: float
    tail_rate: float
    tail_constant: float
    lower: float
    max_norms: List[float]
    family: Optional[ModeFamily] = None
    estimate: bool = True

    @property
    def beta(self) -> float:
        return self.beta_eps

    @property
    def modes(self) -> np.ndarray:
        return self.products[1]

    @property
    def dim(self) -> int:
        return self.products[0].shape[1]

    def to_dict(self) -> dict:
        return {
            "beta_eps": self.beta_eps,
            "depth": self.depth,
            "c_eps_upper": self.c_eps_upper,
            "valid": self.valid,
            "head": self.head,
            "tail": self.tail,
            "tail_rate": self.tail_rate,
            "tail_constant": self.tail_constant,
            "lower": self.lower,
            "max_norms": self.max_norms,
            "estimate": self.estimate,
        }


def build_cert(
    family,
    beta_eps: float,
    T: int = DEFAULT_LYAP_DEPTH,
    product_cap: int = PRODUCT_CAP,
    allow_invalid: bool = False,
) -> LyapunovCert:
    """
    build the depth-T certificate for decay rate beta_eps
    @param family: ModeFamily or an (n, m, m) array of modes
    @param allow_invalid: return a certificate flagged invalid instead of
    raising CertificateRefused
    @return: LyapunovCert
    """
    if T < 0:
        raise CertificateRefused(T, "truncation depth must be nonnegative")
    if not 0.0 < beta_eps < 1.0:
        raise CertificateRefused(beta_eps, "beta_eps must lie in (0, 1)")
    modes = as_modes(family)
    n, m = modes.shape[0], modes.shape[1]
    cached = max(T, 1)
    total = product_count(n, cached)
    if total > product_cap:
        raise ProductCapExceeded(total, product_cap)

    products = [np.eye(m)[None, :, :]]
    max_norms = [1.0]
    lower = 0.0
    for k, stack in word_products(modes, cached):
        products.append(stack)
        max_norms.append(float(np.max(spectral_norms(stack))))
        lower = max(lower, float(np.max(spectral_radii(stack))) ** (1.0 / k))
    lower_1 = float(np.max(spectral_radii(modes)))

    reasons = []
    if beta_eps <= lower_1:
        reasons.append(
            f"beta_eps {beta_eps} does not exceed the depth-1 lower bound "
            f"{lower_1:.6f}"
        )

    beta2 = beta_eps**2
    head = float(
        sum(max_norms[k] ** 2 / beta2**k for k in range(0, T + 1))
    )

    # longer products are bounded blockwise through the best depth j
    rates = [max_norms[k] ** (1.0 / k) for k in range(1, cached + 1)]
    j = int(np.argmin(rates)) + 1
    rate = max(rates[j - 1], lower)
    if rate == 0.0:
        constant, tail = 1.0, 0.0
    else:
        constant = max(max_norms[r] / rate**r for r in range(0, j))
        q = (rate / beta_eps) ** 2
        if q >= 1.0:
            tail = float("inf")
            reasons.append(
                f"tail rate {rate:.6f} does not fall below beta_eps"
            )
        else:
            tail = constant**2 * q ** (T + 1) / (1.0 - q)

    valid = not reasons and max_norms[1] < beta_eps
    if reasons and not allow_invalid:
        raise CertificateRefused(beta_eps, "; ".join(reasons))
    if not valid:
        logger.warning(
            "certificate for beta_eps=%s flagged invalid: %s",
            beta_eps,
            "; ".join(reasons) or "a mode norm reaches beta_eps",
        )
    else:
        logger.info(
            "certificate beta_eps=%s T=%d c_eps_upper=%.6f",
            beta_eps,
            T,
            head + tail,
        )
    return LyapunovCert(
        beta_eps=float(beta_eps),
        depth=int(T),
        products=products,
        c_eps_upper=head + tail,
        valid=valid,
        head=head,
        tail=tail,
        tail_rate=rate,
        tail_constant=constant,
        lower=lower,
        max_norms=max_norms,
        family=family if isinstance(family, ModeFamily) else None,
    )


def _max_sq_norm(stack: np.ndarray, X: np.ndarray) -> np.ndarray:
    """max over the stacked matrices of ||A x||^2, per row x of X"""
    n, m = stack.shape[0], stack.shape[1]
    step = max(1, _CHUNK // max(1, n * m))
    out = np.empty(X.shape[0])
    for lo in range(0, X.shape[0], step):
        block = np.einsum("wij,bj->bwi", stack, X[lo : lo + step])
        out[lo : lo + step] = np.max(np.sum(block**2, axis=2), axis=1)
    return out


def _terms(cert: LyapunovCert, X: np.ndarray, depth: int) -> np.ndarray:
    """(b, depth + 1) array of beta^(-2l) max ||A_w x||^2"""
    beta2 = cert.beta_eps**2
    cols = [np.sum(X**2, axis=1)]
    for k in range(1, depth + 1):
        cols.append(_max_sq_norm(cert.products[k], X) / beta2**k)
    return np.stack(cols, axis=1)


class LyapValue(NamedTuple):
    V: Union[float, np.ndarray]
    p: Union[float, np.ndarray]


def lyap_value(
    cert: LyapunovCert, x: np.ndarray, depth: Optional[int] = None
) -> LyapValue:
    """
    V^depth(x) and p_depth(x), depth defaulting to the certificate's T;
    x may be one vector or a stack of row vectors
    """
    depth = cert.depth if depth is None else depth
    if depth > len(cert.products) - 1:
        raise CertificateRefused(depth, "depth exceeds the cached products")
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    V = np.sum(_terms(cert, X, depth), axis=1)
    p = np.sqrt(V)
    if single:
        return LyapValue(float(V[0]), float(p[0]))
    return LyapValue(V, p)


def lyap_norm(cert: LyapunovCert, x: np.ndarray, depth: Optional[int] = None):
    return lyap_value(cert, x, depth).p


@dataclasses.dataclass(frozen=True)
class DriftReport:
    """
    violation counts of the drift (a), monotonicity (b), homogeneity (c)
    and sandwich (d) checks; contraction counts points where the same-depth
    inequality p_T(A_i x) <= beta p_T(x) fails for some mode
    """

    n_points: int
    violations: Dict[str, int]
    contraction_violations: int
    max_drift_gap: float

    @property
    def ok(self) -> bool:
        return not any(self.violations.values())

    @property
    def contraction_ok(self) -> bool:
        return self.contraction_violations == 0


def _drift_gaps(cert, images, X, terms_T):
    """V^{T-1}(y) - beta^2 (V^T(x) - ||x||^2), scaled by max(1, V^T(x))"""
    T = cert.depth
    V_T = np.sum(terms_T, axis=1)
    rhs = cert.beta_eps**2 * (V_T - terms_T[:, 0])
    lhs = np.sum(_terms(cert, images, T - 1), axis=1)
    return (lhs - rhs) / np.maximum(1.0, V_T)


def check_drift(cert: LyapunovCert, x: np.ndarray) -> DriftReport:
    T = cert.depth
    if T < 1:
        raise CertificateRefused(T, "drift check needs truncation depth >= 1")
    X = np.atleast_2d(np.asarray(x, dtype=float))
    terms = _terms(cert, X, T)
    V_T = np.sum(terms, axis=1)
    scale = np.maximum(1.0, V_T)
    sq = terms[:, 0]

    drift_bad = np.zeros(X.shape[0], dtype=bool)
    contraction_bad = np.zeros(X.shape[0], dtype=bool)
    max_gap = -np.inf
    p_T = np.sqrt(V_T)
    for mode in cert.modes:
        images = X @ mode.T
        gaps = _drift_gaps(cert, images, X, terms)
        drift_bad |= gaps > DRIFT_TOL
        max_gap = max(max_gap, float(np.max(gaps)))
        p_image = np.sqrt(np.sum(_terms(cert, images, T), axis=1))
        contraction_bad |= p_image > cert.beta_eps * p_T + DRIFT_TOL * np.sqrt(
            scale
        )

    partial = np.cumsum(terms, axis=1)
    monotone_bad = np.any(np.diff(partial, axis=1) < -DRIFT_TOL, axis=1)

    lam = 2.5
    V_scaled = np.sum(_terms(cert, lam * X, T), axis=1)
    homog_bad = np.abs(V_scaled - lam**2 * V_T) > 1e-12 * np.maximum(
        1.0, lam**2 * V_T
    )
    sandwich_bad = sq > V_T + DRIFT_TOL * scale

    report = DriftReport(
        n_points=X.shape[0],
        violations={
            "drift": int(np.sum(drift_bad)),
            "monotone": int(np.sum(monotone_bad)),
            "homogeneity": int(np.sum(homog_bad)),
            "sandwich": int(np.sum(sandwich_bad)),
        },
        contraction_violations=int(np.sum(contraction_bad)),
        max_drift_gap=max_gap,
    )
    if not report.ok:
        logger.warning("drift check violations: %s", report.violations)
    return report


@dataclasses.dataclass(frozen=True)
class StochasticDriftReport:
    n_points: int
    drift_violations: int
    convexity_violations: int
    max_drift_gap: float
    weight_sum: float

    @property
    def ok(self) -> bool:
        return self.drift_violations == 0 and self.convexity_violations == 0


def check_stochastic_mode_drift(
    cert: LyapunovCert, mu: StochasticPolicy, x: np.ndarray
) -> StochasticDriftReport:
    """
    drift inequality for the averaged mode A_mu = sum_pi c_pi(mu) A_pi, and
    the convexity bound V^{T-1}(A_mu x) <= sum_pi c_pi V^{T-1}(A_pi x)
    """
    T = cert.depth
    if T < 1:
        raise CertificateRefused(T, "drift check needs truncation depth >= 1")
    weights = hull_weights(mu)
    if weights.shape[0] != cert.modes.shape[0]:
        raise RepresentationDefect(
            weights.shape[0], "policy does not match the certificate's family"
        )
    A_mu = mode_from_weights(cert, weights)
    X = np.atleast_2d(np.asarray(x, dtype=float))
    terms = _terms(cert, X, T)
    V_T = np.sum(terms, axis=1)
    scale = np.maximum(1.0, V_T)

    images = X @ A_mu.T
    gaps = _drift_gaps(cert, images, X, terms)
    lhs = np.sum(_terms(cert, images, T - 1), axis=1)
    mixed = np.zeros(X.shape[0])
    for w, mode in zip(weights, cert.modes):
        if w > 0.0:
            mixed += w * np.sum(_terms(cert, X @ mode.T, T - 1), axis=1)
    return StochasticDriftReport(
        n_points=X.shape[0],
        drift_violations=int(np.sum(gaps > DRIFT_TOL)),
        convexity_violations=int(np.sum(lhs > mixed + DRIFT_TOL * scale)),
        max_drift_gap=float(np.max(gaps)),
        weight_sum=float(np.sum(weights)),
    )


@dataclasses.dataclass(frozen=True, eq=False)
class NormBallMesh:
    points: np.ndarray
    directions: np.ndarray
    kind: str
    beta_eps: float
    depth: int

    @property
    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)


def sphere_directions(
    m: int, resolution: int, radial_fallback: bool = False, seed: int = 0
):
    """unit directions: angle grid (m=2), lat-long grid (m=3) or random"""
    if m == 2:
        angles = np.linspace(0.0, 2 * np.pi, resolution, endpoint=False)
        return np.stack([np.cos(angles), np.sin(angles)], axis=1), "circle"
    if m == 3:
        polar = np.linspace(0.0, np.pi, resolution)
        azimuth = np.linspace(0.0, 2 * np.pi, resolution, endpoint=False)
        th, ph = np.meshgrid(polar, azimuth, indexing="ij")
        grid = np.stack(
            [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)],
            axis=-1,
        )
        return grid.reshape(-1, 3), "latlong"
    if not radial_fallback:
        raise UnsupportedDimension(m)
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((resolution**2, m))
    return raw / np.linalg.norm(raw, axis=1, keepdims=True), "radial"


def normball_mesh(
    cert: LyapunovCert,
    resolution: int = DEFAULT_RESOLUTION,
    radial_fallback: bool = False,
    seed: int = 0,
) -> NormBallMesh:
    """boundary points u / p_T(u) of the unit ball of p_T"""
    directions, kind = sphere_directions(
        cert.dim, resolution, radial_fallback, seed
    )
    radii = lyap_value(cert, directions).p
    points = directions / radii[:, None]
    check = lyap_value(cert, points).p
    defect = float(np.max(np.abs(check - 1.0)))
    if defect > MESH_TOL:
        raise RepresentationDefect(defect, "mesh points off the unit sphere")
    logger.info("norm ball mesh: %d %s points", points.shape[0], kind)
    return NormBallMesh(
        points=points,
        directions=directions,
        kind=kind,
        beta_eps=cert.beta_eps,
        depth=cert.depth,
    )


def write_mesh_csv(
    mesh: NormBallMesh, path: Union[str, Path], config=None
) -> Path:
    from switchq.io import write_csv

    columns = [f"x{i + 1}" for i in range(mesh.points.shape[1])]
    return write_csv(
        path,
        columns,
        mesh.points,
        comments=[f"beta={mesh.beta_eps!r} T={mesh.depth}"],
        config=config,
    )
