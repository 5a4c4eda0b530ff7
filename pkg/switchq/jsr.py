"""
Bounded-depth joint spectral radius brackets of a mode family

    lower_k = max rho(A_w)^(1/k)  <=  JSR  <=  max ||A_w||^(1/k)

together with extremal words, a periodic divergence witness, the
rescaling identity of regularized families and the drift constants behind
the closed-form regularized bounds.

Words are tuples of 0-based mode indices (w_1, ..., w_k) with
A_w = A_{w_k} ... A_{w_1}; lexicographic order on words equals the flat
order of the stacks produced by word_products.
"""

__copyright__ = "Copyright (C) 2026 switchq developers"

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np

from switchq.constants import (
    BRACKET_TOL,
    DEFAULT_JSR_DEPTH,
    ENUMERATION_CAP,
    PRODUCT_CAP,
)
from switchq.exceptions import (
    InvalidOverride,
    ProductCapExceeded,
    RepresentationDefect,
)
from switchq.mdp_model import Problem, enumerate_policies
from switchq.switching import build_family

logger = logging.getLogger(__name__)

Word = Tuple[int, ...]


def as_modes(family) -> np.ndarray:
    modes = np.asarray(getattr(family, "modes", family), dtype=float)
    if modes.ndim == 2:
        modes = modes[None, :, :]
    if modes.ndim != 3 or modes.shape[1] != modes.shape[2]:
        raise InvalidOverride(modes.shape, "modes must be square matrices")
    return modes


def product_count(n_modes: int, depth: int) -> int:
    """number of words of length 1..depth"""
    return sum(n_modes**k for k in range(1, depth + 1))


def extend(stack: np.ndarray, modes: np.ndarray) -> np.ndarray:
    """all one-letter extensions; entry prev * n + j is A_j @ stack[prev]"""
    m = modes.shape[1]
    return np.matmul(modes[None, :, :, :], stack[:, None, :, :]).reshape(
        -1, m, m
    )


def word_products(family, depth: int) -> Iterator[Tuple[int, np.ndarray]]:
    """
    yield (k, stack) for k = 1..depth where stack holds A_w for every word
    of length k in lexicographic order
    """
    modes = as_modes(family)
    stack = modes
    for k in range(1, depth + 1):
        if k > 1:
            stack = extend(stack, modes)
        yield k, stack


def decode_word(index: int, n_modes: int, length: int) -> Word:
    letters = []
    for _ in range(length):
        index, letter = divmod(index, n_modes)
        letters.append(letter)
    return tuple(reversed(letters))


def word_product(family, word: Word) -> np.ndarray:
    modes = as_modes(family)
    out = np.eye(modes.shape[1])
    for letter in word:
        out = modes[letter] @ out
    return out


def spectral_norms(stack: np.ndarray) -> np.ndarray:
    return np.linalg.norm(stack, ord=2, axis=(1, 2))


def spectral_radii(stack: np.ndarray) -> np.ndarray:
    return np.max(np.abs(np.linalg.eigvals(stack)), axis=1)


@dataclasses.dataclass(frozen=True)
class DepthBound:
    k: int
    upper: float
    lower: float
    exhaustive: bool
    word_upper: Word
    word_lower: Word
    products: int


@dataclasses.dataclass(frozen=True, eq=False)
class JsrBracket:
    per_depth: List[DepthBound]
    upper: float
    lower: float
    witness_upper: Word
    witness_lower: Word
    witness_lower_product: np.ndarray
    n_modes: int
    pruned: bool = False

    @property
    def pruned_depths(self) -> List[int]:
        return [row.k for row in self.per_depth if not row.exhaustive]

    def upper_at(self, k: int) -> float:
        return self.per_depth[k - 1].upper

    def to_dict(self) -> dict:
        def one_based(word):
            return [letter + 1 for letter in word]

        return {
            "n_modes": self.n_modes,
            "upper": self.upper,
            "lower": self.lower,
            "witness_upper": one_based(self.witness_upper),
            "witness_lower": one_based(self.witness_lower),
            "pruned_depths": self.pruned_depths,
            "per_depth": [
                {
                    "k": row.k,
                    "upper": row.upper,
                    "lower": row.lower,
                    "exhaustive": row.exhaustive,
                    "word_upper": one_based(row.word_upper),
                    "word_lower": one_based(row.word_lower),
                    "products": row.products,
                }
                for row in self.per_depth
            ],
        }


class _BranchDepth(NamedTuple):
    norm: float
    norm_at: int
    rho: float
    rho_at: int
    count: int
    exhaustive: bool


def _scan_branch(
    modes: np.ndarray,
    first: int,
    max_depth: int,
    prune: bool,
    floor: float,
    cap: int,
) -> List[_BranchDepth]:
    """
    per-depth extremes over the words starting with `first`; indices are
    positions in the branch's lexicographic order (or -1 when empty)
    """
    n = modes.shape[0]
    max_norm = float(np.max(spectral_norms(modes)))
    stack = modes[first][None, :, :]
    index = np.zeros(1, dtype=np.int64)
    exhaustive, best = True, floor
    rows = []
    for k in range(1, max_depth + 1):
        if k > 1:
            stack = extend(stack, modes)
            index = (index[:, None] * n + np.arange(n)[None, :]).ravel()
        if stack.shape[0] > cap:
            raise ProductCapExceeded(stack.shape[0], cap)
        if stack.shape[0] == 0:
            rows.append(_BranchDepth(-np.inf, -1, -np.inf, -1, 0, False))
            continue
        norms = spectral_norms(stack) ** (1.0 / k)
        rhos = spectral_radii(stack) ** (1.0 / k)
        i_norm, i_rho = int(np.argmax(norms)), int(np.argmax(rhos))
        rows.append(
            _BranchDepth(
                float(norms[i_norm]),
                int(index[i_norm]),
                float(rhos[i_rho]),
                int(index[i_rho]),
                stack.shape[0],
                exhaustive,
            )
        )
        best = max(best, float(rhos[i_rho]))
        if prune and k < max_depth:
            # best possible rho^(1/K) of any extension to length K
            raw = norms**k
            later = np.arange(k + 1, max_depth + 1)
            reach = (
                raw[:, None] * max_norm ** (later - k)[None, :]
            ) ** (1.0 / later[None, :])
            keep = np.any(reach >= best, axis=1)
            if not np.all(keep):
                exhaustive = False
                stack, index = stack[keep], index[keep]
    return rows


def _global_word(first: int, local: int, n: int, k: int) -> Word:
    if local < 0:
        return ()
    return decode_word(first * n ** (k - 1) + local, n, k)


def jsr_bracket(
    family,
    max_depth: int = DEFAULT_JSR_DEPTH,
    prune: bool = False,
    product_cap: int = PRODUCT_CAP,
    workers: int = 1,
) -> JsrBracket:
    """
    per-depth JSR bounds up to max_depth
    @param family: ModeFamily or an (n, m, m) array of modes
    @param prune: cut prefixes that cannot raise the lower bound; depths
    after the first cut are excluded from the upper bound
    @param workers: threads used over first-letter branches
    @return: JsrBracket
    """
    if max_depth < 1:
        raise InvalidOverride(max_depth, "bracket depth must be at least 1")
    modes = as_modes(family)
    n = modes.shape[0]
    total = product_count(n, max_depth)
    if not prune and total > product_cap:
        raise ProductCapExceeded(total, product_cap)

    floor = float(np.max(spectral_radii(modes)))

    def scan(first):
        return _scan_branch(modes, first, max_depth, prune, floor, product_cap)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            branches = list(pool.map(scan, range(n)))
    else:
        branches = [scan(first) for first in range(n)]

    per_depth = []
    for k in range(1, max_depth + 1):
        rows = [branch[k - 1] for branch in branches]
        # first maximum wins, so ties resolve to the smallest first letter
        b_norm = int(np.argmax([row.norm for row in rows]))
        b_rho = int(np.argmax([row.rho for row in rows]))
        per_depth.append(
            DepthBound(
                k=k,
                upper=rows[b_norm].norm,
                lower=rows[b_rho].rho,
                exhaustive=all(row.exhaustive for row in rows),
                word_upper=_global_word(b_norm, rows[b_norm].norm_at, n, k),
                word_lower=_global_word(b_rho, rows[b_rho].rho_at, n, k),
                products=sum(row.count for row in rows),
            )
        )
        logger.debug(
            "depth %d: upper %.6f lower %.6f",
            k,
            per_depth[-1].upper,
            per_depth[-1].lower,
        )

    kept = [row for row in per_depth if row.exhaustive]
    best_upper = min(kept, key=lambda row: row.upper)
    best_lower = max(per_depth, key=lambda row: row.lower)
    if len(kept) < len(per_depth):
        logger.warning(
            "pruned depths %s excluded from the upper bound",
            [row.k for row in per_depth if not row.exhaustive],
        )
    if best_lower.lower > best_upper.upper + BRACKET_TOL:
        raise RepresentationDefect(
            (best_lower.lower, best_upper.upper), "jsr bracket inverted"
        )
    logger.info(
        "jsr bracket [%.6f, %.6f] over %d modes, depth %d",
        best_lower.lower,
        best_upper.upper,
        n,
        max_depth,
    )
    return JsrBracket(
        per_depth=per_depth,
        upper=best_upper.upper,
        lower=best_lower.lower,
        witness_upper=best_upper.word_upper,
        witness_lower=best_lower.word_lower,
        witness_lower_product=word_product(modes, best_lower.word_lower),
        n_modes=n,
        pruned=prune,
    )


@dataclasses.dataclass(frozen=True, eq=False)
class DivergenceWitness:
    word: Word
    rho: float
    rate: float
    x0: np.ndarray
    product: np.ndarray

    def periodic_norms(self, periods: int) -> np.ndarray:
        """||A_w^r x0||_2 for r = 0..periods"""
        out = [float(np.linalg.norm(self.x0))]
        x = self.x0
        for _ in range(periods):
            x = self.product @ x
            out.append(float(np.linalg.norm(x)))
        return np.array(out)


def divergence_witness(bracket: JsrBracket) -> Optional[DivergenceWitness]:
    """
    a periodically switched trajectory that does not converge, available
    when the lower bound exceeds one
    """
    if bracket.lower <= 1.0:
        return None
    product = bracket.witness_lower_product
    eigvals, eigvecs = np.linalg.eig(product)
    lead = int(np.argmax(np.abs(eigvals)))
    vec = eigvecs[:, lead]
    x0 = np.real(vec)
    if np.linalg.norm(x0) < 1e-8:
        x0 = np.imag(vec)
    x0 = x0 / np.linalg.norm(x0)
    rho = float(np.abs(eigvals[lead]))
    word = bracket.witness_lower
    return DivergenceWitness(
        word=word,
        rho=rho,
        rate=rho ** (1.0 / len(word)),
        x0=x0,
        product=product,
    )


def drift_matrices(p: Problem, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """drift_pi = M - gamma N Pi^pi Phi for every deterministic policy"""
    policies = enumerate_policies(p, cap=cap)
    cache = p.projection
    S = p.n_states
    actions = np.array([pol.actions for pol in policies], dtype=int)
    chosen = p.features[actions * S + np.arange(S)[None, :]]
    return cache.M[None, :, :] - p.gamma * np.matmul(cache.N, chosen)


class DriftConstants(NamedTuple):
    c_Phi: float
    L_Phi: float
    L_Phi_eta: float
    eta: float


def drift_constants(
    p: Problem, eta: Optional[float] = None, cap: int = ENUMERATION_CAP
) -> DriftConstants:
    """
    c_Phi = min_pi lambda_min(sym(drift_pi)), L_Phi = max_pi ||drift_pi||,
    L_Phi_eta = max_pi ||drift_pi + eta I||
    """
    eta = p.eta if eta is None else float(eta)
    drifts = drift_matrices(p, cap=cap)
    sym = 0.5 * (drifts + np.transpose(drifts, (0, 2, 1)))
    c_phi = float(np.min(np.linalg.eigvalsh(sym)[:, 0]))
    L_phi = float(np.max(spectral_norms(drifts)))
    L_eta = float(
        np.max(spectral_norms(drifts + eta * np.eye(p.m)[None, :, :]))
    )
    return DriftConstants(c_phi, L_phi, L_eta, eta)


@dataclasses.dataclass(frozen=True)
class RescalingReport:
    alpha: float
    eta: float
    critical: bool
    alpha_bar: Optional[float]
    scale: float
    max_defect: float
    holds: bool
    upper_regularized: List[float]
    upper_rescaled: List[float]


def reg_rescaling_check(
    p: Problem,
    alpha: Optional[float] = None,
    eta: Optional[float] = None,
    depth: int = 2,
    tol: float = BRACKET_TOL,
) -> RescalingReport:
    """
    Compare every regularized product A^eta_w with (1 - alpha eta)^|w| B_w,
    B the direct family at step alpha / (1 - alpha eta). When alpha eta = 1
    the regularized modes are compared with -alpha drift_pi instead.
    """
    alpha = p.alpha if alpha is None else float(alpha)
    eta = p.eta if eta is None else float(eta)
    regularized = build_family(p, alpha=alpha, eta=eta)
    shrink = 1.0 - alpha * eta

    if abs(shrink) <= tol:
        target = -alpha * drift_matrices(p)
        diff = np.abs(regularized.modes - target)
        scale = max(1.0, float(np.max(np.abs(target))))
        defect = float(np.max(diff)) / scale
        norms = [float(np.max(spectral_norms(regularized.modes)))]
        return RescalingReport(
            alpha=alpha,
            eta=eta,
            critical=True,
            alpha_bar=None,
            scale=0.0,
            max_defect=defect,
            holds=defect <= tol,
            upper_regularized=norms,
            upper_rescaled=norms,
        )

    alpha_bar = alpha / shrink
    base = build_family(p, alpha=alpha_bar, eta=0.0)
    defect, upper_reg, upper_scaled = 0.0, [], []
    pairs = zip(word_products(regularized, depth), word_products(base, depth))
    for (k, reg_stack), (_, base_stack) in pairs:
        scaled = shrink**k * base_stack
        scale = max(1.0, float(np.max(np.abs(reg_stack))))
        defect = max(defect, float(np.max(np.abs(reg_stack - scaled))) / scale)
        upper_reg.append(
            float(np.max(spectral_norms(reg_stack))) ** (1.0 / k)
        )
        base_upper = float(np.max(spectral_norms(base_stack)))
        upper_scaled.append(abs(shrink) * base_upper ** (1.0 / k))
    return RescalingReport(
        alpha=alpha,
        eta=eta,
        critical=False,
        alpha_bar=alpha_bar,
        scale=abs(shrink),
        max_defect=defect,
        holds=defect <= tol,
        upper_regularized=upper_reg,
        upper_rescaled=upper_scaled,
    )


def _sqrt_clipped(radicand: float) -> Tuple[float, bool]:
    if radicand < 0.0:
        return 0.0, True
    return float(np.sqrt(radicand)), False


def _alpha_limit(c_plus_eta: float, denominator: float) -> float:
    if c_plus_eta <= 0.0 or denominator <= 0.0:
        return 0.0
    return 2.0 * c_plus_eta / denominator


@dataclasses.dataclass(frozen=True)
class RegBounds:
    """
    Euclidean contraction bounds for regularized modes. `restricted` is
    None when 0 <= alpha eta <= 1 fails.
    """

    alpha: float
    eta: float
    constants: DriftConstants
    restricted: Optional[float]
    restricted_expanded: Optional[float]
    all_eta: float
    conservative: float
    conditions: Dict[str, bool]
    alpha_limits: Dict[str, float]
    clipped: Dict[str, bool]

    @property
    def restricted_applicable(self) -> bool:
        return self.restricted is not None

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["constants"] = self.constants._asdict()
        out["restricted_applicable"] = self.restricted_applicable
        return out


def reg_euclidean_bounds(
    p: Problem,
    alpha: Optional[float] = None,
    eta: Optional[float] = None,
) -> RegBounds:
    alpha = p.alpha if alpha is None else float(alpha)
    eta = p.eta if eta is None else float(eta)
    const = drift_constants(p, eta)
    c, L, L_eta = const.c_Phi, const.L_Phi, const.L_Phi_eta
    a = alpha
    clipped = {}

    applicable = 0.0 <= a * eta <= 1.0
    restricted = expanded = None
    if applicable:
        shrink = 1.0 - a * eta
        restricted, clipped["restricted"] = _sqrt_clipped(
            shrink**2 - 2 * a * shrink * c + a**2 * L**2
        )
        expanded, _ = _sqrt_clipped(
            1 - 2 * a * (c + eta) + a**2 * (L**2 + 2 * c * eta + eta**2)
        )
    all_eta, clipped["all_eta"] = _sqrt_clipped(
        1 - 2 * a * (c + eta) + a**2 * L_eta**2
    )
    conservative, clipped["conservative"] = _sqrt_clipped(
        1 - 2 * a * (c + eta) + a**2 * (L + eta) ** 2
    )
    if any(clipped.values()):
        logger.warning("clipped negative radicands: %s", clipped)

    limits = {
        "restricted": _alpha_limit(c + eta, L**2 + 2 * c * eta + eta**2),
        "all_eta": _alpha_limit(c + eta, L_eta**2),
        "conservative": _alpha_limit(c + eta, (L + eta) ** 2),
    }
    conditions = {
        "restricted": applicable and 0.0 < a < limits["restricted"],
        "all_eta": 0.0 < a < limits["all_eta"],
        "conservative": 0.0 < a < limits["conservative"],
    }
    return RegBounds(
        alpha=alpha,
        eta=eta,
        constants=const,
        restricted=restricted,
        restricted_expanded=expanded,
        all_eta=all_eta,
        conservative=conservative,
        conditions=conditions,
        alpha_limits=limits,
        clipped=clipped,
    )
