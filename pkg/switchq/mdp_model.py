"""finite MDP, features and sampling distributions"""

__copyright__ = "Copyright (C) 2026 switchq developers"

import dataclasses
import itertools
import json
import logging
from functools import cached_property
from pathlib import Path
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np

from switchq.constants import (
    EIGENVALUE_GAP_TOL,
    ENUMERATION_CAP,
    PROBABILITY_TOL,
    STATIONARY_RESIDUAL_TOL,
    ZERO_MASS_TOL,
)
from switchq.exceptions import (
    EnumerationCapExceeded,
    InvalidProblemFile,
    InvariantViolation,
    NonUniqueStationaryDistribution,
    ZeroMassStateAction,
)
from switchq.validate import (
    as_matrix,
    check_full_column_rank,
    check_open_unit,
    check_sampling,
    is_probability_rows,
)

logger = logging.getLogger(__name__)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class Problem:
    """
    A finite discounted MDP together with a linear feature map, a sampling
    distribution and the step-size / regularization scalars.

    All state-action indexed arrays use the action-block ordering: pair
    (s, a) has index a * n_states + s, so s varies fastest within a block.

    @param transition: (|S||A|, |S|) matrix, row (s, a) is P(.|s, a)
    @param reward: (|S||A|, |S|) matrix, entry r(s, a, s')
    @param features: (|S||A|, m) feature matrix Phi
    @param sampling: length |S||A| sampling distribution d
    @param behavior: optional (|S|, |A|) behavior policy b(a|s)
    """

    n_states: int
    n_actions: int
    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    alpha: float
    features: np.ndarray
    sampling: np.ndarray
    eta: float = 0.0
    behavior: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        S, A = int(self.n_states), int(self.n_actions)
        if S < 1 or A < 1:
            raise InvariantViolation(
                (S, A), "n_states and n_actions must be positive"
            )
        SA = S * A
        P = as_matrix(self.transition, "transition", (SA, S))
        bad = is_probability_rows(P)
        if bad is not None:
            s, a = bad % S, bad // S
            raise InvariantViolation(
                f"transition[{s}][{a}]",
                "transition row must be a probability vector",
            )
        reward = self.reward
        if np.ndim(reward) == 0:
            reward = np.full((SA, S), float(reward))
        reward = as_matrix(reward, "reward", (SA, S))
        features = as_matrix(self.features, "features", (SA, None))
        check_full_column_rank(features)
        d = as_matrix(self.sampling, "sampling", (SA,))
        check_sampling(d)
        behavior = self.behavior
        if behavior is not None:
            behavior = as_matrix(behavior, "behavior", (S, A))
            bad = is_probability_rows(behavior)
            if bad is not None:
                raise InvariantViolation(
                    f"behavior[{bad}]", "behavior row must lie in the simplex"
                )
            behavior = _readonly(behavior)
        if self.eta < 0:
            raise InvariantViolation(self.eta, "eta must be nonnegative")

        set_ = object.__setattr__
        set_(self, "n_states", S)
        set_(self, "n_actions", A)
        set_(self, "transition", _readonly(P))
        set_(self, "reward", _readonly(reward))
        set_(self, "features", _readonly(features))
        set_(self, "sampling", _readonly(d))
        set_(self, "behavior", behavior)
        set_(self, "gamma", check_open_unit(float(self.gamma), "gamma"))
        set_(self, "alpha", check_open_unit(float(self.alpha), "alpha"))
        set_(self, "eta", float(self.eta))

    @property
    def P(self) -> np.ndarray:
        return self.transition

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.sampling)

    @property
    def n_pairs(self) -> int:
        return self.n_states * self.n_actions

    @property
    def m(self) -> int:
        return self.features.shape[1]

    def pair_index(self, s: int, a: int) -> int:
        return a * self.n_states + s

    def pair_of(self, index: int) -> Tuple[int, int]:
        return index % self.n_states, index // self.n_states

    @cached_property
    def projection(self):
        from switchq.bellman import ProjectionCache

        return ProjectionCache.build(self)

    def replace(self, **changes) -> "Problem":
        """copy with some fields changed; the copy is validated again"""
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        S, A = self.n_states, self.n_actions

        def tensor(flat):
            return flat.reshape(A, S, S).transpose(1, 0, 2).tolist()

        doc = {
            "n_states": S,
            "n_actions": A,
            "transition": tensor(self.transition),
            "reward": tensor(self.reward),
            "gamma": self.gamma,
            "alpha": self.alpha,
            "eta": self.eta,
            "features": self.features.tolist(),
            "sampling": self.sampling.tolist(),
        }
        if self.behavior is not None:
            doc["behavior"] = self.behavior.tolist()
        if self.name:
            doc["name"] = self.name
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclasses.dataclass(frozen=True)
class DeterministicPolicy:
    """actions[s] is the (0-based) action chosen in state s"""

    actions: Tuple[int, ...]
    n_actions: int

    def __post_init__(self):
        if any(a < 0 or a >= self.n_actions for a in self.actions):
            raise InvariantViolation(
                self.actions, f"actions must lie in 0..{self.n_actions - 1}"
            )

    @property
    def rows(self) -> np.ndarray:
        return np.eye(self.n_actions)[list(self.actions)]

    def label(self) -> str:
        return "".join(str(a + 1) for a in self.actions)


@dataclasses.dataclass(frozen=True, eq=False)
class StochasticPolicy:
    """rows[s] is the action distribution mu(.|s)"""

    rows: np.ndarray

    def __post_init__(self):
        rows = as_matrix(self.rows, "policy", (None, None))
        bad = is_probability_rows(rows)
        if bad is not None:
            raise InvariantViolation(
                f"policy[{bad}]", "policy row must lie in the simplex"
            )
        object.__setattr__(self, "rows", _readonly(rows))

    def deterministic_index(self) -> Optional[int]:
        """position in enumerate_policies order when the policy is one-hot"""
        if not np.all((self.rows == 0.0) | (self.rows == 1.0)):
            return None
        A = self.rows.shape[1]
        index = 0
        for a in np.argmax(self.rows, axis=1):
            index = index * A + int(a)
        return index


Policy = Union[DeterministicPolicy, StochasticPolicy]


@dataclasses.dataclass(frozen=True, eq=False)
class BehaviorModel:
    behavior: np.ndarray
    kernel: np.ndarray
    stationary: np.ndarray


class RewardSummary(NamedTuple):
    R: np.ndarray
    R_max: float


class FeatureRadius(NamedTuple):
    phi_max: float
    phi_2: float


def problem_from_dict(doc: dict) -> Problem:
    try:
        S, A = int(doc["n_states"]), int(doc["n_actions"])

        def flatten(tensor, name):
            arr = as_matrix(tensor, name, (S, A, S))
            return arr.transpose(1, 0, 2).reshape(A * S, S)

        reward = doc.get("reward", 0.0)
        if np.ndim(reward) != 0:
            reward = flatten(reward, "reward")
        return Problem(
            n_states=S,
            n_actions=A,
            transition=flatten(doc["transition"], "transition"),
            reward=reward,
            gamma=float(doc["gamma"]),
            alpha=float(doc["alpha"]),
            features=doc["features"],
            sampling=doc["sampling"],
            eta=float(doc.get("eta", 0.0)),
            behavior=doc.get("behavior"),
            name=str(doc.get("name", "")),
        )
    except KeyError as e:
        raise InvalidProblemFile(e.args[0], "missing required field")
    except (TypeError, ValueError) as e:
        raise InvalidProblemFile(doc.get("name", "<problem>"), str(e))


def load_problem(source: Union[str, Path]) -> Problem:
    """
    load and validate a problem document
    @param source: path to a JSON file, or the JSON text itself
    @return: Problem
    """
    if isinstance(source, str) and source.lstrip().startswith("{"):
        text = source
    else:
        path = Path(source)
        if not path.exists():
            raise InvalidProblemFile(str(path), "problem file does not exist")
        text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InvalidProblemFile(str(source)[:60], f"invalid JSON: {e}")
    if not isinstance(doc, dict):
        raise InvalidProblemFile(str(source)[:60], "top level must be object")
    problem = problem_from_dict(doc)
    logger.info(
        "loaded problem %s: |S|=%d |A|=%d m=%d",
        problem.name or "<unnamed>",
        problem.n_states,
        problem.n_actions,
        problem.m,
    )
    return problem


def dump_problem(p: Problem, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(p.to_json() + "\n", encoding="utf-8")
    return path


def expected_reward(p: Problem) -> RewardSummary:
    R = np.sum(p.transition * p.reward, axis=1)
    R_max = float(np.max(np.abs(p.reward))) if p.reward.size else 0.0
    return RewardSummary(R, R_max)


def policy_count(p: Problem) -> int:
    return p.n_actions**p.n_states


def enumerate_policies(
    p: Problem, cap: int = ENUMERATION_CAP
) -> List[DeterministicPolicy]:
    """
    all deterministic stationary policies, lexicographic in (a_1, ..., a_|S|)
    """
    count = policy_count(p)
    if count > cap:
        raise EnumerationCapExceeded(count, cap)
    return [
        DeterministicPolicy(actions, p.n_actions)
        for actions in itertools.product(
            range(p.n_actions), repeat=p.n_states
        )
    ]


def policy_selector_matrix(pol: Policy) -> np.ndarray:
    """
    the |S| x |S||A| matrix whose row s is mu(s)^T kron e_s^T
    """
    rows = pol.rows
    return np.hstack([np.diag(rows[:, a]) for a in range(rows.shape[1])])


def uniform_behavior(p: Problem) -> np.ndarray:
    return np.full((p.n_states, p.n_actions), 1.0 / p.n_actions)


def behavior_kernel(p: Problem, behavior: np.ndarray) -> np.ndarray:
    """P^b((s',a')|(s,a)) = P(s'|s,a) b(a'|s'), in action-block order"""
    return np.hstack(
        [p.transition * behavior[:, a][None, :] for a in range(p.n_actions)]
    )


def stationary_distribution(
    p: Problem, behavior: Optional[np.ndarray] = None
) -> BehaviorModel:
    """
    stationary state-action distribution of the behavior-induced chain
    @param behavior: b(a|s) as an (|S|, |A|) array; defaults to the problem's
    behavior, or the uniform policy when the problem has none
    """
    if behavior is None:
        behavior = p.behavior if p.behavior is not None else (
            uniform_behavior(p)
        )
    behavior = as_matrix(behavior, "behavior", (p.n_states, p.n_actions))
    bad = is_probability_rows(behavior, PROBABILITY_TOL)
    if bad is not None:
        raise InvariantViolation(
            f"behavior[{bad}]", "behavior row must lie in the simplex"
        )
    kernel = behavior_kernel(p, behavior)

    eigvals, eigvecs = np.linalg.eig(kernel.T)
    order = np.argsort(-np.abs(eigvals), kind="stable")
    if eigvals.size > 1 and (
        abs(abs(eigvals[order[1]]) - 1.0) <= EIGENVALUE_GAP_TOL
    ):
        raise NonUniqueStationaryDistribution(
            f"|lambda_2|={abs(eigvals[order[1]]):.12f}"
        )
    d = np.real(eigvecs[:, order[0]])
    d = d / d.sum()
    # a few power steps polish the eigenvector to machine precision
    for _ in range(3):
        d = d @ kernel
        d = d / d.sum()

    low = np.flatnonzero(d <= ZERO_MASS_TOL)
    if low.size:
        s, a = p.pair_of(int(low[0]))
        raise ZeroMassStateAction(f"d({s + 1},{a + 1})={d[low[0]]:.3e}")
    residual = float(np.max(np.abs(d @ kernel - d)))
    if residual > STATIONARY_RESIDUAL_TOL:
        raise NonUniqueStationaryDistribution(
            f"residual {residual:.3e}", "stationary equation not satisfied"
        )
    return BehaviorModel(
        behavior=_readonly(behavior),
        kernel=_readonly(kernel),
        stationary=_readonly(d),
    )


def markov_problem(p: Problem, model: BehaviorModel) -> Problem:
    """the problem re-weighted by the behavior chain's stationary law"""
    return p.replace(sampling=model.stationary, behavior=model.behavior)


def feature_radius(p: Problem) -> FeatureRadius:
    phi_max = float(np.max(np.linalg.norm(p.features, axis=1)))
    phi_2 = float(np.linalg.norm(p.features, 2))
    return FeatureRadius(phi_max, phi_2)
