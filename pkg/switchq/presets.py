"""named worked examples, usable wherever a problem file is accepted"""

__copyright__ = "Copyright (C) 2026 switchq developers"

import dataclasses
from typing import Callable, Optional, Tuple

import numpy as np

from switchq.exceptions import UnknownPreset
from switchq.mdp_model import Problem


@dataclasses.dataclass(frozen=True)
class Preset:
    name: str
    description: str
    builder: Callable[[], Problem]
    beta_eps: Optional[float] = None
    depth: int = 4
    theta0: Optional[Tuple[float, ...]] = None
    behavior: Optional[Tuple[Tuple[float, ...], ...]] = None

    def problem(self) -> Problem:
        return self.builder()


def _absorbing_pair(d, features, gamma, alpha, eta=0.0, name=""):
    """two states, one action, both moving to state 2"""
    return Problem(
        n_states=2,
        n_actions=1,
        transition=[[0.0, 1.0], [0.0, 1.0]],
        reward=0.0,
        gamma=gamma,
        alpha=alpha,
        features=np.array(features, dtype=float).reshape(2, 1),
        sampling=d,
        eta=eta,
        name=name,
    )


def _single_state(n_actions, d, features, gamma, alpha, eta=0.0, name=""):
    return Problem(
        n_states=1,
        n_actions=n_actions,
        transition=np.ones((n_actions, 1)),
        reward=0.0,
        gamma=gamma,
        alpha=alpha,
        features=np.array(features, dtype=float).reshape(n_actions, 1),
        sampling=d,
        eta=eta,
        name=name,
    )


def elq_converges(eta: float = 0.0, name="elq-converges") -> Problem:
    return _absorbing_pair(
        [0.99, 0.01], [1.0, -10.0], 0.9, 0.1, eta=eta, name=name
    )


def pqvi_converges(eta: float = 0.0, name="pqvi-converges") -> Problem:
    return _single_state(1, [1.0], [10.0], 0.9, 0.5, eta=eta, name=name)


def example_jsr_gt1() -> Problem:
    return _single_state(
        2, [0.9, 0.1], [1.0, -2.0], 0.9, 0.9, name="example-jsr-gt1"
    )


def example_trajectory() -> Problem:
    return _single_state(
        2, [0.9, 0.1], [1.0, -2.0], 0.5, 0.9, name="example-trajectory"
    )


def example_eta20() -> Problem:
    return _absorbing_pair(
        [0.9, 0.1], [1.0, 10.0], 0.9, 0.1, eta=20.0, name="example-eta20"
    )


_EXAMPLE_3D_P = [
    [0.7325, 0.0122, 0.2552],
    [0.6359, 0.2104, 0.1537],
    [0.5133, 0.1950, 0.2917],
    [0.4722, 0.0379, 0.4899],
    [0.0023, 0.8670, 0.1307],
    [0.7437, 0.0553, 0.2010],
]
_EXAMPLE_3D_D = [0.1595, 0.0199, 0.1480, 0.2228, 0.2155, 0.2343]
_EXAMPLE_3D_PHI = [
    [-0.0957, -0.3996, -0.5050],
    [0.0242, 0.1328, 0.1858],
    [0.7378, 0.4582, 0.0919],
    [-0.4882, 0.5305, 0.2531],
    [-0.2158, -0.1461, -0.2595],
    [0.4013, 0.5568, -0.7554],
]


def example_3d() -> Problem:
    """
    three states, two actions, three features, zero reward. The published
    four-digit data is rounded: rows of P are renormalized, and the 1e-4
    deficit of d is carried by pair (2, 1) so that d sums to one as given
    and the eight mode norms keep their published four digits.
    """
    P = np.array(_EXAMPLE_3D_P)
    return Problem(
        n_states=3,
        n_actions=2,
        transition=P / P.sum(axis=1, keepdims=True),
        reward=0.0,
        gamma=0.7965,
        alpha=0.9,
        features=_EXAMPLE_3D_PHI,
        sampling=_EXAMPLE_3D_D,
        name="example-3d",
    )


_PRESETS = (
    Preset(
        "elq-converges",
        "linear Q-learning reaches theta*=0 in one step while projected "
        "Q-VI diverges with multiplier -8.01/1.99",
        elq_converges,
        beta_eps=0.5,
        theta0=(1.0,),
    ),
    Preset(
        "pqvi-converges",
        "projected Q-VI contracts by 0.9 while linear Q-learning diverges "
        "with multiplier -4",
        pqvi_converges,
        theta0=(1.0,),
    ),
    Preset(
        "example-3d",
        "three-state two-action MDP with eight contractive modes "
        "(max norm 0.9678) and a three-dimensional norm ball",
        example_3d,
        beta_eps=0.975,
        depth=4,
        theta0=(1.0, 0.0, 0.0),
    ),
    Preset(
        "example-jsr-gt1",
        "modes 0.397 and -1.304: joint spectral radius above one yet the "
        "nonlinear recursion converges",
        example_jsr_gt1,
        theta0=(-2.0,),
    ),
    Preset(
        "reg-rpvi-converges",
        "regularized projected Q-VI contracts by 90/101 while regularized "
        "linear Q-learning diverges with multiplier -4.5",
        lambda: pqvi_converges(eta=1.0, name="reg-rpvi-converges"),
        theta0=(1.0,),
    ),
    Preset(
        "reg-dlq-converges",
        "regularized linear Q-learning contracts by -0.1 while regularized "
        "projected Q-VI diverges with multiplier -8.01/2.99",
        lambda: elq_converges(eta=1.0, name="reg-dlq-converges"),
        beta_eps=0.5,
        theta0=(1.0,),
    ),
    Preset(
        "example-eta20",
        "unregularized mode 1.62 stabilized to -0.38 by eta=20",
        example_eta20,
        beta_eps=0.5,
        theta0=(1.0,),
    ),
    Preset(
        "example-trajectory",
        "modes 0.145 and -0.8; from theta0=-2 the iterates are "
        "1.6, 0.232, 0.03364 with modes 2, 1, 1",
        example_trajectory,
        beta_eps=0.9,
        depth=4,
        theta0=(-2.0,),
        behavior=((0.9, 0.1),),
    ),
)

__presets__ = {preset.name: preset for preset in _PRESETS}


def get_preset(name: str) -> Preset:
    try:
        return __presets__[name]
    except KeyError:
        raise UnknownPreset(name, __presets__.keys())


def load_preset(name: str) -> Problem:
    return get_preset(name).problem()
