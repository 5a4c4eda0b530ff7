"""
Deterministic, i.i.d. and Markovian linear Q-learning runs.

Each step is checked against its exact decomposition:

    deterministic  theta+ = T(theta)
    iid            theta+ = T(theta) + alpha w
    markov         theta+ = T(theta) + alpha b + alpha xi

where T is the (regularized when eta > 0) deterministic map. With a known
fixed point the realized switching policy mu_k is recorded as well, and
x_{k+1} = A_{mu_k} x_k + noise is verified.
"""

__copyright__ = "Copyright (C) 2026 switchq developers"

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, NamedTuple, Optional

import numpy as np

from switchq.bellman import (
    coordinate_bias,
    regularized_residual,
    sample_update,
    solve_fixed_point,
    step_reg_dlq,
    transition_noise,
)
from switchq.certificates import Envelope, bound_inputs, envelope_for
from switchq.constants import DIVERGENCE_FACTOR, TRAJECTORY_TOL
from switchq.exceptions import InvalidOverride, RepresentationDefect
from switchq.lyapunov import LyapunovCert, lyap_norm
from switchq.mdp_model import (
    BehaviorModel,
    Problem,
    StochasticPolicy,
    markov_problem,
    stationary_distribution,
)
from switchq.rng import RngSpec, sample_index
from switchq.switching import linearize_max, mode_matrix

logger = logging.getLogger(__name__)

_KIND_ALIASES = {
    "det": "deterministic",
    "deterministic": "deterministic",
    "iid": "iid",
    "markov": "markov",
}


def normalize_kind(kind: str) -> str:
    try:
        return _KIND_ALIASES[kind]
    except KeyError:
        raise InvalidOverride(
            kind, f"kind must be one of {sorted(_KIND_ALIASES)}"
        )


@dataclasses.dataclass(eq=False)
class Trajectory:
    """
    thetas has K+1 rows; per-step records have K rows. noise_w is set for
    iid runs, xi and bias_b for markov runs, modes when theta_star is known.
    A diverged run of any kind ends with the offending iterate, so thetas
    has diverged_at + 1 rows; modes stop one step earlier.
    """

    thetas: np.ndarray
    kind: str
    variant: str
    seed: Optional[int] = None
    stream: Optional[int] = None
    theta_star: Optional[np.ndarray] = None
    modes: Optional[List[StochasticPolicy]] = None
    noise_w: Optional[np.ndarray] = None
    xi: Optional[np.ndarray] = None
    bias_b: Optional[np.ndarray] = None
    samples: Optional[np.ndarray] = None
    states: Optional[np.ndarray] = None
    status: str = "completed"
    diverged_at: Optional[int] = None

    @property
    def steps(self) -> int:
        return self.thetas.shape[0] - 1

    @property
    def errors(self) -> Optional[np.ndarray]:
        if self.theta_star is None:
            return None
        return np.linalg.norm(self.thetas - self.theta_star[None, :], axis=1)

    def mode_indices(self) -> Optional[List[Optional[int]]]:
        """0-based deterministic policy index per step, None if mixed"""
        if self.modes is None:
            return None
        return [mu.deterministic_index() for mu in self.modes]

    def lyap_values(self, cert: LyapunovCert) -> Optional[np.ndarray]:
        if self.theta_star is None:
            return None
        return lyap_norm(cert, self.thetas - self.theta_star[None, :])


class IidStep(NamedTuple):
    theta_next: np.ndarray
    sample: tuple
    w: np.ndarray


class MarkovStep(NamedTuple):
    theta_next: np.ndarray
    X_next: int
    s_next: int
    xi: np.ndarray
    bias: np.ndarray


def _variant(p: Problem) -> str:
    return "regularized" if p.eta > 0 else "plain"


def _check(defect: float, scale: float, what: str):
    if defect > TRAJECTORY_TOL * (1.0 + scale):
        raise RepresentationDefect(defect, f"{what} decomposition defect")


def _diverged(theta: np.ndarray, limit: float) -> bool:
    return not np.all(np.isfinite(theta)) or np.linalg.norm(theta) > limit


class _ModeRecorder:
    """records mu_k against theta_star and checks the switched recursion"""

    def __init__(self, p: Problem, theta_star: Optional[np.ndarray]):
        self.p = p
        if theta_star is not None:
            theta_star = np.asarray(theta_star, dtype=float).reshape(p.m)
        self.theta_star = theta_star
        self.modes = [] if theta_star is not None else None
        if theta_star is not None:
            self.fixed_image = step_reg_dlq(p, theta_star)

    def record(self, theta, theta_next, noise):
        if self.theta_star is None:
            return
        mu = linearize_max(self.p, theta, self.theta_star)
        x = theta - self.theta_star
        A = mode_matrix(self.p, mu)
        lhs = theta_next - self.fixed_image
        defect = float(np.linalg.norm(lhs - A @ x - self.p.alpha * noise))
        scale = float(np.linalg.norm(x) + np.linalg.norm(self.theta_star))
        _check(defect, scale, "switched error")
        self.modes.append(mu)


def run_deterministic(
    p: Problem,
    theta0: np.ndarray,
    steps: int,
    theta_star: Optional[np.ndarray] = None,
) -> Trajectory:
    """
    iterate the deterministic map (regularized when p.eta > 0); with
    theta_star the realized modes are recorded and replay-checked
    """
    if steps < 1:
        raise InvalidOverride(steps, "steps must be at least 1")
    theta = np.asarray(theta0, dtype=float).reshape(p.m)
    if theta_star is not None:
        theta_star = np.asarray(theta_star, dtype=float).reshape(p.m)
    limit = DIVERGENCE_FACTOR * (1.0 + float(np.linalg.norm(theta)))
    recorder = _ModeRecorder(p, theta_star)
    thetas = [theta]
    status, diverged_at = "completed", None
    zero = np.zeros(p.m)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            nxt = step_reg_dlq(p, theta)
            if _diverged(nxt, limit):
                thetas.append(nxt)
                status, diverged_at = "diverged", k + 1
                logger.warning("deterministic run diverged at step %d", k + 1)
                break
            recorder.record(theta, nxt, zero)
            thetas.append(nxt)
            theta = nxt
    return Trajectory(
        thetas=np.array(thetas),
        kind="deterministic",
        variant=_variant(p),
        theta_star=theta_star,
        modes=recorder.modes,
        status=status,
        diverged_at=diverged_at,
    )


def step_iid(p: Problem, theta: np.ndarray, rng) -> IidStep:
    """
    one i.i.d. update: (s, a) ~ d, s' ~ P(.|s, a)
    @param rng: numpy Generator for this step
    """
    theta = np.asarray(theta, dtype=float)
    u = rng.random(2)
    i = sample_index(p.sampling, u[0])
    s_next = sample_index(p.transition[i], u[1])
    g_hat = sample_update(p, theta, i, s_next)
    w = g_hat - regularized_residual(p, theta)
    theta_next = theta + p.alpha * g_hat
    defect = float(
        np.linalg.norm(theta_next - step_reg_dlq(p, theta) - p.alpha * w)
    )
    _check(defect, float(np.linalg.norm(theta)), "iid")
    return IidStep(theta_next, (i, s_next), w)


def step_markov(
    p: Problem, model: BehaviorModel, X: int, theta: np.ndarray, rng
) -> MarkovStep:
    """
    one single-trajectory update from the visited pair X: s' ~ P(.|X),
    a' ~ b(.|s'); D in the bias is the problem's sampling vector
    """
    theta = np.asarray(theta, dtype=float)
    u = rng.random(2)
    s_next = sample_index(p.transition[X], u[0])
    a_next = sample_index(model.behavior[s_next], u[1])
    X_next = p.pair_index(s_next, a_next)

    g_hat = sample_update(p, theta, X, s_next)
    theta_next = theta + p.alpha * g_hat
    xi = transition_noise(p, theta, X, s_next)
    bias = coordinate_bias(p, theta, X)
    defect = float(
        np.linalg.norm(
            theta_next
            - step_reg_dlq(p, theta)
            - p.alpha * bias
            - p.alpha * xi
        )
    )
    _check(defect, float(np.linalg.norm(theta)), "markov")
    return MarkovStep(theta_next, X_next, s_next, xi, bias)


def run_iid(
    p: Problem,
    theta0: np.ndarray,
    steps: int,
    rng: RngSpec,
    theta_star: Optional[np.ndarray] = None,
) -> Trajectory:
    if steps < 1:
        raise InvalidOverride(steps, "steps must be at least 1")
    theta = np.asarray(theta0, dtype=float).reshape(p.m)
    limit = DIVERGENCE_FACTOR * (1.0 + float(np.linalg.norm(theta)))
    recorder = _ModeRecorder(p, theta_star)
    thetas, noise, samples = [theta], [], []
    status, diverged_at = "completed", None
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            out = step_iid(p, theta, rng.generator(k))
            thetas.append(out.theta_next)
            noise.append(out.w)
            samples.append(out.sample)
            if _diverged(out.theta_next, limit):
                status, diverged_at = "diverged", k + 1
                logger.warning("iid run diverged at step %d", k + 1)
                break
            recorder.record(theta, out.theta_next, out.w)
            theta = out.theta_next
    return Trajectory(
        thetas=np.array(thetas),
        kind="iid",
        variant=_variant(p),
        seed=rng.seed,
        stream=rng.stream,
        theta_star=recorder.theta_star,
        modes=recorder.modes,
        noise_w=np.array(noise).reshape(-1, p.m),
        samples=np.array(samples, dtype=int).reshape(-1, 2),
        status=status,
        diverged_at=diverged_at,
    )


def run_markov(
    p: Problem,
    model: BehaviorModel,
    theta0: np.ndarray,
    steps: int,
    rng: RngSpec,
    theta_star: Optional[np.ndarray] = None,
    initial: Optional[np.ndarray] = None,
) -> Trajectory:
    """
    @param p: problem whose sampling vector is the chain's stationary law
    (see markov_problem)
    @param initial: distribution of the first visited pair, stationary by
    default
    """
    if steps < 1:
        raise InvalidOverride(steps, "steps must be at least 1")
    initial = model.stationary if initial is None else np.asarray(initial)
    theta = np.asarray(theta0, dtype=float).reshape(p.m)
    limit = DIVERGENCE_FACTOR * (1.0 + float(np.linalg.norm(theta)))
    recorder = _ModeRecorder(p, theta_star)
    X = sample_index(initial, rng.uniforms(0, 1, lane=1)[0])
    thetas, states, xis, biases = [theta], [X], [], []
    status, diverged_at = "completed", None
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            out = step_markov(p, model, X, theta, rng.generator(k))
            thetas.append(out.theta_next)
            states.append(out.X_next)
            xis.append(out.xi)
            biases.append(out.bias)
            if _diverged(out.theta_next, limit):
                status, diverged_at = "diverged", k + 1
                logger.warning("markov run diverged at step %d", k + 1)
                break
            recorder.record(theta, out.theta_next, out.bias + out.xi)
            theta, X = out.theta_next, out.X_next
    return Trajectory(
        thetas=np.array(thetas),
        kind="markov",
        variant=_variant(p),
        seed=rng.seed,
        stream=rng.stream,
        theta_star=recorder.theta_star,
        modes=recorder.modes,
        xi=np.array(xis).reshape(-1, p.m),
        bias_b=np.array(biases).reshape(-1, p.m),
        states=np.array(states, dtype=int),
        status=status,
        diverged_at=diverged_at,
    )


@dataclasses.dataclass(eq=False)
class EnsembleSummary:
    kind: str
    n_runs: int
    steps: int
    seed: int
    theta_star: Optional[np.ndarray]
    mean_err: Optional[np.ndarray]
    std_err: Optional[np.ndarray]
    mean_p: Optional[np.ndarray]
    envelope: Optional[Envelope]
    statuses: List[str]
    final_thetas: np.ndarray
    trajectories: Optional[List[Trajectory]] = None

    @property
    def diverged(self) -> int:
        return sum(status == "diverged" for status in self.statuses)

    def dominated(self, sigmas: float = 3.0) -> Optional[bool]:
        """mean error below the Euclidean envelope plus Monte Carlo slack"""
        if self.mean_err is None or self.envelope is None:
            return None
        slack = sigmas * self.std_err / np.sqrt(self.n_runs)
        return bool(np.all(self.mean_err - slack <= self.envelope.euclid))


def _padded(values: np.ndarray, length: int) -> np.ndarray:
    out = np.full(length, np.nan)
    out[: values.shape[0]] = values
    return out


def run_ensemble(
    p: Problem,
    kind: str,
    n_runs: int,
    steps: int,
    seed: int,
    cert: Optional[LyapunovCert] = None,
    theta_star: Optional[np.ndarray] = None,
    theta0: Optional[np.ndarray] = None,
    behavior: Optional[np.ndarray] = None,
    initial: Optional[np.ndarray] = None,
    workers: int = 1,
    keep_trajectories: bool = False,
) -> EnsembleSummary:
    """
    independent runs with per-step error statistics. Run r uses stream r of
    the seed. For kind markov the problem is re-weighted by the behavior
    chain's stationary distribution first. Without theta_star the fixed
    point is solved only when cert is a valid certificate; otherwise error
    recording is disabled.
    """
    kind = normalize_kind(kind)
    if n_runs < 1:
        raise InvalidOverride(n_runs, "n_runs must be at least 1")
    model = None
    if kind == "markov":
        model = stationary_distribution(p, behavior)
        p = markov_problem(p, model)

    theta0 = (
        np.zeros(p.m)
        if theta0 is None
        else np.asarray(theta0, dtype=float).reshape(p.m)
    )
    if theta_star is None and cert is not None and cert.valid:
        report = solve_fixed_point(
            p,
            map="reg_dlq" if p.eta > 0 else "dlq",
            tol=1e-12,
            certificate=cert,
        )
        if report.converged:
            theta_star = report.theta_star
    if theta_star is not None:
        theta_star = np.asarray(theta_star, dtype=float).reshape(p.m)
    else:
        logger.info("no certified fixed point: error recording disabled")

    spec = RngSpec(seed)

    def one(run: int) -> Trajectory:
        if kind == "deterministic":
            return run_deterministic(p, theta0, steps, theta_star)
        if kind == "iid":
            return run_iid(p, theta0, steps, spec.for_run(run), theta_star)
        return run_markov(
            p, model, theta0, steps, spec.for_run(run), theta_star, initial
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(one, range(n_runs)))
    else:
        runs = [one(run) for run in range(n_runs)]

    mean_err = std_err = mean_p = envelope = None
    if theta_star is not None:
        errors = np.stack([_padded(t.errors, steps + 1) for t in runs])
        mean_err = np.mean(errors, axis=0)
        std_err = np.std(errors, axis=0)
        if cert is not None:
            values = np.stack(
                [_padded(t.lyap_values(cert), steps + 1) for t in runs]
            )
            mean_p = np.mean(values, axis=0)
            envelope = envelope_for(
                kind,
                bound_inputs(p, cert, theta_star),
                float(lyap_norm(cert, theta0 - theta_star)),
                steps,
                x0_norm=float(np.linalg.norm(theta0 - theta_star)),
            )
    summary = EnsembleSummary(
        kind=kind,
        n_runs=n_runs,
        steps=steps,
        seed=seed,
        theta_star=theta_star,
        mean_err=mean_err,
        std_err=std_err,
        mean_p=mean_p,
        envelope=envelope,
        statuses=[t.status for t in runs],
        final_thetas=np.stack([t.thetas[-1] for t in runs]),
        trajectories=runs if keep_trajectories else None,
    )
    if summary.diverged:
        logger.warning("%d of %d runs diverged", summary.diverged, n_runs)
    return summary
