"""Console script for switchq."""

__copyright__ = "Copyright (C) 2026 switchq developers"

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from switchq.bellman import (
    rpvi_sup_contraction,
    solve_fixed_point,
    step_dlq,
    step_pqvi,
    step_reg_dlq,
    step_rpvi,
)
from switchq.certificates import (
    bound_inputs,
    envelope_for,
    inclusion_constants,
    write_envelope_csv,
)
from switchq.constants import (
    DEFAULT_DRIFT_POINTS,
    DEFAULT_JSR_DEPTH,
    DEFAULT_LYAP_DEPTH,
    DEFAULT_RESOLUTION,
    DEFAULT_RUNS,
    DEFAULT_SEED,
    DEFAULT_STEPS,
    EXIT_OK,
    LOG_FORMAT,
    LOG_LEVEL_ENV_VAR,
    OUT_DIR_ENV_VAR,
    SOLVER_TOL,
    TABLE_FLOAT_FORMAT,
)
from switchq.exceptions import (
    BaseError,
    CertificateRefused,
    DivergenceDetected,
    InvalidOverride,
    NonConvergence,
)
from switchq.io import read_config, write_csv, write_json
from switchq.jsr import (
    divergence_witness,
    jsr_bracket,
    reg_euclidean_bounds,
    reg_rescaling_check,
)
from switchq.lyapunov import (
    build_cert,
    check_drift,
    lyap_norm,
    normball_mesh,
    write_mesh_csv,
)
from switchq.mdp_model import (
    Problem,
    dump_problem,
    load_problem,
    markov_problem,
    stationary_distribution,
)
from switchq.presets import __presets__, get_preset
from switchq.simulate import normalize_kind, run_ensemble
from switchq.switching import build_family

logger = logging.getLogger(__name__)

COMMANDS = (
    "modes",
    "jsr",
    "lyap",
    "normball",
    "simulate",
    "certify",
    "regbounds",
    "presets",
)


@dataclasses.dataclass
class RunConfig:
    """resolved configuration of one run; out_dir is not serialized"""

    command: str
    problem: Optional[str] = None
    preset: Optional[str] = None
    alpha: Optional[float] = None
    eta: Optional[float] = None
    beta_eps: Optional[float] = None
    depth: Optional[int] = None
    jsr_depth: int = DEFAULT_JSR_DEPTH
    steps: int = DEFAULT_STEPS
    runs: int = DEFAULT_RUNS
    seed: int = DEFAULT_SEED
    theta0: Optional[Tuple[float, ...]] = None
    tol: float = SOLVER_TOL
    kind: str = "deterministic"
    resolution: int = DEFAULT_RESOLUTION
    radial_fallback: bool = False
    prune: bool = False
    points: int = DEFAULT_DRIFT_POINTS
    workers: int = 1
    out_dir: str = "."

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("out_dir")
        if self.theta0 is not None:
            out["theta0"] = list(self.theta0)
        return out

    @classmethod
    def from_dict(cls, doc: dict, **extra) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise InvalidOverride(sorted(unknown), "unknown config fields")
        values = dict(doc, **extra)
        if values.get("theta0") is not None:
            values["theta0"] = tuple(float(v) for v in values["theta0"])
        return cls(**values)


def parse_theta0(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"theta0 must be comma separated numbers, got {text!r}"
        )


def fmt(value: float) -> str:
    return TABLE_FLOAT_FORMAT.format(value)


class CLI(object):
    def __init__(self, custom_args: Optional[list] = None):
        self.custom_args = custom_args
        self.args = self.parse_args()
        self.config: Optional[RunConfig] = None

    def parse_args(self) -> argparse.Namespace:
        """
        function responsible for parsing terminal arguments into a
        namespace, one sub-parser per command
        """
        common = argparse.ArgumentParser(add_help=False)
        source = common.add_mutually_exclusive_group()
        source.add_argument("--problem", type=str, help="problem JSON file")
        source.add_argument(
            "--preset",
            type=str,
            help=f"named example, one of {sorted(__presets__)}",
        )
        common.add_argument("--alpha", type=float, help="step size")
        common.add_argument("--eta", type=float, help="regularization")
        common.add_argument("--beta-eps", type=float, help="decay rate")
        common.add_argument(
            "--depth", type=int, help="Lyapunov truncation depth T"
        )
        common.add_argument(
            "--jsr-depth", type=int, default=DEFAULT_JSR_DEPTH
        )
        common.add_argument("--steps", type=int, default=DEFAULT_STEPS)
        common.add_argument("--runs", type=int, default=DEFAULT_RUNS)
        common.add_argument("--seed", type=int, default=DEFAULT_SEED)
        common.add_argument(
            "--theta0", type=parse_theta0, help="comma separated vector"
        )
        common.add_argument("--tol", type=float, default=SOLVER_TOL)
        common.add_argument(
            "--kind",
            default="deterministic",
            choices=["det", "deterministic", "iid", "markov"],
        )
        common.add_argument(
            "--resolution", type=int, default=DEFAULT_RESOLUTION
        )
        common.add_argument(
            "--radial-fallback",
            action="store_true",
            help="random directions when the feature dimension is not 2 or 3",
        )
        common.add_argument(
            "--prune", action="store_true", help="prune the JSR search"
        )
        common.add_argument(
            "--points",
            type=int,
            default=DEFAULT_DRIFT_POINTS,
            help="random points for the drift check",
        )
        common.add_argument("--workers", type=int, default=1)
        common.add_argument(
            "--out",
            type=str,
            default=os.getenv(OUT_DIR_ENV_VAR, "."),
            help="output directory",
        )
        common.add_argument(
            "--replay", type=str, help="rerun the config embedded in a file"
        )
        common.add_argument(
            "--log-level",
            default=os.getenv(LOG_LEVEL_ENV_VAR, "WARNING"),
            help="logging level",
        )
        common.add_argument("--log-file", type=str, help="log to this file")

        parser = argparse.ArgumentParser(
            add_help=True,
            description="Switched-system analysis of linear Q-learning",
            usage="switchq <command> --help",
        )
        sub = parser.add_subparsers(dest="command", required=True)
        for command in COMMANDS:
            p = sub.add_parser(command, parents=[common])
            if command == "presets":
                p.add_argument(
                    "--export", type=str, help="write presets as problem files"
                )
        parsed_args = (
            parser.parse_args(self.custom_args)
            if self.custom_args
            else parser.parse_args()
        )
        return parsed_args

    def resolve_config(self) -> RunConfig:
        args = self.args
        if args.replay:
            doc = read_config(args.replay)
            return RunConfig.from_dict(doc, out_dir=args.out)
        return RunConfig(
            command=args.command,
            problem=args.problem,
            preset=args.preset,
            alpha=args.alpha,
            eta=args.eta,
            beta_eps=args.beta_eps,
            depth=args.depth,
            jsr_depth=args.jsr_depth,
            steps=args.steps,
            runs=args.runs,
            seed=args.seed,
            theta0=args.theta0,
            tol=args.tol,
            kind=normalize_kind(args.kind),
            resolution=args.resolution,
            radial_fallback=args.radial_fallback,
            prune=args.prune,
            points=args.points,
            workers=args.workers,
            out_dir=args.out,
        )

    # problem and derived objects

    def problem(self, with_alpha: bool = False) -> Problem:
        """
        the configured problem; eta overrides are applied, alpha only when
        with_alpha since the family commands accept alpha outside (0, 1)
        """
        cfg = self.config
        if cfg.problem:
            p = load_problem(cfg.problem)
        elif cfg.preset:
            p = get_preset(cfg.preset).problem()
        else:
            raise InvalidOverride(None, "one of --problem or --preset needed")
        changes = {}
        if cfg.eta is not None:
            changes["eta"] = cfg.eta
        if with_alpha and cfg.alpha is not None:
            changes["alpha"] = cfg.alpha
        return p.replace(**changes) if changes else p

    def preset_default(self, field: str):
        if self.config.preset:
            return getattr(get_preset(self.config.preset), field)
        return None

    def depth(self) -> int:
        if self.config.depth is not None:
            return self.config.depth
        return self.preset_default("depth") or DEFAULT_LYAP_DEPTH

    def theta0(self, p: Problem) -> np.ndarray:
        theta0 = self.config.theta0 or self.preset_default("theta0")
        if theta0 is None:
            return np.zeros(p.m)
        if len(theta0) != p.m:
            raise InvalidOverride(theta0, f"theta0 needs {p.m} entries")
        return np.array(theta0, dtype=float)

    def family(self, p: Problem):
        return build_family(p, alpha=self.config.alpha)

    def certificate(self, family):
        """
        certificate at the configured rate, the preset's rate, or halfway
        between the largest mode norm and one
        """
        beta = self.config.beta_eps
        if beta is None:
            beta = self.preset_default("beta_eps")
        if beta is None:
            top = float(np.max(family.norms()))
            if top >= 1.0:
                raise CertificateRefused(
                    top, "a mode norm reaches 1; pass --beta-eps explicitly"
                )
            beta = 0.5 * (top + 1.0)
            logger.info("using beta_eps=%s", beta)
        return build_cert(family, beta, self.depth())

    def out(self, name: str) -> Path:
        return Path(self.config.out_dir) / name

    # commands

    def cmd_modes(self) -> int:
        p = self.problem()
        family = self.family(p)
        norms = family.norms()
        rows = [
            (i + 1, pol.label(), norm)
            for i, (pol, norm) in enumerate(zip(family.policies, norms))
        ]
        write_csv(
            self.out("modes.csv"),
            ["policy", "actions", "norm"],
            rows,
            config=self.config,
            integer_columns=1,
        )
        print(f"{family.kind} modes of {p.name or 'problem'}")
        print("-" * 50)
        for index, label, norm in rows:
            print(f"{index:>4}  {label:>8}  {fmt(norm)}")
        print(f"max   {fmt(float(np.max(norms)))}")
        return EXIT_OK

    def cmd_jsr(self) -> int:
        p = self.problem()
        bracket = jsr_bracket(
            self.family(p),
            max_depth=self.config.jsr_depth,
            prune=self.config.prune,
            workers=self.config.workers,
        )
        payload = bracket.to_dict()
        witness = divergence_witness(bracket)
        if witness is not None:
            payload["divergence_witness"] = {
                "word": [letter + 1 for letter in witness.word],
                "spectral_radius": witness.rho,
                "rate": witness.rate,
                "x0": witness.x0,
            }
        write_json(self.out("jsr.json"), payload, config=self.config)
        print(f"{'k':>3}  {'lower':>8}  {'upper':>8}")
        for row in bracket.per_depth:
            mark = "" if row.exhaustive else "  (pruned)"
            print(f"{row.k:>3}  {fmt(row.lower)}  {fmt(row.upper)}{mark}")
        print(f"bracket [{fmt(bracket.lower)}, {fmt(bracket.upper)}]")
        print(
            "witness word",
            " ".join(str(letter + 1) for letter in bracket.witness_lower),
        )
        return EXIT_OK

    def cmd_lyap(self) -> int:
        p = self.problem()
        cert = self.certificate(self.family(p))
        rng = np.random.default_rng(self.config.seed)
        points = rng.standard_normal((self.config.points, p.m))
        report = check_drift(cert, points)
        write_json(
            self.out("lyap.json"),
            {
                "certificate": cert.to_dict(),
                "drift": dataclasses.asdict(report),
                "inclusion": inclusion_constants(cert)._asdict(),
            },
            config=self.config,
        )
        print(f"beta_eps     {cert.beta_eps}")
        print(f"T            {cert.depth}")
        print(f"c_eps_upper  {fmt(cert.c_eps_upper)} (tail estimate)")
        print(f"valid        {cert.valid}")
        print(f"violations   {report.violations}")
        print(f"contraction  {report.contraction_violations} failures")
        return EXIT_OK

    def cmd_normball(self) -> int:
        p = self.problem()
        if p.m not in (2, 3) and not self.config.radial_fallback:
            raise InvalidOverride(
                p.m, "mesh needs m in (2, 3); add --radial-fallback"
            )
        cert = self.certificate(self.family(p))
        mesh = normball_mesh(
            cert,
            self.config.resolution,
            radial_fallback=self.config.radial_fallback,
            seed=self.config.seed,
        )
        path = write_mesh_csv(mesh, self.out("normball.csv"), self.config)
        radii = mesh.radii
        print(f"{mesh.points.shape[0]} {mesh.kind} points written to {path}")
        print(f"radius range [{fmt(radii.min())}, {fmt(radii.max())}]")
        return EXIT_OK

    def _markov_setup(self, p: Problem):
        behavior = p.behavior
        if behavior is None and self.preset_default("behavior") is not None:
            behavior = np.array(self.preset_default("behavior"))
        model = stationary_distribution(p, behavior)
        return markov_problem(p, model), model

    def _cert_or_none(self, p: Problem):
        try:
            return self.certificate(build_family(p))
        except CertificateRefused as e:
            logger.warning("no certificate: %s", e)
            return None

    def cmd_simulate(self) -> int:
        cfg = self.config
        p = self.problem(with_alpha=True)
        behavior = None
        if cfg.kind == "markov":
            weighted, model = self._markov_setup(p)
            behavior = model.behavior
            cert = self._cert_or_none(weighted)
        else:
            cert = self._cert_or_none(p)
        theta0 = self.theta0(p)
        summary = run_ensemble(
            p,
            cfg.kind,
            cfg.runs,
            cfg.steps,
            cfg.seed,
            cert=cert,
            theta0=theta0,
            behavior=behavior,
            workers=cfg.workers,
            keep_trajectories=cfg.runs == 1,
        )
        if cfg.runs == 1:
            traj = summary.trajectories[0]
            self._write_trajectory(traj, cert)
            if traj.status == "diverged":
                raise DivergenceDetected(traj.thetas[-1], traj.diverged_at)
        else:
            self._write_ensemble(summary)
            if summary.diverged:
                raise NonConvergence(
                    summary.diverged, f"of {cfg.runs} runs diverged"
                )
        return EXIT_OK

    def _write_trajectory(self, traj, cert):
        m = traj.thetas.shape[1]
        indices = traj.mode_indices()
        errors = traj.errors
        pvals = traj.lyap_values(cert) if cert is not None else None
        columns = ["k"] + [f"theta_{i + 1}" for i in range(m)]
        columns += ["mode", "err", "p"]
        rows = []
        for k, theta in enumerate(traj.thetas):
            mode = ""
            if indices is not None and k < len(indices):
                if indices[k] is not None:
                    mode = str(indices[k] + 1)
            rows.append(
                [k]
                + list(theta)
                + [
                    mode,
                    "" if errors is None else errors[k],
                    "" if pvals is None else pvals[k],
                ]
            )
        write_csv(
            self.out("trajectory.csv"),
            columns,
            rows,
            comments=[f"kind={traj.kind} status={traj.status}"],
            config=self.config,
            integer_columns=1,
        )
        print(f"{'k':>3}  theta")
        for row in rows:
            values = " ".join(fmt(v) for v in row[1 : m + 1])
            print(f"{row[0]:>3}  {values}  {row[m + 1]}")
        print(f"status {traj.status}")

    def _write_ensemble(self, summary):
        if summary.mean_err is None:
            # no certified fixed point: final iterates only
            m = summary.final_thetas.shape[1]
            write_csv(
                self.out("ensemble.csv"),
                ["run", "status"] + [f"theta_{i + 1}" for i in range(m)],
                [
                    [run, status] + list(theta)
                    for run, (status, theta) in enumerate(
                        zip(summary.statuses, summary.final_thetas)
                    )
                ],
                comments=[f"kind={summary.kind} runs={summary.n_runs}"],
                config=self.config,
                integer_columns=1,
            )
            print(f"{summary.n_runs} {summary.kind} runs, no error curve")
            return
        env = summary.envelope
        k = np.arange(summary.steps + 1)
        rows = np.column_stack(
            [
                k,
                summary.mean_err,
                summary.std_err,
                env.euclid if env is not None else np.full(k.shape, np.nan),
            ]
        )
        comments = [f"kind={summary.kind} runs={summary.n_runs}"]
        if env is not None:
            comments.append(
                f"lambda={env.lam!r} residual={env.residual!r} "
                f"applicable={env.applicable}"
            )
        write_csv(
            self.out("ensemble.csv"),
            ["k", "mean_err", "std_err", "envelope"],
            rows,
            comments=comments,
            config=self.config,
            integer_columns=1,
        )
        print(
            f"{summary.n_runs} {summary.kind} runs, final mean error "
            f"{fmt(summary.mean_err[-1])}"
        )
        if env is not None:
            print(f"envelope rate {fmt(env.lam)}, applicable {env.applicable}")

    def cmd_certify(self) -> int:
        cfg = self.config
        p = self.problem(with_alpha=True)
        if cfg.kind == "markov":
            p, _ = self._markov_setup(p)
        family = build_family(p)
        cert = self.certificate(family)
        report = solve_fixed_point(
            p,
            map="reg_dlq" if p.eta > 0 else "dlq",
            tol=cfg.tol,
            certificate=cert,
        )
        if not report.converged:
            raise NonConvergence(
                report.status,
                f"fixed point solver stopped at {report.iterations}",
            )
        theta0 = self.theta0(p)
        x0 = theta0 - report.theta_star
        env = envelope_for(
            cfg.kind,
            bound_inputs(p, cert, report.theta_star),
            float(lyap_norm(cert, x0)),
            cfg.steps,
            x0_norm=float(np.linalg.norm(x0)),
        )
        write_envelope_csv(env, self.out("envelope.csv"), self.config)
        constants = inclusion_constants(cert)
        print(f"theta*        {report.theta_star}")
        print(f"certified     {report.certified}")
        print(f"kind          {env.kind}")
        print(f"lambda        {fmt(env.lam)}")
        print(f"residual      {fmt(env.residual)}")
        print(f"applicable    {env.applicable}")
        print(f"C             {fmt(constants.C)} (tail estimate)")
        return EXIT_OK

    def cmd_regbounds(self) -> int:
        p = self.problem()
        alpha = self.config.alpha
        bounds = reg_euclidean_bounds(p, alpha=alpha)
        rescaling = reg_rescaling_check(p, alpha=alpha, depth=2)
        fitted = self.problem(with_alpha=True)
        sup = rpvi_sup_contraction(fitted)
        multipliers = {}
        if fitted.m == 1:
            one = np.ones(1)
            for name, step in (
                ("dlq", step_dlq),
                ("pqvi", step_pqvi),
                ("reg_dlq", step_reg_dlq),
                ("rpvi", step_rpvi),
            ):
                multipliers[name] = float(step(fitted, one)[0])
        write_json(
            self.out("regbounds.json"),
            {
                "bounds": bounds.to_dict(),
                "rescaling": dataclasses.asdict(rescaling),
                "rpvi_sup_contraction": sup._asdict(),
                "multipliers_at_one": multipliers,
            },
            config=self.config,
        )
        c = bounds.constants
        print(f"c_Phi         {fmt(c.c_Phi)}")
        print(f"L_Phi         {fmt(c.L_Phi)}")
        print(f"L_Phi_eta     {fmt(c.L_Phi_eta)}  (eta={c.eta})")
        restricted = (
            "not applicable"
            if bounds.restricted is None
            else fmt(bounds.restricted)
        )
        print(f"restricted    {restricted}")
        print(f"all-eta       {fmt(bounds.all_eta)}")
        print(f"conservative  {fmt(bounds.conservative)}")
        print(f"rescaling     holds={rescaling.holds}")
        print(f"rpvi sup      {fmt(sup.value)} contracts={sup.contracts}")
        return EXIT_OK

    def cmd_presets(self) -> int:
        for name, preset in __presets__.items():
            print(f"{name:<20} {preset.description}")
        export = getattr(self.args, "export", None)
        if export:
            Path(export).mkdir(parents=True, exist_ok=True)
            for name, preset in __presets__.items():
                dump_problem(preset.problem(), Path(export) / f"{name}.json")
            print(f"exported {len(__presets__)} problem files to {export}")
        return EXIT_OK

    def run(self) -> int:
        logging.basicConfig(
            level=str(self.args.log_level).upper(),
            format=LOG_FORMAT,
            filename=self.args.log_file,
        )
        try:
            self.config = self.resolve_config()
            if self.config.command not in COMMANDS:
                raise InvalidOverride(self.config.command, "unknown command")
            handler = getattr(self, f"cmd_{self.config.command}")
            return handler()
        except BaseError as e:
            logger.error("%s failed: %s", self.args.command, e)
            print(f"error: {e}", file=sys.stderr)
            return e.exit_code
