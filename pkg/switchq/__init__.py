"""Top-level package for switchq"""

__copyright__ = "Copyright (C) 2026 switchq developers"

from switchq.bellman import solve_fixed_point
from switchq.certificates import envelope_for
from switchq.jsr import jsr_bracket
from switchq.lyapunov import build_cert
from switchq.mdp_model import Problem, load_problem
from switchq.presets import load_preset
from switchq.simulate import run_ensemble
from switchq.switching import build_family

__version__ = "0.3.0"

__all__ = [
    "Problem",
    "load_problem",
    "load_preset",
    "build_family",
    "jsr_bracket",
    "build_cert",
    "solve_fixed_point",
    "envelope_for",
    "run_ensemble",
]
