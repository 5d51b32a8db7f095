"""Smoothed supremum functions and vanishing-damping inertial dynamics."""

from .config import DEFAULT_CONFIG, SolverConfig
from .dro import DROProblem, dro_reg_grad, dro_reg_value, make_dro_benchmark, solve_tilting
from .dynamics import (
    PowerSchedule,
    Schedule,
    diagnostics,
    integrate_gradflow,
    integrate_inertial,
    schedule_check,
)
from .objectives import CallableFamily, QuadraticFamily
from .penalties import KL, KLPushforward, QuadraticToCenter
from .reference import reference_solve
from .sets import Box, LpBall, MomentPolytope, Simplex, VertexPolytope
from .smoothing import SupProblem, evaluate, reg_dmu, reg_grad, reg_value, sup_value

__all__ = [
    "DEFAULT_CONFIG", "SolverConfig", "DROProblem", "dro_reg_grad", "dro_reg_value", "make_dro_benchmark",
    "solve_tilting", "PowerSchedule", "Schedule", "diagnostics", "integrate_gradflow", "integrate_inertial",
    "schedule_check", "CallableFamily", "QuadraticFamily", "KL", "KLPushforward", "QuadraticToCenter",
    "reference_solve", "Box", "LpBall", "MomentPolytope", "Simplex", "VertexPolytope", "SupProblem", "evaluate",
    "reg_dmu", "reg_grad", "reg_value", "sup_value",
]
