from dataclasses import dataclass


@dataclass(frozen=True)
class SolverConfig:
    """Numerical tolerances used across projections and dual solvers."""

    fixed_point_tol: float = 1e-12
    vi_tol: float = 1e-10
    feasibility_slack: float = 1e-9
    rank_tol: float = 1e-12
    max_dual_iter: int = 100_000
    armijo_slope: float = 1e-4
    backtrack_factor: float = 0.5
    tilting_tol: float = 1e-10
    max_newton_iter: int = 200


DEFAULT_CONFIG = SolverConfig()
