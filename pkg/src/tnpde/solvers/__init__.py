"""Ground-state solvers and the source-problem solver."""

from .arnoldi import arnoldi_solve
from .base import (
    IMAGINARY_TIME,
    METHODS,
    CostLedger,
    RkfParams,
    SolverConfig,
    SolverReport,
    StepInfo,
    cost_factor,
)
from .gradient import gradient_descent_solve, improved_gradient_solve, optimal_step, step_energy
from .imaginary import imaginary_time_solve
from .krylov import KrylovMatrices, RitzPair, solve_generalized_eig


def solve(H, psi0, cfg: SolverConfig, observer=None) -> SolverReport:
    """Dispatch on ``cfg.method``."""
    if cfg.method in IMAGINARY_TIME:
        return imaginary_time_solve(H, psi0, cfg, observer)
    if cfg.method == "gradient":
        return gradient_descent_solve(H, psi0, cfg, observer)
    if cfg.method == "improved_gradient":
        return improved_gradient_solve(H, psi0, cfg, observer)
    if cfg.method == "arnoldi":
        return arnoldi_solve(H, psi0, cfg, observer)
    if cfg.method == "dmrg":
        from .dmrg import dmrg_solve

        return dmrg_solve(H, psi0, cfg, observer)
    raise ValueError(cfg.method)
