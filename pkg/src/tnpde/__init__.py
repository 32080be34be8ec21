"""Tensor-network solvers for Hamiltonian PDEs on binary grids."""

__version__ = "0.1.0"

from .grid import GridSpec
from .mps import (
    MpsState,
    Truncation,
    canonicalize,
    inner,
    make_constant_mps,
    mps_from_dense,
    mps_to_dense,
    norm,
)
from .mpo import (
    Mpo,
    expectation,
    hamiltonian,
    mpo_add,
    mpo_to_dense,
    position_mpo,
    quadratic_potential_mpo,
    second_derivative_mpo,
    shift_mpo,
    squeezing_matrix,
)
from .algebra import SimplifyOutcome, apply_mpo, combine, interpolate_double, simplify
from .solvers import SolverConfig, SolverReport, solve

__all__ = [
    "GridSpec", "MpsState", "Truncation", "canonicalize", "inner", "make_constant_mps", "mps_from_dense",
    "mps_to_dense", "norm", "Mpo", "expectation", "hamiltonian", "mpo_add", "mpo_to_dense", "position_mpo",
    "quadratic_potential_mpo", "second_derivative_mpo", "shift_mpo", "squeezing_matrix", "SimplifyOutcome",
    "apply_mpo", "combine", "interpolate_double", "simplify", "SolverConfig", "SolverReport", "solve",
]
