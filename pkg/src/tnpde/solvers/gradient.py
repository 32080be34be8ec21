"""Self-calibrated descent on the energy functional."""

from __future__ import annotations

import math

import numpy as np

from ..mpo import Mpo
from ..mps import MpsState
from .base import Observer, Recorder, SolverConfig, SolverReport, Workspace, normalized_start
from .krylov import KrylovMatrices, solve_generalized_eig

# below this central variance the state is treated as an eigenstate
EIGENSTATE_VARIANCE = 1e-14


def optimal_step(mean: float, central2: float, central3: float) -> float:
    """Negative root minimizing ``E(db) - E = (2 db m2 + db^2 m3) / (1 + db^2 m2)``.

    Uses the cancellation-free form of the quadratic root.
    """
    if not central2 > 0:
        raise ValueError("central2 must be positive")
    s = math.sqrt(central3 * central3 + 4.0 * central2**3)
    if central3 >= 0:
        return -2.0 * central2 / (central3 + s)
    return (central3 - s) / (2.0 * central2 * central2)


def step_energy(mean: float, central2: float, central3: float, delta_beta: float) -> float:
    """Energy after ``psi + db (H - E) psi`` (renormalized), from the central moments."""
    db = delta_beta
    return mean + (2 * db * central2 + db * db * central3) / (1 + db * db * central2)


def _moments(ws: Workspace, psi: MpsState, phi: MpsState):
    energy, m2 = ws.energy_and_variance(psi, phi)
    h2 = phi.norm() ** 2
    h3 = ws.hmat(phi, phi).real
    m3 = h3 - 3 * energy * h2 + 2 * energy**3
    return energy, m2, h2, h3, m3


def gradient_descent_solve(H: Mpo, psi0: MpsState, cfg: SolverConfig, observer: Observer | None = None) -> SolverReport:
    """``psi <- normalize(psi + db (H - <H>) psi)`` with the optimal ``db`` each step."""
    ws = Workspace(H, cfg)
    rec = Recorder(ws, observer)
    psi = normalized_start(psi0)
    scales = []
    while True:
        phi_out = ws.apply(psi, count=False)
        phi = phi_out.state
        energy, m2, h2, h3, m3 = _moments(ws, psi, phi)
        stop = rec.record(energy, m2, psi)
        if m2 < EIGENSTATE_VARIANCE * max(1.0, energy * energy):
            rec.stop_reason = "eigenstate"
            break
        if stop or rec.steps >= cfg.max_steps:
            break
        ws.charge(phi_out)
        db = optimal_step(energy, m2, m3)
        scales.append(db)
        new = ws.combine([1.0 - db * energy, db], [psi, phi]).state
        ws.ledger.cost_steps += 1
        psi = new.scaled(1.0 / new.norm())
    return rec.report(psi, step_sizes=scales)


def improved_gradient_solve(H: Mpo, psi0: MpsState, cfg: SolverConfig, observer: Observer | None = None) -> SolverReport:
    """Rayleigh-Ritz on ``span{psi, H psi}`` each step."""
    ws = Workspace(H, cfg)
    rec = Recorder(ws, observer)
    psi = normalized_start(psi0)
    while True:
        phi_out = ws.apply(psi, count=False)
        phi = phi_out.state
        energy, m2, h2, h3, m3 = _moments(ws, psi, phi)
        stop = rec.record(energy, m2, psi)
        if m2 < EIGENSTATE_VARIANCE * max(1.0, energy * energy):
            rec.stop_reason = "eigenstate"
            break
        if stop or rec.steps >= cfg.max_steps:
            break
        km = KrylovMatrices(np.array([[energy, h2], [h2, h3]]), np.array([[1.0, energy], [energy, h2]]))
        pair = solve_generalized_eig(km)
        if pair.rank < 2:
            rec.stop_reason = "eigenstate"
            break
        ws.charge(phi_out)
        v = pair.vector
        new = ws.combine([v[0], v[1]], [psi, phi]).state
        ws.ledger.cost_steps += 1
        psi = new.scaled(1.0 / new.norm())
    return rec.report(psi)
