"""Explicit integrators for imaginary-time evolution ``d psi / d beta = -H psi``."""

from __future__ import annotations

import math

import numpy as np

from ..mpo import Mpo
from ..mps import MpsState
from .base import IMAGINARY_TIME, Observer, Recorder, SolverConfig, SolverReport, Workspace, normalized_start

# Butcher tableaux (a, b); stage 0 always evaluates at the current state
TABLEAUX = {
    "euler": ([], [1.0]),
    "heun": ([[1.0]], [0.5, 0.5]),
    "rk4": ([[0.5], [0.0, 0.5], [0.0, 0.0, 1.0]], [1 / 6, 1 / 3, 1 / 3, 1 / 6]),
    "rkf45": (
        [
            [1 / 4],
            [3 / 32, 9 / 32],
            [1932 / 2197, -7200 / 2197, 7296 / 2197],
            [439 / 216, -8.0, 3680 / 513, -845 / 4104],
            [-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40],
        ],
        [25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0],
    ),
}
# fifth-order weights of the embedded pair
RKF5 = [16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55]

# rises above the starting energy by more than this (relative) count as blow-up
RISE_SLACK = 1e-9


def _stages(ws: Workspace, psi: MpsState, phi: MpsState, dt: float, a: list[list[float]]) -> list[MpsState]:
    """Evaluate ``H y_i`` for every stage; ``phi = H psi`` is stage 0."""
    hs = [phi]
    for row in a:
        coefs = [1.0] + [-dt * c for c in row if c != 0.0]
        states = [psi] + [h for c, h in zip(row, hs) if c != 0.0]
        y = ws.combine(coefs, states).state
        hs.append(ws.apply(y).state)
    return hs


def _advance(ws: Workspace, psi: MpsState, hs: list[MpsState], dt: float, b: list[float]):
    coefs = [1.0] + [-dt * c for c in b if c != 0.0]
    states = [psi] + [h for c, h in zip(b, hs) if c != 0.0]
    return ws.combine(coefs, states)


def snap_step(dt: float) -> float:
    """Round to a 6-bit mantissa so rounding noise in the error estimate cannot
    perturb the step sequence (runs stay reproducible across implementations)."""
    m, e = math.frexp(dt)
    return math.ldexp(round(m * 64) / 64, e)


def _rkf_error(ws: Workspace, hs: list[MpsState], dt: float) -> float:
    """Norm of the embedded 5th-minus-4th order difference.

    Formed as an MPS combination (counted) rather than from a Gram matrix of the
    stages, which cancels catastrophically once the error nears the tolerance.
    """
    w = [c5 - c4 for c5, c4 in zip(RKF5, TABLEAUX["rkf45"][1])]
    pairs = [(c, h) for c, h in zip(w, hs) if c != 0.0]
    diff = ws.combine([c for c, _ in pairs], [h for _, h in pairs])
    return dt * diff.state.norm()


def imaginary_time_solve(H: Mpo, psi0: MpsState, cfg: SolverConfig, observer: Observer | None = None) -> SolverReport:
    """Euler, Heun (improved Euler), RK4 or adaptive RKF45 with renormalization every step."""
    if cfg.method not in IMAGINARY_TIME:
        raise ValueError(f"{cfg.method!r} is not an imaginary-time method")
    ws = Workspace(H, cfg)
    rec = Recorder(ws, observer)
    psi = normalized_start(psi0)
    a, b = TABLEAUX[cfg.method]
    adaptive = cfg.method == "rkf45"
    dt = cfg.rkf.initial_step if adaptive else cfg.delta_beta
    log_norm = 0.0
    e_start = None
    unstable = False
    rejected = 0
    steps_taken: list[float] = []
    while True:
        phi_out = ws.apply(psi, count=False)
        phi = phi_out.state
        energy, var = ws.energy_and_variance(psi, phi)
        stop = rec.record(energy, var, psi)
        if e_start is None:
            e_start = energy
        if not np.isfinite(energy) or energy > e_start + RISE_SLACK * max(1.0, abs(e_start)):
            unstable = True
            rec.stop_reason = "unstable"
            break
        if stop or rec.steps >= cfg.max_steps:
            break
        ws.charge(phi_out)
        while True:
            hs = _stages(ws, psi, phi, dt, a)
            ws.ledger.cost_steps += 1
            if not adaptive:
                break
            err = _rkf_error(ws, hs, dt)
            tol = cfg.rkf.abs_tol + cfg.rkf.rel_tol
            factor = 4.0 if err == 0.0 else min(4.0, max(0.1, 0.9 * (tol / err) ** 0.2))
            if err <= tol or dt <= cfg.rkf.min_step:
                used = dt
                dt = snap_step(min(max(dt * factor, cfg.rkf.min_step), cfg.rkf.max_step))
                dt_used = used
                break
            rejected += 1
            dt = snap_step(max(dt * factor, cfg.rkf.min_step))
        step_dt = dt_used if adaptive else dt
        new = _advance(ws, psi, hs, step_dt, b)
        steps_taken.append(step_dt)
        nrm = new.state.norm()
        if not np.isfinite(nrm) or nrm == 0.0:
            unstable = True
            rec.stop_reason = "zero or non-finite norm"
            break
        log_norm += math.log(nrm)
        psi = new.state.scaled(1.0 / nrm)
    converged = rec.stop_reason in ("energy tolerance", "observer") and not unstable
    return rec.report(psi, converged, unstable, log_norm, rejected_steps=rejected, step_sizes=steps_taken)
