"""Least-squares descent for source problems ``D f = g``."""

from __future__ import annotations

import numpy as np

from ..mpo import Mpo
from ..mps import MpsState, inner
from .base import Recorder, SolverConfig, SolverReport, Workspace

SOURCE_METHODS = ("gradient", "improved_gradient")


def source_solve(D: Mpo, g: MpsState, f0: MpsState, cfg: SolverConfig, observer=None) -> SolverReport:
    """Minimize ``C[f] = ||D f - g||^2``.

    ``cfg.method == "gradient"`` takes the steepest-descent step
    ``f + db D^dag (D f - g)`` with the exact line minimizer
    ``db = -||u||^2 / ||D u||^2``. ``"improved_gradient"`` instead minimizes
    over the plane spanned by the new gradient and the previous direction.
    The recorded "energies" are the costs ``C[f_k]`` and the run stops once
    one falls below ``cfg.energy_tolerance``.
    """
    if cfg.method not in SOURCE_METHODS:
        raise ValueError(f"source problems support {SOURCE_METHODS}, got {cfg.method!r}")
    if not (len(D) == len(g) == len(f0)):
        raise ValueError("operator, source and initial guess must share the site count")
    ws = Workspace(D, cfg)
    ws.ledger.method = "gradient"
    rec = Recorder(ws, observer)
    Ddag = D.dagger()
    f = f0
    g_norm2 = max(inner(g, g).real, 1e-300)
    prev_dir = prev_Ddir = None
    stalled = False
    while True:
        Df = ws.apply(f).state
        r = ws.combine([1.0, -1.0], [Df, g])
        w = r.state
        cost = 0.0 if r.is_zero else w.norm() ** 2
        rec.energies.append(cost)
        rec.variances.append(0.0)
        rec.costs.append(ws.ledger.rescaled_cost)
        rec.ledgers.append(ws.ledger.snapshot())
        rec.bonds.append(f.max_bond)
        if observer is not None and observer(cost):
            rec.stop_reason = "observer"
            break
        if cost < cfg.energy_tolerance:
            rec.stop_reason = "energy tolerance"
            break
        if rec.steps >= cfg.max_steps:
            break
        u = ws.apply(w, Ddag).state
        u2 = u.norm() ** 2
        if u2 == 0.0:
            stalled = True
            rec.stop_reason = "stalled"
            break
        Du = ws.apply(u).state
        Du2 = Du.norm() ** 2
        if Du2 == 0.0 or not np.isfinite(Du2):
            stalled = True
            rec.stop_reason = "stalled"
            break
        if cfg.method == "gradient" or prev_dir is None:
            db = -u2 / Du2
            f = ws.combine([1.0, db], [f, u]).state
            prev_dir, prev_Ddir = u, Du
        else:
            # minimize ||w + a Du + b Dp||^2 over (a, b)
            G = np.array(
                [[Du2, inner(Du, prev_Ddir).real], [inner(prev_Ddir, Du).real, prev_Ddir.norm() ** 2]]
            )
            rhs = -np.array([inner(Du, w).real, inner(prev_Ddir, w).real])
            a, b = np.linalg.lstsq(G, rhs, rcond=None)[0]
            direction = ws.combine([a, b], [u, prev_dir]).state
            Ddir = ws.combine([a, b], [Du, prev_Ddir]).state
            f = ws.combine([1.0, 1.0], [f, direction]).state
            prev_dir, prev_Ddir = direction, Ddir
        ws.ledger.cost_steps += 1
    converged = rec.stop_reason in ("energy tolerance", "observer")
    return rec.report(f, converged, relative_residual=rec.energies[-1] / g_norm2, stalled=stalled)
