"""Implicitly restarted Arnoldi over truncated MPS bases."""

from __future__ import annotations

import numpy as np

from ..mpo import Mpo
from ..mps import MpsState, inner
from .base import Observer, Recorder, SolverConfig, SolverReport, Workspace, normalized_start
from .krylov import WHITEN_CUTOFF, KrylovMatrices, solve_generalized_eig


def arnoldi_solve(H: Mpo, psi0: MpsState, cfg: SolverConfig, observer: Observer | None = None) -> SolverReport:
    """Grow ``{psi, H psi, ...}`` up to ``n_v`` vectors, restart from the lowest Ritz vector.

    One outer step is one restart. Matrix elements are always recomputed
    from the truncated basis vectors, never assumed orthonormal.
    """
    ws = Workspace(H, cfg)
    rec = Recorder(ws, observer)
    psi = normalized_start(psi0)
    growth = []
    real = not any(np.iscomplexobj(t) for t in (*H.tensors, *psi.tensors))
    dtype = float if real else complex

    def ip(a, b):
        z = inner(a, b)
        return z.real if real else z

    def hm(a, b):
        z = ws.hmat(a, b)
        return z.real if real else z

    while True:
        basis = [psi]
        A = np.zeros((cfg.n_v, cfg.n_v), dtype=dtype)
        N = np.zeros_like(A)
        A[0, 0] = hm(psi, psi)
        N[0, 0] = ip(psi, psi)
        w_out = ws.apply(psi, count=False)
        energy = float(A[0, 0].real / N[0, 0].real)
        var = w_out.state.norm() ** 2 / N[0, 0].real - energy**2
        if not np.isfinite(energy):
            raise FloatingPointError("non-finite matrix entries; truncation ran away")
        stop = rec.record(energy, var, psi)
        if stop or rec.steps >= cfg.max_steps:
            break
        w = w_out.state
        ws.charge(w_out)
        for j in range(1, cfg.n_v):
            if j > 1:
                w = ws.apply(basis[-1]).state
            m = len(basis)
            # one Gram-Schmidt pass with coefficients from the exact overlaps
            ov = np.array([ip(v, w) for v in basis])
            c = np.linalg.lstsq(N[:m, :m], ov, rcond=None)[0]
            new = ws.combine([1.0] + list(-c), [w] + basis).state
            nrm = new.norm()
            if nrm == 0.0:
                break
            new = new.scaled(1.0 / nrm)
            row_n = np.array([ip(v, new) for v in basis] + [ip(new, new)])
            row_a = np.array([hm(v, new) for v in basis] + [hm(new, new)])
            Nc = N[: m + 1, : m + 1].copy()
            Nc[:m, m] = row_n[:m]
            Nc[m, :m] = row_n[:m].conj()
            Nc[m, m] = row_n[m]
            ev = np.linalg.eigvalsh(0.5 * (Nc + Nc.conj().T))
            if ev[0] < WHITEN_CUTOFF * ev[-1]:
                break
            N[: m + 1, : m + 1] = Nc
            A[:m, m] = row_a[:m]
            A[m, :m] = row_a[:m].conj()
            A[m, m] = row_a[m]
            basis.append(new)
        m = len(basis)
        growth.append(m)
        if m == 1:
            rec.stop_reason = "eigenstate"
            break
        km = KrylovMatrices(A[:m, :m], N[:m, :m])
        if not (np.all(np.isfinite(km.A)) and np.all(np.isfinite(km.N))):
            raise FloatingPointError("non-finite matrix entries; truncation ran away")
        pair = solve_generalized_eig(km)
        coefs = pair.vector.real if real else pair.vector
        new = ws.combine(list(coefs), basis).state
        ws.ledger.cost_steps += m - 1
        psi = new.scaled(1.0 / new.norm())
    return rec.report(psi, basis_sizes=growth)
