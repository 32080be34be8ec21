"""Two-site DMRG with cached environments."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from ..algebra import _renv
from ..mpo import Mpo, _env_step
from ..mps import MpsState, canonicalize, svd
from .base import Observer, Recorder, SolverConfig, SolverReport, Workspace, normalized_start

DENSE_LOCAL = 400
LANCZOS_MAXITER = 100


def lowest_eigenpair(matvec, v0: np.ndarray, tol: float = 1e-10, maxiter: int = LANCZOS_MAXITER, rng=None):
    """Lanczos with full reorthogonalization, started from ``v0``."""
    n = v0.size
    nrm = np.linalg.norm(v0)
    if not np.isfinite(nrm) or nrm == 0.0:
        rng = np.random.default_rng(rng)
        v0 = rng.standard_normal(n).astype(v0.dtype)
        nrm = np.linalg.norm(v0)
    V = np.zeros((min(maxiter, n) + 1, n), dtype=v0.dtype)
    V[0] = v0 / nrm
    alpha, beta = [], []
    theta, y = None, None
    m = 0
    for j in range(min(maxiter, n)):
        w = matvec(V[j])
        a = np.vdot(V[j], w).real
        w = w - V[: j + 1].T @ (V[: j + 1].conj() @ w)
        w = w - V[: j + 1].T @ (V[: j + 1].conj() @ w)
        b = np.linalg.norm(w)
        alpha.append(a)
        m = j + 1
        evals, evecs = scipy.linalg.eigh_tridiagonal(np.array(alpha), np.array(beta)) if j else (np.array([a]), np.ones((1, 1)))
        theta, y = evals[0], evecs[:, 0]
        resid = b * abs(y[-1])
        if resid <= tol * max(1.0, abs(theta)) or b <= 1e-14 * max(1.0, abs(a)):
            break
        beta.append(b)
        V[j + 1] = w / b
    vec = V[:m].T @ y
    return float(theta), vec / np.linalg.norm(vec)


def _local_dense(L, w1, w2, R) -> np.ndarray:
    x = np.tensordot(L, w1, axes=([1], [0]))  # (a, c, o, s, w)
    x = np.tensordot(x, w2, axes=([4], [0]))  # (a, c, o, s, p, t, w3)
    x = np.tensordot(x, R, axes=([6], [1]))  # (a, c, o, s, p, t, f, e)
    # rows (a, o, p, f), cols (c, s, t, e)
    x = x.transpose(0, 2, 4, 6, 1, 3, 5, 7)
    rows = x.shape[0] * 4 * x.shape[3]
    return x.reshape(rows, -1)


def dmrg_solve(H: Mpo, psi0: MpsState, cfg: SolverConfig, observer: Observer | None = None) -> SolverReport:
    """Alternating two-site minimization; one recorded step per full left-right-left sweep."""
    ws = Workspace(H, cfg)
    rec = Recorder(ws, observer)
    rng = np.random.default_rng(cfg.seed)
    psi = normalized_start(psi0)
    N = len(psi)
    W = H.tensors
    if N == 1:
        M = W[0][0, :, :, 0]
        e, v = np.linalg.eigh(0.5 * (M + M.conj().T))
        state = MpsState([v[:, 0].reshape(1, 2, 1)], psi.grid, 0)
        rec.record(float(e[0]), 0.0, state)
        rec.stop_reason = "energy tolerance"
        return rec.report(state, True)
    ts = list(canonicalize(psi, 0).tensors)
    one = np.ones((1, 1, 1))
    R = [None] * (N + 1)
    L = [None] * (N + 1)
    R[N] = one
    L[0] = one
    for k in range(N - 1, 0, -1):
        R[k] = _renv(R[k + 1], ts[k], W[k], ts[k])

    def measure(state):
        phi = ws.apply(state, count=False).state
        return ws.energy_and_variance(state, phi)

    def local(i):
        theta0 = np.tensordot(ts[i], ts[i + 1], axes=([2], [0]))
        shape = theta0.shape
        dim = theta0.size
        if dim <= DENSE_LOCAL:
            Hl = _local_dense(L[i], W[i], W[i + 1], R[i + 2])
            e, v = np.linalg.eigh(0.5 * (Hl + Hl.conj().T))
            return e[0], v[:, 0].reshape(shape)

        e, v = lowest_eigenpair(lambda x: _apply_local(L[i], W[i], W[i + 1], R[i + 2], x.reshape(shape)).reshape(-1), theta0.reshape(-1), rng=rng)
        return e, v.reshape(shape)

    state = MpsState(ts, psi.grid, 0, validate=False)
    energy, var = measure(state)
    rec.record(energy, var, state)
    local_energies = []
    while rec.steps < cfg.max_steps:
        for i in range(N - 1):
            e, th = local(i)
            local_energies.append(e)
            dl, _, _, dr = th.shape
            u, s, vh = svd(th.reshape(dl * 2, 2 * dr))
            k = cfg.trunc.keep(s)
            s = s[:k] / np.linalg.norm(s[:k])
            ts[i] = u[:, :k].reshape(dl, 2, k)
            ts[i + 1] = (s[:, None] * vh[:k]).reshape(k, 2, dr)
            L[i + 1] = _env_step(L[i], ts[i], W[i], ts[i])
        for i in range(N - 2, -1, -1):
            e, th = local(i)
            local_energies.append(e)
            dl, _, _, dr = th.shape
            u, s, vh = svd(th.reshape(dl * 2, 2 * dr))
            k = cfg.trunc.keep(s)
            s = s[:k] / np.linalg.norm(s[:k])
            ts[i + 1] = vh[:k].reshape(k, 2, dr)
            ts[i] = (u[:, :k] * s).reshape(dl, 2, k)
            R[i + 1] = _renv(R[i + 2], ts[i + 1], W[i + 1], ts[i + 1])
        ws.ledger.simplification_sweeps += 1
        state = MpsState(list(ts), psi.grid, 0, validate=False)
        energy, var = measure(state)
        if rec.record(energy, var, state):
            break
    return rec.report(state, local_energies=local_energies)


def _apply_local(L, w1, w2, R, theta: np.ndarray) -> np.ndarray:
    """Effective two-site operator acting on ``theta`` of shape ``(a, s, t, f)``."""
    x = np.tensordot(L, theta, axes=([2], [0]))  # (a, w, s, t, f)
    x = np.tensordot(x, w1, axes=([1, 2], [0, 2]))  # (a, t, f, o, w2)
    x = np.tensordot(x, w2, axes=([1, 4], [2, 0]))  # (a, f, o, p, w3)
    return np.tensordot(x, R, axes=([1, 4], [2, 1]))  # (a, o, p, f)
