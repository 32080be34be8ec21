"""Finite-precision algebra: fitted linear combinations, operator application, grid doubling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .mpo import Mpo, _env_step, identity_mpo, mpo_add, shift_mpo
from .mps import (
    EPS,
    MpsState,
    Truncation,
    canonicalize,
    left_orthonormalize,
    svd,
    truncate_right_to_left,
)

ZERO_THRESHOLD = 1e-14
DEFAULT_SWEEPS = 4
# a distance this small relative to the target is indistinguishable from rounding
_DISTANCE_FLOOR = 1e-13


@dataclass
class SimplifyOutcome:
    """Result of a fit: the state plus the achieved ``||phi - target||^2 / ||target||^2``."""

    state: MpsState
    relative_error: float
    sweeps_used: int
    max_bond: int
    is_zero: bool = False
    target_norm: float = 0.0
    distances: list[float] = field(default_factory=list)


# a term is (coefficient, operator or None, state)
Term = tuple[complex, "Mpo | None", MpsState]


def _apply_exact(w: np.ndarray, a: np.ndarray) -> np.ndarray:
    l, o, i, r = w.shape
    al, _, br = a.shape
    # (l o r, i) @ (i, al br) -> (l, o, r, al, br)
    t = w.transpose(0, 1, 3, 2).reshape(l * o * r, i) @ a.transpose(1, 0, 2).reshape(i, al * br)
    return t.reshape(l, o, r, al, br).transpose(0, 3, 1, 2, 4).reshape(l * al, o, r * br)


def _term_tensors(term: Term) -> list[np.ndarray]:
    coef, op, psi = term
    ts = list(psi.tensors) if op is None else [_apply_exact(w, a) for w, a in zip(op.tensors, psi.tensors)]
    ts[0] = ts[0] * coef
    return ts


def _direct_sum(chains: list[list[np.ndarray]]) -> list[np.ndarray]:
    if len(chains) == 1:
        return list(chains[0])
    N = len(chains[0])
    dt = np.result_type(*[c[0] for c in chains])
    if N == 1:
        return [sum(c[0] for c in chains).astype(dt, copy=False)]
    out = []
    for k in range(N):
        parts = [c[k] for c in chains]
        if k == 0:
            out.append(np.concatenate(parts, axis=2).astype(dt, copy=False))
        elif k == N - 1:
            out.append(np.concatenate(parts, axis=0).astype(dt, copy=False))
        else:
            dl = sum(p.shape[0] for p in parts)
            dr = sum(p.shape[2] for p in parts)
            t = np.zeros((dl, 2, dr), dtype=dt)
            i = j = 0
            for p in parts:
                t[i : i + p.shape[0], :, j : j + p.shape[2]] = p
                i += p.shape[0]
                j += p.shape[2]
            out.append(t)
    return out


def _term_scale(terms: Sequence[Term]) -> float:
    """Sum of the input magnitudes ``|c_n| ||O_n psi_n||``, used to decide whether a sum cancelled.

    Operator terms are normed exactly; cheap operator-norm bounds such as the
    product of site norms overshoot by orders of magnitude on long chains.
    """
    total = 0.0
    for coef, op, psi in terms:
        if op is None:
            nrm = psi.norm()
        else:
            chain = _term_tensors((1.0, op, psi))
            left_orthonormalize(chain)
            nrm = float(np.linalg.norm(chain[-1]))
        total += abs(coef) * nrm
    return total


def exact_norm(terms: Sequence[Term]) -> float:
    """Norm of ``sum_n c_n O_n psi_n`` with no truncation, via QR on the direct sum.

    Unlike expanding ``<x|x>`` into pairwise overlaps this does not lose
    accuracy when the terms nearly cancel.
    """
    chain = _direct_sum([_term_tensors(t) for t in terms])
    left_orthonormalize(chain)
    return float(np.linalg.norm(chain[-1]))


def _zero_state(like: MpsState) -> MpsState:
    ts = [np.zeros((1, 2, 1)) for _ in range(len(like))]
    return MpsState(ts, like.grid, center=0, validate=False)


def _renv(env: np.ndarray, b: np.ndarray, w: np.ndarray, k: np.ndarray) -> np.ndarray:
    t = np.tensordot(k, env, axes=([2], [2]))  # (c, i, a', w')
    t = np.tensordot(w, t, axes=([2, 3], [1, 3]))  # (w, o, c, a')
    return np.tensordot(b.conj(), t, axes=([1, 2], [1, 3]))  # (a, w, c)


def _two_site(L, w1, w2, R, a1, a2) -> np.ndarray:
    x = np.tensordot(L, a1, axes=([2], [0]))  # (a, w, s, d)
    x = np.tensordot(x, w1, axes=([1, 2], [0, 2]))  # (a, d, o, w2)
    x = np.tensordot(x, a2, axes=([1], [0]))  # (a, o, w2, t, e)
    x = np.tensordot(x, w2, axes=([2, 3], [0, 2]))  # (a, o, e, p, w3)
    return np.tensordot(x, R, axes=([2, 4], [2, 1]))  # (a, o, p, f)


def _overlap_with_terms(phi: MpsState, terms: Sequence[Term]) -> complex:
    total = 0.0j
    for coef, op, psi in terms:
        op = op or identity_mpo(psi.grid)
        env = np.ones((1, 1, 1))
        for b, w, k in zip(phi.tensors, op.tensors, psi.tensors):
            env = _env_step(env, b, w, k)
        total += coef * env[0, 0, 0]
    return total


def _sweep(terms: Sequence[Term], phi: list[np.ndarray], trunc: Truncation, t2: float, max_sweeps: int, history: list[float]) -> int:
    """Two-site variational sweeps on ``phi`` (right-canonical, center 0). Returns sweeps done."""
    N = len(phi)
    ops = [(c, (op or identity_mpo(psi.grid)).tensors, psi.tensors) for c, op, psi in terms]
    one = np.ones((1, 1, 1))
    R = [[None] * (N + 1) for _ in ops]
    L = [[None] * (N + 1) for _ in ops]
    for n, (_, W, A) in enumerate(ops):
        R[n][N] = one
        L[n][0] = one
        for k in range(N - 1, 0, -1):
            R[n][k] = _renv(R[n][k + 1], phi[k], W[k], A[k])

    def local(i):
        theta = None
        for n, (c, W, A) in enumerate(ops):
            t = c * _two_site(L[n][i], W[i], W[i + 1], R[n][i + 2], A[i], A[i + 1])
            theta = t if theta is None else theta + t
        return theta

    done = 0
    for _ in range(max_sweeps):
        kept = 0.0
        for i in range(N - 1):
            th = local(i)
            dl, _, _, dr = th.shape
            u, s, vh = svd(th.reshape(dl * 2, 2 * dr))
            k = trunc.keep(s)
            phi[i] = u[:, :k].reshape(dl, 2, k)
            phi[i + 1] = (s[:k, None] * vh[:k]).reshape(k, 2, dr)
            for n, (_, W, A) in enumerate(ops):
                L[n][i + 1] = _env_step(L[n][i], phi[i], W[i], A[i])
        for i in range(N - 2, -1, -1):
            th = local(i)
            dl, _, _, dr = th.shape
            u, s, vh = svd(th.reshape(dl * 2, 2 * dr))
            k = trunc.keep(s)
            phi[i + 1] = vh[:k].reshape(k, 2, dr)
            phi[i] = (u[:, :k] * s[:k]).reshape(dl, 2, k)
            kept = float(np.sum(s[:k] ** 2))
            for n, (_, W, A) in enumerate(ops):
                R[n][i + 1] = _renv(R[n][i + 2], phi[i + 1], W[i + 1], A[i + 1])
        done += 1
        d = max(t2 - kept, 0.0) / t2
        prev = history[-1]
        history.append(d)
        if prev - d < trunc.tolerance:
            break
    return done


def fit(terms: Sequence[Term], guess: MpsState | None = None, trunc: Truncation | None = None, max_sweeps: int = DEFAULT_SWEEPS) -> SimplifyOutcome:
    """Bounded-bond approximation of ``sum_n c_n O_n |psi_n>`` (``O_n`` may be None).

    The warm start is the exact sum brought to canonical form and cut by
    singular values; it is kept when it already meets the tolerance and the
    bond cap did not bind. Otherwise two-site variational sweeps refine it.
    """
    if not terms:
        raise ValueError("need at least one term")
    trunc = trunc or Truncation.machine()
    ref = terms[0][2]
    N = len(ref)
    for _, op, psi in terms:
        if len(psi) != N or (op is not None and len(op) != N):
            raise ValueError("all terms must have the same number of sites")
    grid = ref.grid

    exact = _direct_sum([_term_tensors(t) for t in terms])
    left_orthonormalize(exact)
    t2 = float(np.vdot(exact[-1], exact[-1]).real)
    # a lone term cannot cancel against anything, so only an exact zero counts
    scale = _term_scale(terms) if len(terms) > 1 else 0.0
    if t2 <= (ZERO_THRESHOLD * scale) ** 2 or t2 == 0.0:
        return SimplifyOutcome(_zero_state(ref), 0.0, 0, 1, True, float(np.sqrt(t2)), [0.0])

    capped = truncate_right_to_left(exact, trunc)
    kept = float(np.vdot(exact[0], exact[0]).real)
    d0 = max(1.0 - kept / t2, 0.0)
    history = [d0]
    sweeps = 1
    limit = max((N - 1) * trunc.tolerance, _DISTANCE_FLOOR)
    if guess is not None:
        if len(guess) != N:
            raise ValueError("guess has the wrong number of sites")
        phi = list(canonicalize(guess, 0).tensors)
        gstate = MpsState(phi, grid, 0, validate=False)
        g2 = float(np.vdot(phi[0], phi[0]).real)
        dg = (t2 + g2 - 2 * _overlap_with_terms(gstate, terms).real) / t2
        history = [max(dg, 0.0)]
        sweeps = _sweep(terms, phi, trunc, t2, max(max_sweeps, 1), history)
    elif capped or d0 > limit:
        phi = exact
        if N > 1 and max_sweeps > 0:
            sweeps += _sweep(terms, phi, trunc, t2, max_sweeps, history)
    else:
        phi = exact
    state = MpsState(phi, grid, center=0, validate=False)
    rel = max(history[-1], -1e-14)
    return SimplifyOutcome(state, rel, sweeps, state.max_bond, False, float(np.sqrt(t2)), history)


def simplify(targets: Sequence[tuple[complex, MpsState]], guess: MpsState | None = None, trunc: Truncation | None = None, max_sweeps: int = DEFAULT_SWEEPS) -> SimplifyOutcome:
    """Best bounded-bond approximation of a weighted sum of states."""
    return fit([(c, None, s) for c, s in targets], guess, trunc, max_sweeps)


def combine(coefficients: Sequence[complex], states: Sequence[MpsState], trunc: Truncation | None = None) -> SimplifyOutcome:
    if len(coefficients) != len(states):
        raise ValueError("one coefficient per state")
    return simplify(list(zip(coefficients, states)), trunc=trunc)


def apply_mpo(O: Mpo, psi: MpsState, trunc: Truncation | None = None, guess: MpsState | None = None, max_sweeps: int = DEFAULT_SWEEPS) -> SimplifyOutcome:
    """Best bounded-bond approximation of ``O|psi>``."""
    if len(O) != len(psi):
        raise ValueError("operator and state have different site counts")
    return fit([(1.0, O, psi)], guess, trunc, max_sweeps)


def _last_point_projector(grid, dim: int) -> Mpo:
    n1 = np.diag([0.0, 1.0]).reshape(1, 2, 2, 1)
    eye = np.eye(2).reshape(1, 2, 2, 1)
    reg = set(grid.register(dim))
    return Mpo([n1 if k in reg else eye for k in range(grid.sites)], grid)


def _insert_site(psi: MpsState, pos: int, bit: int, grid) -> MpsState:
    """Insert a fixed bit at site ``pos`` (bond-preserving)."""
    ts = list(psi.tensors)
    d = ts[pos - 1].shape[2]
    t = np.zeros((d, 2, d), dtype=ts[pos - 1].dtype)
    t[:, bit, :] = np.eye(d)
    ts.insert(pos, t)
    return MpsState(ts, grid, validate=False)


def interpolate_double(psi: MpsState, dim: int = 0, trunc: Truncation | None = None) -> MpsState:
    """Refine register ``dim`` by one qubit with midpoint interpolation.

    New samples: ``g(2s) = f(s)`` and ``g(2s+1) = (f(s) + f(s+1))/2``, where
    the missing ``f(2**n)`` is replaced by the last sample.
    """
    trunc = trunc or Truncation.machine()
    grid = psi.grid
    reg = grid.register(dim)
    fine = grid.refine(dim)
    mid_op = mpo_add(mpo_add(identity_mpo(grid), shift_mpo(grid, dim, 1)), _last_point_projector(grid, dim)).scaled(0.5)
    mid = apply_mpo(mid_op, psi, Truncation.machine()).state
    pos = reg.stop
    even = _insert_site(psi, pos, 0, fine)
    odd = _insert_site(mid, pos, 1, fine)
    return simplify([(1.0, even), (1.0, odd)], trunc=trunc).state
