"""Rayleigh-Ritz machinery over non-orthogonal bases."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

WHITEN_CUTOFF = 1e-12


@dataclass
class KrylovMatrices:
    """``A[i, j] = <v_i|H|v_j>`` and ``N[i, j] = <v_i|v_j>`` over the current basis."""

    A: np.ndarray
    N: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A))
        self.N = np.atleast_2d(np.asarray(self.N))
        if self.A.shape != self.N.shape or self.A.shape[0] != self.A.shape[1]:
            raise ValueError("A and N must be square matrices of the same size")

    @property
    def size(self) -> int:
        return self.A.shape[0]

    def hermitian(self) -> "KrylovMatrices":
        return KrylovMatrices(0.5 * (self.A + self.A.conj().T), 0.5 * (self.N + self.N.conj().T))


@dataclass
class RitzPair:
    value: float
    vector: np.ndarray
    degenerate: bool
    rank: int

    def __iter__(self):
        # unpacks as (eigenvalue, coefficients)
        yield self.value
        yield self.vector


def solve_generalized_eig(m: KrylovMatrices, cutoff: float = WHITEN_CUTOFF) -> RitzPair:
    """Lowest eigenpair of ``A v = lambda N v`` after discarding near-null directions of ``N``.

    The returned vector satisfies ``v^H N v = 1`` and has a positive overlap
    with the first basis vector.
    """
    h = m.hermitian()
    if not (np.all(np.isfinite(h.A)) and np.all(np.isfinite(h.N))):
        raise FloatingPointError("non-finite entries in the Krylov matrices")
    w, U = np.linalg.eigh(h.N)
    top = float(w[-1])
    if top <= 0.0:
        raise np.linalg.LinAlgError("N is numerically zero")
    keep = w > cutoff * top
    X = U[:, keep] / np.sqrt(w[keep])
    Ar = X.conj().T @ h.A @ X
    Ar = 0.5 * (Ar + Ar.conj().T)
    lam, Y = scipy.linalg.eigh(Ar)
    v = X @ Y[:, 0]
    # fix the phase so the Ritz vector overlaps the first basis vector positively
    ov = (h.N @ v)[0]
    if abs(ov) > 0:
        v = v * (np.conj(ov) / abs(ov))
    scale = max(1.0, float(np.max(np.abs(lam))))
    degenerate = lam.size > 1 and abs(lam[1] - lam[0]) <= 1e-10 * scale
    return RitzPair(float(lam[0]), v, bool(degenerate), int(keep.sum()))
