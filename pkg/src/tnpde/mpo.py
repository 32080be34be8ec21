"""Matrix product operators for grid functions: constructors, sums, expectations."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .grid import GridSpec
from .mps import (
    DENSE_CAP,
    MpsState,
    Truncation,
    _validate_chain,
    left_orthonormalize,
    svd,
    truncate_right_to_left,
)

_I2 = np.eye(2)
_N = np.diag([0.0, 1.0])


class Mpo:
    """Tensor train of operators with tensors shaped ``(left, out, in, right)``."""

    __slots__ = ("tensors", "grid", "_scale")

    def __init__(self, tensors: Sequence[np.ndarray], grid: GridSpec | None = None, validate: bool = True):
        ts = tuple(np.asarray(t) for t in tensors)
        if grid is None:
            grid = GridSpec.unit(len(ts))
        if validate:
            _validate_chain(ts, rank=4)
            if len(ts) != grid.sites:
                raise ValueError(f"{len(ts)} tensors for a grid with {grid.sites} sites")
        for t in ts:
            t.flags.writeable = False
        self.tensors = ts
        self.grid = grid
        self._scale = None

    def __len__(self) -> int:
        return len(self.tensors)

    def __repr__(self) -> str:
        return f"Mpo(sites={len(self)}, bonds={self.bond_dims})"

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[0] for t in self.tensors] + [1]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims)

    @property
    def scale(self) -> float:
        """Product of the tensor Frobenius norms, an upper bound on the operator norm."""
        if self._scale is None:
            self._scale = float(np.prod([np.linalg.norm(t.reshape(-1)) for t in self.tensors]))
        return self._scale

    def scaled(self, factor: complex) -> "Mpo":
        ts = list(self.tensors)
        ts[0] = ts[0] * factor
        return Mpo(ts, self.grid, validate=False)

    def dagger(self) -> "Mpo":
        return Mpo([t.transpose(0, 2, 1, 3).conj() for t in self.tensors], self.grid, validate=False)

    def to_dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        return mpo_to_dense(self, cap)


def _embed(grid: GridSpec, dim: int, register: list[np.ndarray]) -> Mpo:
    """Place register tensors on ``dim`` and identities elsewhere."""
    idx = grid.register(dim)
    eye = _I2.reshape(1, 2, 2, 1)
    ts = [eye] * grid.sites
    for k, t in zip(idx, register):
        ts[k] = t
    return Mpo(ts, grid)


def identity_mpo(grid: GridSpec) -> Mpo:
    return Mpo([_I2.reshape(1, 2, 2, 1)] * grid.sites, grid)


def position_mpo(grid: GridSpec, dim: int = 0) -> Mpo:
    """Diagonal operator ``x = a + s*dx`` on one register, bond dimension 2."""
    n = grid.qubits_per_dim[dim]
    a, dx = grid.lower[dim], grid.spacing[dim]
    coef = [dx * 2.0 ** (n - 1 - k) for k in range(n)]
    if n == 1:
        return _embed(grid, dim, [(a * _I2 + coef[0] * _N).reshape(1, 2, 2, 1)])
    regs = []
    for k, c in enumerate(coef):
        w = np.zeros((2, 2, 2, 2))
        w[0, :, :, 0] = _I2
        w[0, :, :, 1] = c * _N
        w[1, :, :, 1] = _I2
        if k == 0:
            w = w[:1].copy()
            w[0, :, :, 1] += a * _I2
        elif k == n - 1:
            w = w[:, :, :, 1:]
        regs.append(w)
    return _embed(grid, dim, regs)


def _carry_tensor(increment: bool) -> np.ndarray:
    """Bit update with a carry (or borrow) flowing from the right bond to the left bond.

    Index order ``(carry_out, out, in, carry_in)``.
    """
    w = np.zeros((2, 2, 2, 2))
    w[0, :, :, 0] = _I2
    if increment:
        w[0, 1, 0, 1] = 1.0
        w[1, 0, 1, 1] = 1.0
    else:
        w[0, 0, 1, 1] = 1.0
        w[1, 1, 0, 1] = 1.0
    return w


def shift_mpo(grid: GridSpec, dim: int = 0, direction: int = 1) -> Mpo:
    """``(S+ f)(x_s) = f(x_{s+1})`` for ``direction=+1`` and ``f(x_{s-1})`` for ``-1``.

    Rows that would read off the grid are zero.
    """
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    n = grid.qubits_per_dim[dim]
    # S+ reads s+1, i.e. the output index is the input decremented
    w = _carry_tensor(increment=direction == -1)
    regs = [w] * n
    regs[0] = regs[0][:1]
    regs[-1] = regs[-1][..., 1:]
    return _embed(grid, dim, [r.copy() for r in regs])


def second_derivative_mpo(grid: GridSpec, dim: int = 0) -> Mpo:
    """Three-point stencil ``(S+ + S- - 2)/dx**2`` with Dirichlet truncation, bond dimension 3."""
    n = grid.qubits_per_dim[dim]
    dx = grid.spacing[dim]
    # channels: 0 idle, 1 increment carry, 2 decrement borrow
    w = np.zeros((3, 2, 2, 3))
    w[0, :, :, 0] = _I2
    w[0, 1, 0, 1] = 1.0
    w[1, 0, 1, 1] = 1.0
    w[0, 0, 1, 2] = 1.0
    w[2, 1, 0, 2] = 1.0
    right = np.array([-2.0, 1.0, 1.0]) / dx**2
    regs = [w] * n
    regs[0] = regs[0][:1]
    regs[-1] = np.tensordot(regs[-1], right, axes=([3], [0]))[..., None]
    return _embed(grid, dim, [r.copy() for r in regs])


def _poly_step(t: float) -> np.ndarray:
    """Maps the row ``(1, s, s^2)`` to ``(1, s+t, (s+t)^2)``."""
    return np.array([[1.0, t, t * t], [0.0, 1.0, 2 * t], [0.0, 0.0, 1.0]])


def _poly_register(grid: GridSpec, dim: int, transpose: bool) -> list[np.ndarray]:
    n = grid.qubits_per_dim[dim]
    dx = grid.spacing[dim]
    regs = []
    for k in range(n):
        c = dx * 2.0 ** (n - 1 - k)
        w = np.zeros((3, 2, 2, 3))
        for b in (0, 1):
            m = _poly_step(c * b)
            w[:, b, b, :] = m.T if transpose else m
        regs.append(w)
    return regs


def _fold_left(w: np.ndarray, vec: np.ndarray) -> np.ndarray:
    return np.tensordot(vec, w, axes=([0], [0]))[None]


def _fold_right(w: np.ndarray, mat: np.ndarray) -> np.ndarray:
    return np.tensordot(w, mat, axes=([3], [0]))


def _pair_potential(grid: GridSpec, i: int, j: int, a_ii: float, a_ij: float, a_jj: float) -> Mpo:
    """``a_ii x_i^2 / 2 + a_ij x_i x_j + a_jj x_j^2 / 2`` for registers ``i < j``."""
    xi = _poly_register(grid, i, transpose=False)
    xj = _poly_register(grid, j, transpose=True)
    start = _poly_step(grid.lower[i])[0]
    bridge = np.array([[0.0, 0.0, 0.5 * a_jj], [0.0, a_ij, 0.0], [0.5 * a_ii, 0.0, 0.0]])
    bridge = bridge @ _poly_step(grid.lower[j]).T
    xi[0] = _fold_left(xi[0], start)
    xi[-1] = _fold_right(xi[-1], bridge)
    xj[-1] = _fold_right(xj[-1], np.array([1.0, 0.0, 0.0]))[..., None]
    eye = _I2.reshape(1, 2, 2, 1)
    pass3 = np.einsum("oi,lr->loir", _I2, np.eye(3))
    ts = []
    for d in range(grid.dims):
        if d == i:
            ts.extend(xi)
        elif d == j:
            ts.extend(xj)
        elif i < d < j:
            ts.extend([pass3] * grid.qubits_per_dim[d])
        else:
            ts.extend([eye] * grid.qubits_per_dim[d])
    return Mpo(ts, grid)


def _single_potential(grid: GridSpec, i: int, a_ii: float) -> Mpo:
    xi = _poly_register(grid, i, transpose=False)
    xi[0] = _fold_left(xi[0], _poly_step(grid.lower[i])[0])
    xi[-1] = _fold_right(xi[-1], np.array([0.0, 0.0, 0.5 * a_ii]))[..., None]
    return _embed(grid, i, xi)


def quadratic_potential_mpo(grid: GridSpec, A) -> Mpo:
    """Diagonal operator ``x^T A x / 2`` built from polynomial accumulators (bond <= 3 for d <= 2)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = grid.dims
    if A.shape != (d, d):
        raise ValueError(f"A has shape {A.shape}, expected {(d, d)}")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError("A must be symmetric")
    if d == 1:
        return _single_potential(grid, 0, A[0, 0])
    if d == 2:
        return _pair_potential(grid, 0, 1, A[0, 0], A[0, 1], A[1, 1])
    # higher dimensions: sum of single-register and pairwise pieces
    out = None
    for i in range(d):
        terms = [_single_potential(grid, i, A[i, i])]
        terms += [_pair_potential(grid, i, j, 0.0, A[i, j], 0.0) for j in range(i + 1, d) if A[i, j] != 0]
        for t in terms:
            out = t if out is None else mpo_add(out, t)
    return out


def squeezing_matrix(theta: float, sigma_max: float, sigma_min: float) -> np.ndarray:
    """``O(theta)^T diag(1/sigma_max^4, 1/sigma_min^4) O(theta)`` with ``O = [[c, s], [-s, c]]``."""
    if sigma_max <= 0 or sigma_min <= 0:
        raise ValueError("widths must be positive")
    c, s = np.cos(theta), np.sin(theta)
    O = np.array([[c, s], [-s, c]])
    return O.T @ np.diag([sigma_max**-4.0, sigma_min**-4.0]) @ O


def continuum_ground_energy(A) -> float:
    """``sum_i sqrt(eig_i(A)) / 2`` for ``-lap/2 + x^T A x/2`` on the whole space."""
    w = np.linalg.eigvalsh(np.atleast_2d(np.asarray(A, dtype=float)))
    return float(0.5 * np.sum(np.sqrt(w)))


def hamiltonian(grid: GridSpec, A, compress: Truncation | None = None) -> Mpo:
    """``-lap/2 + x^T A x / 2`` built as one exact channel automaton.

    Dense-equivalent to the direct sum of the second-derivative and potential
    MPOs, but channels with the same left operator are shared, giving bond
    dimension 5 in one dimension and ``5 + d - 1 - r`` inside register ``r``
    in general. Pass ``compress`` to recompress afterwards.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = grid.dims
    if A.shape != (d, d):
        raise ValueError(f"A has shape {A.shape}, grid has {d} dimensions")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError("A must be symmetric")
    out = Mpo(_hamiltonian_tensors(grid, A), grid)
    if compress is not None:
        out = compress_mpo(out, compress)
    return out


def _hamiltonian_tensors(grid: GridSpec, A: np.ndarray) -> list[np.ndarray]:
    # channel layout inside register r: I, D(one), INC, DEC, R(linear in rest of x_r), L_j (j > r)
    # between registers: I, D, L_j (j >= r)
    d = grid.dims
    up = np.array([[0.0, 0.0], [1.0, 0.0]])  # |1><0|
    down = up.T.copy()  # |0><1|
    ts: list[np.ndarray] = []
    for r in range(d):
        n = grid.qubits_per_dim[r]
        a, dx = grid.lower[r], grid.spacing[r]
        later = list(range(r + 1, d))
        I, D, INC, DEC, R = 0, 1, 2, 3, 4
        chan = 5 + len(later)
        L = {j: 5 + k for k, j in enumerate(later)}
        # entry map from the inter-register channels (I, D, L_r, L_{r+1}, ...)
        E = np.zeros((2 + d - r, chan))
        E[0, I] = 1.0
        E[0, D] = 0.5 * A[r, r] * a * a
        E[0, R] = A[r, r] * a
        for j in later:
            E[0, L[j]] = A[r, j] * a
        E[1, D] = 1.0
        E[2, R] = 1.0
        E[2, D] = a
        for k, j in enumerate(later):
            E[3 + k, L[j]] = 1.0
        # the chain starts in the identity channel
        left = E[0] if r == 0 else E
        kappa = -0.5 / dx**2
        for k in range(n):
            c = dx * 2.0 ** (n - 1 - k)
            last = k == n - 1
            w = np.zeros((chan, 2, 2, chan))
            w[I, :, :, I] = _I2
            w[D, :, :, D] = _I2
            w[I, :, :, D] = 0.5 * A[r, r] * c * c * _N
            w[R, :, :, D] = c * _N
            for j in later:
                w[L[j], :, :, L[j]] = _I2
                w[I, :, :, L[j]] = A[r, j] * c * _N
            if not last:
                w[I, :, :, R] = A[r, r] * c * _N
                w[R, :, :, R] = _I2
                w[I, :, :, INC] = up
                w[INC, :, :, INC] = down
                w[I, :, :, DEC] = down
                w[DEC, :, :, DEC] = up
            else:
                w[I, :, :, D] += kappa * (-2.0 * _I2 + up + down)
                w[INC, :, :, D] = kappa * down
                w[DEC, :, :, D] = kappa * up
                keep = [I, D] + [L[j] for j in later]
                w = w[..., keep]
            if k == 0:
                w = np.tensordot(left, w, axes=([-1], [0]))
                if r == 0:
                    w = w[None]
            ts.append(w)
    ts[-1] = np.tensordot(ts[-1], np.array([0.0, 1.0]), axes=([3], [0]))[..., None]
    return ts


def mpo_add(o1: Mpo, o2: Mpo) -> Mpo:
    """Direct sum; bond dimensions add."""
    if o1.grid != o2.grid:
        raise ValueError("operators live on different grids")
    N = len(o1)
    if N == 1:
        return Mpo([o1.tensors[0] + o2.tensors[0]], o1.grid)
    ts = []
    for k, (a, b) in enumerate(zip(o1.tensors, o2.tensors)):
        dt = np.result_type(a, b)
        if k == 0:
            t = np.concatenate([a, b], axis=3).astype(dt, copy=False)
        elif k == N - 1:
            t = np.concatenate([a, b], axis=0).astype(dt, copy=False)
        else:
            t = np.zeros((a.shape[0] + b.shape[0], 2, 2, a.shape[3] + b.shape[3]), dtype=dt)
            t[: a.shape[0], :, :, : a.shape[3]] = a
            t[a.shape[0] :, :, :, a.shape[3] :] = b
        ts.append(t)
    return Mpo(ts, o1.grid)


def expectation(bra: MpsState, O: Mpo, ket: MpsState) -> complex:
    """Exact ``<bra|O|ket>`` in a single environment sweep."""
    if not (len(bra) == len(O) == len(ket)):
        raise ValueError("site count mismatch")
    env = np.ones((1, 1, 1))
    for b, w, k in zip(bra.tensors, O.tensors, ket.tensors):
        env = _env_step(env, b, w, k)
    val = env[0, 0, 0]
    return complex(val) if np.iscomplexobj(val) else complex(float(val), 0.0)


def _env_step(env: np.ndarray, b: np.ndarray, w: np.ndarray, k: np.ndarray) -> np.ndarray:
    # env (bra, mpo, ket) -> next bond, as three matrix products
    db, dw, dk = env.shape
    k2 = k.shape[2]
    w1 = w.shape[3]
    t = (env.reshape(db * dw, dk) @ k.reshape(dk, 2 * k2)).reshape(db, dw, 2, k2)
    t = t.transpose(0, 3, 1, 2).reshape(db * k2, dw * 2)
    t = (t @ w.transpose(0, 2, 1, 3).reshape(dw * 2, 2 * w1)).reshape(db, k2, 2, w1)
    t = t.transpose(0, 2, 3, 1).reshape(db * 2, w1 * k2)
    b2 = b.shape[2]
    out = b.reshape(db * 2, b2).conj().T @ t if np.iscomplexobj(b) else b.reshape(db * 2, b2).T @ t
    return out.reshape(b2, w1, k2)


def mpo_to_dense(o: Mpo, cap: int = DENSE_CAP) -> np.ndarray:
    N = len(o)
    if N > cap or 4**N > 4**14:
        raise ValueError(f"{N} sites exceed the dense operator cap")
    out = o.tensors[0].reshape(2, 2, -1)
    for w in o.tensors[1:]:
        t = np.tensordot(out, w, axes=([2], [0]))  # (O, I, o, i, r)
        r = t.shape[-1]
        out = t.transpose(0, 2, 1, 3, 4).reshape(out.shape[0] * 2, out.shape[1] * 2, r)
    return out[:, :, 0]


def mpo_from_dense(matrix: np.ndarray, grid: GridSpec | None = None, trunc: Truncation | None = None) -> Mpo:
    """Successive SVD factorization of a ``2**N x 2**N`` matrix."""
    M = np.asarray(matrix)
    dim = M.shape[0]
    N = int(round(np.log2(dim)))
    if M.shape != (dim, dim) or 2**N != dim or N < 1:
        raise ValueError("expected a square matrix with power-of-two size")
    grid = grid or GridSpec.unit(N)
    if grid.sites != N:
        raise ValueError("grid does not match the matrix size")
    trunc = trunc or Truncation.machine()
    t = M.reshape([2] * (2 * N))
    order = [x for k in range(N) for x in (k, N + k)]
    rest = t.transpose(order).reshape(1, -1)
    ts = []
    for _ in range(N - 1):
        dl = rest.shape[0]
        u, s, vh = svd(rest.reshape(dl * 4, -1))
        keep = trunc.keep(s)
        ts.append(u[:, :keep].reshape(dl, 2, 2, keep))
        rest = s[:keep, None] * vh[:keep]
    ts.append(rest.reshape(rest.shape[0], 2, 2, 1))
    return Mpo(ts, grid)


def compress_mpo(o: Mpo, trunc: Truncation) -> Mpo:
    """Recompress bonds treating each site as a 4-dimensional physical index."""
    ts = [t.reshape(t.shape[0], 4, t.shape[3]) for t in o.tensors]
    left_orthonormalize(ts)
    truncate_right_to_left(ts, trunc)
    return Mpo([t.reshape(t.shape[0], 2, 2, t.shape[2]) for t in ts], o.grid)
