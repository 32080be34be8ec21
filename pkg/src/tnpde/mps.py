"""Matrix product states: storage, canonical forms, exact contractions and dense bridges."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .grid import GridSpec

EPS = float(np.finfo(np.float64).eps)
DENSE_CAP = 24
ISOMETRY_TOL = 1e-12

MODES = ("relative_singular_values", "machine_exact")


@dataclass(frozen=True)
class Truncation:
    """Precision contract for every approximate operation.

    ``tolerance`` bounds the discarded squared weight, relative to the total
    squared norm, at each singular-value cut. ``machine_exact`` pins it to
    double precision epsilon and only drops singular values at roundoff level
    (below ``eps`` times the norm), so it honours that bound with room to spare.
    """

    tolerance: float = EPS
    max_bond: int | None = None
    mode: str = "relative_singular_values"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown truncation mode {self.mode!r}")
        if self.mode == "machine_exact":
            object.__setattr__(self, "tolerance", EPS)
        if not np.isfinite(self.tolerance) or self.tolerance < 0:
            raise ValueError("tolerance must be a finite number >= 0")
        if self.max_bond is not None and int(self.max_bond) < 1:
            raise ValueError("max_bond must be >= 1")

    @classmethod
    def machine(cls, max_bond: int | None = None) -> "Truncation":
        return cls(EPS, max_bond, "machine_exact")

    def keep(self, s: np.ndarray) -> int:
        """Number of leading singular values (sorted descending) to retain."""
        return self.keep_info(s)[0]

    def keep_info(self, s: np.ndarray) -> tuple[int, bool]:
        """Kept count and whether the bond cap (rather than the tolerance) decided it."""
        if s.size == 0:
            return 1, False
        thr = self.tolerance**2 if self.mode == "machine_exact" else self.tolerance
        last = s[-1] * s[-1]
        # nothing can be cut when even the smallest value alone exceeds the budget
        if last > 0.0 and last > thr * s.size * s[0] * s[0]:
            return self._cap(s.size)
        tail = np.cumsum((s * s)[::-1])
        total = tail[-1]
        if total == 0.0:
            return 1, False
        # tail[j] is the weight of the j+1 smallest values
        k = max(s.size - int(np.searchsorted(tail, thr * total, side="right")), 1)
        return self._cap(k)

    def _cap(self, k: int) -> tuple[int, bool]:
        if self.max_bond is not None and k > self.max_bond:
            return int(self.max_bond), True
        return k, False

    def label(self) -> str:
        return "machine" if self.mode == "machine_exact" else f"{self.tolerance:.0e}"


_SVD_CACHE: dict = {}


def svd(m: np.ndarray):
    """Thin SVD straight from LAPACK ``gesdd``, falling back to ``gesvd`` when it fails."""
    key = m.dtype.char
    gesdd = _SVD_CACHE.get(key)
    if gesdd is None:
        gesdd = _SVD_CACHE[key] = scipy.linalg.lapack.get_lapack_funcs("gesdd", (m,))
    u, s, vh, info = gesdd(m, compute_uv=1, full_matrices=0)
    if info != 0:
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
    return u, s, vh


_QR_CACHE: dict = {}
_UPPER: dict = {}


def _upper_mask(k: int, cols: int) -> np.ndarray:
    m = _UPPER.get((k, cols))
    if m is None:
        m = _UPPER[(k, cols)] = np.triu(np.ones((k, cols)))
    return m


def _qr(m: np.ndarray):
    """Economic QR straight from LAPACK (the numpy wrapper overhead dominates at these sizes)."""
    key = m.dtype.char
    funcs = _QR_CACHE.get(key)
    if funcs is None:
        funcs = scipy.linalg.lapack.get_lapack_funcs(("geqrf", "orgqr" if key in "fd" else "ungqr"), (m,))
        _QR_CACHE[key] = funcs
    geqrf, orgqr = funcs
    rows, cols = m.shape
    k = min(rows, cols)
    qr, tau, _, info = geqrf(m)
    if info != 0:
        return np.linalg.qr(m)
    r = qr[:k] * _upper_mask(k, cols)
    q, _, info = orgqr(qr[:, :k], tau)
    if info != 0:
        return np.linalg.qr(m)
    return q, r


def left_orthonormalize(tensors: list[np.ndarray], stop: int | None = None) -> None:
    """QR sweep from site 0 up to ``stop`` (default: last site); in place.

    The norm ends up in tensor ``stop``.
    """
    stop = len(tensors) - 1 if stop is None else stop
    for k in range(stop):
        a = tensors[k]
        dl, p, dr = a.shape
        q, r = _qr(a.reshape(dl * p, dr))
        tensors[k] = q.reshape(dl, p, q.shape[1])
        nxt = tensors[k + 1]
        tensors[k + 1] = (r @ nxt.reshape(dr, -1)).reshape(r.shape[0], *nxt.shape[1:])


def right_orthonormalize(tensors: list[np.ndarray], stop: int = 0) -> None:
    """QR sweep (on transposes) from the last site down to ``stop``; in place."""
    for k in range(len(tensors) - 1, stop, -1):
        a = tensors[k]
        dl, p, dr = a.shape
        q, r = _qr(a.reshape(dl, p * dr).T)
        tensors[k] = q.T.reshape(q.shape[1], p, dr)
        prv = tensors[k - 1]
        tensors[k - 1] = (prv.reshape(-1, dl) @ r.T).reshape(*prv.shape[:-1], r.shape[0])


def truncate_right_to_left(tensors: list[np.ndarray], trunc: Truncation, stop: int = 0) -> bool:
    """SVD sweep from the last site down to ``stop`` leaving right isometries; in place.

    Assumes sites left of the sweep are left-orthonormal so cuts are optimal.
    Returns True if the bond cap was binding at some cut.
    """
    capped = False
    for k in range(len(tensors) - 1, stop, -1):
        a = tensors[k]
        dl, p, dr = a.shape
        u, s, vh = svd(a.reshape(dl, p * dr))
        keep, hit = trunc.keep_info(s)
        capped |= hit
        tensors[k] = vh[:keep].reshape(keep, p, dr)
        prv = tensors[k - 1]
        us = u[:, :keep] * s[:keep]
        tensors[k - 1] = (prv.reshape(-1, dl) @ us).reshape(*prv.shape[:-1], keep)
    return capped


class MpsState:
    """Tensor train ``A[0] ... A[N-1]`` with tensors of shape ``(D_k, 2, D_{k+1})``.

    Instances are treated as immutable; operations return new states. Arrays
    are real when every ingredient is real and complex otherwise.
    """

    __slots__ = ("tensors", "grid", "center")

    def __init__(self, tensors: Sequence[np.ndarray], grid: GridSpec | None = None, center: int | None = None, validate: bool = True):
        ts = tuple(np.asarray(t) for t in tensors)
        if grid is None:
            grid = GridSpec.unit(len(ts))
        if validate:
            _validate_chain(ts, rank=3)
            if len(ts) != grid.sites:
                raise ValueError(f"{len(ts)} tensors for a grid with {grid.sites} sites")
            if center is not None and not 0 <= center < len(ts):
                raise ValueError(f"center {center} out of range")
        for t in ts:
            t.flags.writeable = False
        self.tensors = ts
        self.grid = grid
        self.center = center

    def __len__(self) -> int:
        return len(self.tensors)

    def __repr__(self) -> str:
        return f"MpsState(sites={len(self)}, bonds={self.bond_dims}, center={self.center})"

    @property
    def size(self) -> int:
        return len(self.tensors)

    @property
    def dtype(self):
        return np.result_type(*self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[0] for t in self.tensors] + [1]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims)

    @property
    def param_count(self) -> int:
        return int(sum(t.size for t in self.tensors))

    def norm(self) -> float:
        if self.center is not None:
            return float(np.linalg.norm(self.tensors[self.center]))
        return float(np.sqrt(max(inner(self, self).real, 0.0)))

    def scaled(self, factor: complex) -> "MpsState":
        """Multiply the state by ``factor`` (absorbed into the center, or site 0)."""
        k = 0 if self.center is None else self.center
        ts = list(self.tensors)
        ts[k] = ts[k] * factor
        return MpsState(ts, self.grid, self.center, validate=False)

    def normalized(self) -> "MpsState":
        nrm = self.norm()
        if nrm == 0.0:
            raise ZeroDivisionError("cannot normalize the zero state")
        return self.scaled(1.0 / nrm)

    def to_dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        return mps_to_dense(self, cap)


def _validate_chain(ts: Sequence[np.ndarray], rank: int) -> None:
    if not ts:
        raise ValueError("a tensor train needs at least one site")
    for k, t in enumerate(ts):
        if t.ndim != rank:
            raise ValueError(f"site {k}: expected rank {rank}, got shape {t.shape}")
        if any(d != 2 for d in t.shape[1:-1]):
            raise ValueError(f"site {k}: physical dimensions must be 2, got {t.shape}")
    if ts[0].shape[0] != 1 or ts[-1].shape[-1] != 1:
        raise ValueError("boundary bond dimensions must be 1")
    for k in range(len(ts) - 1):
        if ts[k].shape[-1] != ts[k + 1].shape[0]:
            raise ValueError(f"bond mismatch between sites {k} and {k + 1}")


def _check_sites(a, b) -> None:
    if len(a.tensors) != len(b.tensors):
        raise ValueError(f"site count mismatch: {len(a.tensors)} vs {len(b.tensors)}")


def product_mps(local: Sequence[np.ndarray], grid: GridSpec | None = None) -> MpsState:
    """Bond-1 state from one length-2 vector per site."""
    ts = [np.asarray(v).reshape(1, 2, 1) for v in local]
    return MpsState(ts, grid)


def make_constant_mps(grid: GridSpec) -> MpsState:
    """Normalized constant function; every amplitude is ``2**(-N/2)``."""
    v = np.full(2, 1 / np.sqrt(2))
    return MpsState([v.reshape(1, 2, 1)] * grid.sites, grid)


def basis_mps(index: int, grid: GridSpec) -> MpsState:
    """Computational basis state ``e_index`` in the big-endian site convention."""
    N = grid.sites
    if not 0 <= index < 2**N:
        raise ValueError("basis index out of range")
    bits = [(index >> (N - 1 - k)) & 1 for k in range(N)]
    return product_mps([np.eye(2)[b] for b in bits], grid)


def random_mps(grid: GridSpec, bond: int = 4, rng: np.random.Generator | int | None = None, complex_values: bool = False) -> MpsState:
    """Random (unnormalized) state with bonds capped at ``bond``."""
    rng = np.random.default_rng(rng)
    N = grid.sites
    dims = [1] + [min(bond, 2 ** min(k, N - k)) for k in range(1, N)] + [1]
    ts = []
    for k in range(N):
        shape = (dims[k], 2, dims[k + 1])
        t = rng.standard_normal(shape)
        if complex_values:
            t = t + 1j * rng.standard_normal(shape)
        ts.append(t)
    return MpsState(ts, grid)


def random_product_mps(grid: GridSpec, rng: np.random.Generator | int | None = None) -> MpsState:
    """Normalized product state with positive random local amplitudes."""
    rng = np.random.default_rng(rng)
    local = []
    for _ in range(grid.sites):
        v = rng.uniform(0.1, 1.0, size=2)
        local.append(v / np.linalg.norm(v))
    return product_mps(local, grid)


def mps_from_dense(v: np.ndarray, grid: GridSpec | None = None, trunc: Truncation | None = None) -> MpsState:
    """Successive SVD factorization of a length ``2**N`` vector."""
    v = np.asarray(v)
    if v.ndim != 1:
        raise ValueError("expected a vector")
    N = int(round(np.log2(v.size))) if v.size > 0 else 0
    if v.size < 2 or 2**N != v.size:
        raise ValueError(f"length {v.size} is not a power of two >= 2")
    if grid is None:
        grid = GridSpec.unit(N)
    if grid.sites != N:
        raise ValueError(f"vector has {N} sites but grid has {grid.sites}")
    trunc = trunc or Truncation.machine()
    ts = []
    rest = v.reshape(1, -1)
    for _ in range(N - 1):
        dl = rest.shape[0]
        u, s, vh = svd(rest.reshape(dl * 2, -1))
        keep = trunc.keep(s)
        ts.append(u[:, :keep].reshape(dl, 2, keep))
        rest = s[:keep, None] * vh[:keep]
    ts.append(rest.reshape(rest.shape[0], 2, 1))
    return MpsState(ts, grid, center=N - 1)


def mps_to_dense(m: MpsState, cap: int = DENSE_CAP) -> np.ndarray:
    """Full contraction into a vector of length ``2**N``."""
    if len(m) > cap:
        raise ValueError(f"{len(m)} sites exceed the dense cap of {cap}")
    out = m.tensors[0].reshape(2, -1)
    for t in m.tensors[1:]:
        dl = t.shape[0]
        out = (out @ t.reshape(dl, -1)).reshape(-1, t.shape[2])
    return out.reshape(-1)


def inner(a: MpsState, b: MpsState) -> complex:
    """Exact ``<a|b>`` via a left-to-right environment sweep."""
    _check_sites(a, b)
    env = np.ones((1, 1))
    for x, y in zip(a.tensors, b.tensors):
        tmp = env @ y.reshape(y.shape[0], -1)
        tmp = tmp.reshape(x.shape[0] * 2, y.shape[2])
        env = x.reshape(-1, x.shape[2]).conj().T @ tmp
    val = env[0, 0]
    return complex(val) if np.iscomplexobj(val) else complex(float(val), 0.0)


def norm(m: MpsState) -> float:
    return m.norm()


def canonicalize(m: MpsState, center: int = 0, trunc: Truncation | None = None) -> MpsState:
    """Mixed canonical form around ``center`` with optional truncation on every bond."""
    N = len(m)
    if not 0 <= center < N:
        raise ValueError(f"center {center} out of range for {N} sites")
    ts = list(m.tensors)
    if trunc is None:
        left_orthonormalize(ts, center)
        right_orthonormalize(ts, center)
        return MpsState(ts, m.grid, center, validate=False)
    left_orthonormalize(ts)
    truncate_right_to_left(ts, trunc)
    left_orthonormalize(ts, center)
    return MpsState(ts, m.grid, center, validate=False)


def is_left_isometry(t: np.ndarray, tol: float = ISOMETRY_TOL) -> bool:
    m = t.reshape(-1, t.shape[-1])
    return bool(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[1]))) <= tol)


def is_right_isometry(t: np.ndarray, tol: float = ISOMETRY_TOL) -> bool:
    m = t.reshape(t.shape[0], -1)
    return bool(np.max(np.abs(m @ m.conj().T - np.eye(m.shape[0]))) <= tol)


def check_canonical(m: MpsState, tol: float = ISOMETRY_TOL) -> bool:
    """True when the stored center matches the isometry structure."""
    if m.center is None:
        return False
    left = all(is_left_isometry(t, tol) for t in m.tensors[: m.center])
    right = all(is_right_isometry(t, tol) for t in m.tensors[m.center + 1 :])
    return left and right


def param_count(m: MpsState) -> int:
    return m.param_count
