"""Dense reference implementations used to validate the tensor-network code."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import GridSpec
from .solvers.base import IMAGINARY_TIME, SolverConfig
from .solvers.gradient import EIGENSTATE_VARIANCE, optimal_step
from .solvers.imaginary import RISE_SLACK, RKF5, TABLEAUX, snap_step
from .solvers.krylov import WHITEN_CUTOFF, KrylovMatrices, solve_generalized_eig

ORACLE_CAP = 24
# above this dimension the minimal eigenpair comes from shift-invert Lanczos
DENSE_EIG_LIMIT = 2**10


@dataclass
class DenseProblem:
    matrix: object
    grid: GridSpec
    ground_energy: float
    ground_vector: np.ndarray

    @property
    def residual(self) -> float:
        v = self.ground_vector
        return float(np.linalg.norm(self.matrix @ v - self.ground_energy * v))


def _second_difference(n: int, dx: float):
    m = 2**n
    return sp.diags([np.ones(m - 1), -2 * np.ones(m), np.ones(m - 1)], [-1, 0, 1], format="csr") / dx**2


def dense_hamiltonian(grid: GridSpec, A, sparse: bool | None = None):
    """``-lap/2 + x^T A x / 2`` from Kronecker products of 1D stencils.

    Returns a dense array up to 12 sites and a CSR matrix beyond (override with ``sparse``).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if grid.sites > ORACLE_CAP:
        raise ValueError(f"{grid.sites} sites exceed the oracle cap of {ORACLE_CAP}")
    if A.shape != (grid.dims, grid.dims):
        raise ValueError("A does not match the grid dimension")
    H = None
    for r in range(grid.dims):
        parts = [sp.identity(2**n, format="csr") for n in grid.qubits_per_dim]
        parts[r] = _second_difference(grid.qubits_per_dim[r], grid.spacing[r])
        term = parts[0]
        for p in parts[1:]:
            term = sp.kron(term, p, format="csr")
        H = -0.5 * term if H is None else H - 0.5 * term
    X = np.array(grid.mesh())
    V = 0.5 * np.einsum("ik,ij,jk->k", X, A, X)
    H = (H + sp.diags(V)).tocsr()
    if sparse is None:
        sparse = grid.sites > 12
    return H if sparse else H.toarray()


def dense_ground_state(matrix) -> tuple[float, np.ndarray]:
    """Minimal eigenpair; sign fixed so the largest-magnitude entry is positive."""
    if sp.issparse(matrix):
        asym = abs(matrix - matrix.T).max() if matrix.shape[0] else 0.0
    else:
        matrix = np.asarray(matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("expected a square matrix")
        asym = np.max(np.abs(matrix - matrix.conj().T)) if matrix.size else 0.0
    scale = max(1.0, float(abs(matrix).max()))
    if asym > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    dim = matrix.shape[0]
    if dim <= DENSE_EIG_LIMIT:
        M = matrix.toarray() if sp.issparse(matrix) else matrix
        w, v = scipy.linalg.eigh(M, subset_by_index=[0, 0])
        e, vec = float(w[0]), v[:, 0]
    else:
        M = matrix if sp.issparse(matrix) else sp.csr_matrix(matrix)
        # Gershgorin lower bound puts the shift below the whole spectrum
        d = M.diagonal()
        off = np.asarray(abs(M).sum(axis=1)).ravel() - np.abs(d)
        sigma = float(np.min(d - off)) - 1.0
        w, v = spla.eigsh(M, k=1, sigma=sigma, which="LM", tol=1e-14)
        vec = v[:, 0]
        e = float(np.real(np.vdot(vec, M @ vec)) / np.vdot(vec, vec).real)
    vec = vec / np.linalg.norm(vec)
    if vec[np.argmax(np.abs(vec))].real < 0:
        vec = -vec
    return e, vec


def grid_energy(grid: GridSpec, A, v: np.ndarray) -> float:
    """Rayleigh quotient as a sum of non-negative terms.

    Evaluating ``v @ H @ v`` loses about ``eps * ||H||`` to cancellation, which is
    1e-11 already at 12 sites; squared forward differences with zero padding do not.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    v = np.asarray(v)
    nrm2 = float(np.vdot(v, v).real)
    t = v.reshape([2**n for n in grid.qubits_per_dim])
    kin = 0.0
    for r, dx in enumerate(grid.spacing):
        pad = [(0, 0)] * grid.dims
        pad[r] = (1, 1)
        d = np.diff(np.pad(t, pad), axis=r)
        kin += float(np.sum(np.abs(d) ** 2)) / dx**2
    X = np.array(grid.mesh())
    V = 0.5 * np.einsum("ik,ij,jk->k", X, A, X)
    return (0.5 * kin + float(np.sum(V * np.abs(v) ** 2))) / nrm2


@lru_cache(maxsize=32)
def _cached_problem(qubits: tuple, lower: tuple, length: tuple, A_key: tuple) -> DenseProblem:
    grid = GridSpec(qubits, lower, length)
    d = len(qubits)
    A = np.array(A_key, dtype=float).reshape(d, d)
    H = dense_hamiltonian(grid, A)
    _, v = dense_ground_state(H)
    return DenseProblem(H, grid, grid_energy(grid, A, v), v)


def dense_problem(grid: GridSpec, A) -> DenseProblem:
    """Hamiltonian plus its ground pair, memoized per grid and potential."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return _cached_problem(grid.qubits_per_dim, grid.lower, grid.length, tuple(A.ravel()))


def dense_linear_solve(matrix, rhs: np.ndarray) -> np.ndarray:
    M = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
    return scipy.linalg.solve(M, rhs)


# ----------------------------------------------------------------------------- mirrors


@dataclass
class DenseTrajectory:
    energies: list[float]
    variances: list[float]
    vector: np.ndarray
    products: int
    steps: int
    converged: bool
    unstable: bool = False
    reason: str = ""


def _normalize(v):
    return v / np.linalg.norm(v)


def dense_solver_mirror(method: str, matrix, v0: np.ndarray, cfg: SolverConfig, stop: Callable[[float], bool] | None = None) -> DenseTrajectory:
    """Same update rules as the tensor-network solvers, on plain vectors and without truncation.

    ``stop(energy)`` may end the run early, mirroring the solver observers.
    """
    mv = (lambda x: matrix @ x) if not callable(matrix) else matrix
    psi = _normalize(np.asarray(v0, dtype=np.result_type(v0, float)))
    energies, variances = [], []
    products = 0
    unstable = False
    reason = "max steps"
    dt = cfg.rkf.initial_step if method == "rkf45" else cfg.delta_beta

    def finished() -> str | None:
        if not np.isfinite(energies[-1]):
            return "non-finite energy"
        if stop is not None and stop(energies[-1]):
            return "observer"
        if len(energies) > 1 and abs(energies[-1] - energies[-2]) < cfg.energy_tolerance:
            return "energy tolerance"
        if len(energies) - 1 >= cfg.max_steps:
            return "max steps"
        return None

    while True:
        phi = mv(psi)
        e = float(np.vdot(psi, phi).real)
        h2 = float(np.vdot(phi, phi).real)
        energies.append(e)
        variances.append(h2 - e * e)
        if method in IMAGINARY_TIME and e > energies[0] + RISE_SLACK * max(1.0, abs(energies[0])):
            unstable, reason = True, "unstable"
            break
        if method in ("gradient", "improved_gradient") and h2 - e * e < EIGENSTATE_VARIANCE * max(1.0, e * e):
            reason = "eigenstate"
            break
        why = finished()
        if why:
            reason = why
            break
        products += 1
        if method in IMAGINARY_TIME:
            a, b = TABLEAUX[method]
            while True:
                hs = [phi]
                for row in a:
                    y = psi - dt * sum(c * h for c, h in zip(row, hs))
                    hs.append(mv(y))
                    products += 1
                if method != "rkf45":
                    used = dt
                    break
                err = dt * np.linalg.norm(sum((c5 - c4) * h for c5, c4, h in zip(RKF5, b, hs)))
                tol = cfg.rkf.abs_tol + cfg.rkf.rel_tol
                factor = 4.0 if err == 0.0 else min(4.0, max(0.1, 0.9 * (tol / err) ** 0.2))
                if err <= tol or dt <= cfg.rkf.min_step:
                    used = dt
                    dt = snap_step(min(max(dt * factor, cfg.rkf.min_step), cfg.rkf.max_step))
                    break
                dt = snap_step(max(dt * factor, cfg.rkf.min_step))
            psi = _normalize(psi - used * sum(c * h for c, h in zip(b, hs)))
        elif method == "gradient":
            m2 = h2 - e * e
            m3 = float(np.vdot(phi, mv(phi)).real) - 3 * e * h2 + 2 * e**3
            db = optimal_step(e, m2, m3)
            psi = _normalize((1 - db * e) * psi + db * phi)
        elif method == "improved_gradient":
            h3 = float(np.vdot(phi, mv(phi)).real)
            km = KrylovMatrices(np.array([[e, h2], [h2, h3]]), np.array([[1.0, e], [e, h2]]))
            pair = solve_generalized_eig(km)
            if pair.rank < 2:
                reason = "eigenstate"
                break
            psi = _normalize(pair.vector[0] * psi + pair.vector[1] * phi)
        elif method == "arnoldi":
            basis = [psi]
            w = phi
            for j in range(1, cfg.n_v):
                if j > 1:
                    w = mv(basis[-1])
                    products += 1
                B = np.array(basis)
                N = B.conj() @ B.T
                c = np.linalg.lstsq(N, B.conj() @ w, rcond=None)[0]
                new = _normalize(w - c @ B)
                B2 = np.vstack([B, new])
                ev = np.linalg.eigvalsh(B2.conj() @ B2.T)
                if ev[0] < WHITEN_CUTOFF * ev[-1]:
                    break
                basis.append(new)
            if len(basis) == 1:
                reason = "eigenstate"
                break
            B = np.array(basis)
            HB = np.array([mv(v) for v in basis])
            km = KrylovMatrices(B.conj() @ HB.T, B.conj() @ B.T)
            pair = solve_generalized_eig(km)
            psi = _normalize(pair.vector @ B)
        else:
            raise ValueError(f"no dense mirror for {method!r}")
    return DenseTrajectory(energies, variances, psi, products, len(energies) - 1, reason in ("energy tolerance", "observer", "eigenstate"), unstable, reason)


def dense_source_mirror(D, g: np.ndarray, f0: np.ndarray, cfg: SolverConfig) -> DenseTrajectory:
    """Steepest descent on ``||D f - g||^2`` with the exact line step."""
    D = D.toarray() if sp.issparse(D) else np.asarray(D)
    f = np.asarray(f0, dtype=float).copy()
    costs = []
    reason = "max steps"
    while True:
        w = D @ f - g
        costs.append(float(w @ w))
        if costs[-1] < cfg.energy_tolerance:
            reason = "energy tolerance"
            break
        if len(costs) - 1 >= cfg.max_steps:
            break
        u = D.T @ w
        Du = D @ u
        if Du @ Du == 0:
            reason = "stalled"
            break
        f = f - (u @ u) / (Du @ Du) * u
    return DenseTrajectory(costs, [0.0] * len(costs), f, 3 * (len(costs) - 1), len(costs) - 1, reason == "energy tolerance", False, reason)


# ----------------------------------------------------------------------------- fixtures

FIXTURE_FILE = "oracle_fixtures.txt"
MEMORY_FIXTURE_FILE = "memory_fixtures.txt"


def benchmark_potential(problem: str, params: dict | None = None) -> np.ndarray:
    from .mpo import squeezing_matrix

    params = params or {}
    if problem == "ho1d":
        return np.array([[params.get("omega", 1.0) ** 2]])
    if problem == "squeezed2d":
        return squeezing_matrix(params.get("theta", math.pi / 4), params.get("sigma_max", 1.0), params.get("sigma_min", 0.5))
    raise ValueError(f"unknown problem {problem!r}")


def fixture_rows(text: str | None = None, name: str = FIXTURE_FILE) -> list[dict]:
    if text is None:
        text = resources.files("tnpde").joinpath("data", name).read_text()
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        problem, qubits, L, key, value = line.split()
        rows.append({"problem": problem, "qubits": int(qubits), "L": float(L), "key": key, "value": float(value)})
    return rows


def fixture_value(problem: str, qubits: int, L: float = 10.0, key: str = "E0", name: str = FIXTURE_FILE) -> float | None:
    for row in fixture_rows(name=name):
        if row["problem"] == problem and row["qubits"] == qubits and row["L"] == L and row["key"] == key:
            return row["value"]
    return None


def generate_fixtures(ho1d=range(2, 15), squeezed2d=range(2, 7), L: float = 10.0) -> str:
    """Plain-text table of reference ground energies (15 significant digits)."""
    lines = ["# problem qubits_per_dim L key value"]
    for n in ho1d:
        grid = GridSpec.symmetric(n, L)
        e = dense_problem(grid, benchmark_potential("ho1d")).ground_energy
        lines.append(f"ho1d {n} {L:g} E0 {e:.15g}")
    for n in squeezed2d:
        grid = GridSpec.symmetric(n, L, dims=2)
        e = dense_problem(grid, benchmark_potential("squeezed2d")).ground_energy
        lines.append(f"squeezed2d {n} {L:g} E0 {e:.15g}")
    return "\n".join(lines) + "\n"
