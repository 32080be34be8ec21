"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Tolerances and budgets are pinned as module constants. Every test records its
outcome before asserting, so the summary lists all ten criteria even when
some fail.
"""

import math
import time
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import dense_ref
from acceptance_log import record
from tnpde.algebra import apply_mpo, combine, simplify
from tnpde.bench import BenchmarkConfig, report_memory, run_benchmark, run_renormalized, run_single
from tnpde.calibration import best_fixed_step, calibrate_step, contraction_profile, min_ratio, stability_eigenvalue
from tnpde.grid import GridSpec
from tnpde.mpo import (
    expectation,
    hamiltonian,
    identity_mpo,
    mpo_add,
    mpo_from_dense,
    mpo_to_dense,
    position_mpo,
    quadratic_potential_mpo,
    second_derivative_mpo,
    shift_mpo,
)
from tnpde.mps import Truncation, inner, make_constant_mps, mps_from_dense, random_mps
from tnpde.oracle import dense_linear_solve, dense_problem, fixture_value
from tnpde.solvers import SolverConfig, gradient_descent_solve, solve
from tnpde.solvers.source import source_solve

pytestmark = pytest.mark.slow

ORACLE_TOL = 1e-10
ORACLE_CASES = 240
ORACLE_MIN_CASES = 200
FIG4_TARGET = 1e-10
FIG4_SIZES = range(4, 11)
FIG4_METHODS = ("gradient", "improved_gradient", "arnoldi")
COST_RERUN_SPREAD = 0.20
CALIBRATION_DEGRADE = 0.25
SWEEP_TOLS = (1e-6, 1e-8, 1e-10, 1e-12, None)
SWEEP_FACTOR = 1e3
SQUEEZED_TARGET = 1e-7
SQUEEZED_TRUNC = 1e-10
SQUEEZED_NV = 8  # Krylov cap for the 2D runs; not pinned by the criterion
MEMORY_TRUNC = 1e-10
MEMORY_SIZES = tuple(range(8, 21))
MEMORY_RATIO = 1e3
STEP_SCAN_POINTS = 200
STEP_SCAN_SLACK = 1e-12
POISSON_TOL = 1e-8
POISSON_STEPS = 20000

BUDGET_S = {1: 60, 2: 600, 3: 300, 4: 300, 5: 1800, 6: 600, 7: 60, 8: 60, 9: 120, 10: 60}


def fmt(x):
    return "inf" if x is None or not math.isfinite(x) else f"{x:.3g}"


def within_budget(number, t0):
    dt = time.perf_counter() - t0
    return dt <= BUDGET_S[number], f"{dt:.0f}s/{BUDGET_S[number]}s"


def solve_to_target(H, grid, method, e0, target, max_steps=400000, **kw):
    cfg = SolverConfig(method=method, max_steps=max_steps, energy_tolerance=1e-300, **kw)
    return solve(H, make_constant_mps(grid), cfg, lambda info: abs(info.energy - e0) < target)


def reached(report, e0, target):
    return abs(report.energy - e0) < target


# ----------------------------------------------------------------------------- 1


def random_grid(draw_dims, rng):
    if draw_dims == 1:
        n = int(rng.integers(1, 7))
        return GridSpec((n,), (float(rng.uniform(-6, 0)),), (float(rng.uniform(1, 12)),))
    qs = tuple(int(q) for q in rng.integers(1, 4, size=2))
    return GridSpec(qs, tuple(rng.uniform(-6, 0, size=2)), tuple(rng.uniform(1, 12, size=2)))


def register_dense(grid, dim, op):
    return dense_ref.embed([op if r == dim else np.eye(2**n) for r, n in enumerate(grid.qubits_per_dim)])


def random_operator(grid, rng):
    """A random constructor call paired with its hand-built dense matrix."""
    dim = int(rng.integers(grid.dims))
    n = grid.qubits_per_dim[dim]
    kind = int(rng.integers(5))
    if kind == 0:
        x = dense_ref.grid_values(n, grid.lower[dim], grid.length[dim])
        return position_mpo(grid, dim), register_dense(grid, dim, np.diag(x))
    if kind == 1:
        d = int(rng.choice([-1, 1]))
        S = dense_ref.shift_plus(n)
        return shift_mpo(grid, dim, d), register_dense(grid, dim, S if d == 1 else S.T)
    if kind == 2:
        return second_derivative_mpo(grid, dim), register_dense(grid, dim, dense_ref.second_difference(n, grid.spacing[dim]))
    B = rng.normal(size=(grid.dims, grid.dims))
    A = B + B.T
    if kind == 3:
        X = np.array(grid.mesh())
        return quadratic_potential_mpo(grid, A), np.diag(0.5 * np.einsum("ik,ij,jk->k", X, A, X))
    return hamiltonian(grid, A), dense_ref.hamiltonian(grid, A)


def close(x, y):
    x, y = np.asarray(x), np.asarray(y)
    return float(np.max(np.abs(x - y))) <= ORACLE_TOL * max(1.0, float(np.max(np.abs(y))))


ORACLE_RUNS = {"cases": 0, "fails": 0, "kinds": set()}
ORACLE_KINDS = ("constructor", "mpo_add", "inner", "expectation", "apply", "simplify", "combine")


@settings(max_examples=ORACLE_CASES, derandomize=True)
@given(seed=st.integers(0, 2**32 - 1), dims=st.sampled_from([1, 2]), kind=st.sampled_from(ORACLE_KINDS), cplx=st.booleans())
def oracle_cases(seed, dims, kind, cplx):
    rng = np.random.default_rng(seed)
    g = random_grid(dims, rng)
    if kind == "constructor":
        O, M = random_operator(g, rng)
        ok = close(mpo_to_dense(O), M)
    elif kind == "mpo_add":
        (O1, M1), (O2, M2) = random_operator(g, rng), random_operator(g, rng)
        ok = close(mpo_to_dense(mpo_add(O1, O2)), M1 + M2)
    elif kind == "inner":
        a, b = random_mps(g, 3, rng, cplx), random_mps(g, 3, rng, cplx)
        ok = close(inner(a, b), np.vdot(a.to_dense(), b.to_dense()))
    elif kind == "expectation":
        O, M = random_operator(g, rng)
        a, b = random_mps(g, 3, rng, cplx), random_mps(g, 2, rng, cplx)
        ok = close(expectation(a, O, b), np.vdot(a.to_dense(), M @ b.to_dense()))
    elif kind == "apply":
        O, M = random_operator(g, rng)
        psi = random_mps(g, 3, rng, cplx)
        ok = close(apply_mpo(O, psi, Truncation.machine()).state.to_dense(), M @ psi.to_dense())
    else:
        k = int(rng.integers(1, 4))
        states = [random_mps(g, int(rng.integers(1, 4)), rng, cplx) for _ in range(k)]
        coefs = rng.normal(size=k)
        target = sum(c * s.to_dense() for c, s in zip(coefs, states))
        if kind == "simplify":
            out = simplify(list(zip(coefs, states)), trunc=Truncation.machine())
        else:
            out = combine(coefs, states, Truncation.machine())
        ok = close(out.state.to_dense(), target)
    ORACLE_RUNS["cases"] += 1
    ORACLE_RUNS["fails"] += not ok
    ORACLE_RUNS["kinds"].add(kind)
    assert ok


def test_criterion_1():
    t0 = time.perf_counter()
    oracle_cases()
    fast, spent = within_budget(1, t0)
    n, bad = ORACLE_RUNS["cases"], ORACLE_RUNS["fails"]
    ok = n >= ORACLE_MIN_CASES and bad == 0 and len(ORACLE_RUNS["kinds"]) == len(ORACLE_KINDS) and fast
    record(1, ok, f"dense equivalence: {n - bad}/{n} randomized cases within {ORACLE_TOL:g} over {len(ORACLE_RUNS['kinds'])} operation kinds [{spent}]")
    assert ok


# ----------------------------------------------------------------------------- 2


def test_criterion_2():
    t0 = time.perf_counter()
    misses = []
    costs = {}
    for n in FIG4_SIZES:
        g = GridSpec.symmetric(n)
        H = hamiltonian(g, [[1.0]])
        e0 = fixture_value("ho1d", n)
        for m in FIG4_METHODS:
            r = solve_to_target(H, g, m, e0, FIG4_TARGET)
            if not reached(r, e0, FIG4_TARGET):
                misses.append((n, m, abs(r.energy - e0)))
            elif n == 8:
                costs[m] = r.ledger.rescaled_cost

    n = 8
    g = GridSpec.symmetric(n)
    H = hamiltonian(g, [[1.0]])
    e0 = fixture_value("ho1d", n)
    spectrum = np.linalg.eigvalsh(dense_problem(g, [[1.0]]).matrix)
    for m in ("euler", "heun", "rk4", "rkf45"):
        kw = {"delta_beta": best_fixed_step(m, spectrum)[0]} if m in ("euler", "heun", "rk4") else {}
        r = solve_to_target(H, g, m, e0, FIG4_TARGET, **kw)
        costs[m] = r.ledger.rescaled_cost if reached(r, e0, FIG4_TARGET) else math.inf
    for m in FIG4_METHODS:
        costs.setdefault(m, math.inf)
    rerun = {m: solve_to_target(H, g, m, e0, FIG4_TARGET).ledger.rescaled_cost for m in ("arnoldi", "gradient")}
    spread = max(abs(rerun[m] - costs[m]) / costs[m] for m in rerun)
    cheapest = min(costs, key=costs.get)
    strict = all(costs["arnoldi"] < c for m, c in costs.items() if m != "arnoldi")
    fast, spent = within_budget(2, t0)
    ok = not misses and strict and spread <= COST_RERUN_SPREAD and fast
    table = ", ".join(f"{m}={fmt(c)}" for m, c in sorted(costs.items(), key=lambda kv: kv[1]))
    record(2, ok, f"n=4..10 x {len(FIG4_METHODS)} methods reach eps<{FIG4_TARGET:g}: {'all' if not misses else misses}; "
                  f"n=8 cost-to-target {table}; cheapest={cheapest}; rerun spread {spread:.0%} [{spent}] "
                  "(dmrg has no cost factor and is not ranked)")
    assert ok


# ----------------------------------------------------------------------------- 3


def test_criterion_3():
    t0 = time.perf_counter()
    rows = []
    ok = True
    for n in (4, 5, 6, 7):
        g = GridSpec.symmetric(n)
        H = hamiltonian(g, [[1.0]])
        e0 = fixture_value("ho1d", n)
        e_max = np.linalg.eigvalsh(dense_problem(g, [[1.0]]).matrix)[-1]

        def euler_cost(db):
            r = solve_to_target(H, g, "euler", e0, FIG4_TARGET, max_steps=40000, delta_beta=max(db, 1e-12))
            return r.ledger.rescaled_cost if reached(r, e0, FIG4_TARGET) and not r.unstable else math.inf

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            cal = calibrate_step(euler_cost, None, (0.0, 3.0 / e_max), 16)
        base = cal.merit
        half, double = euler_cost(cal.delta_beta / 2), euler_cost(cal.delta_beta * 2)
        grad = [
            solve_to_target(H, g, "gradient", e0, FIG4_TARGET, delta_beta=f * cal.delta_beta).ledger.rescaled_cost
            for f in (0.5, 1.0, 2.0)
        ]
        worse = all(c == math.inf or c >= (1 + CALIBRATION_DEGRADE) * base for c in (half, double))
        flat = len(set(grad)) == 1
        ok &= math.isfinite(base) and worse and flat
        rows.append(f"n={n}: euler {fmt(base)} -> half {fmt(half)}, double {fmt(double)}; gradient {fmt(grad[1])} x3")
    fast, spent = within_budget(3, t0)
    ok &= fast
    record(3, ok, f"calibration burden: {'; '.join(rows)} [{spent}]")
    assert ok


# ----------------------------------------------------------------------------- 4


def test_criterion_4():
    t0 = time.perf_counter()
    n = 8
    g = GridSpec.symmetric(n)
    H = hamiltonian(g, [[1.0]])
    e0 = fixture_value("ho1d", n)
    eps, bonds, bounds = [], [], []
    for tol in SWEEP_TOLS:
        trunc = Truncation.machine() if tol is None else Truncation(tol)
        r = solve(H, make_constant_mps(g), SolverConfig(method="arnoldi", n_v=3, trunc=trunc, max_steps=3000, energy_tolerance=1e-15))
        eps.append(abs(r.energy - e0))
        bonds.append(max(r.max_bonds))
        bounds.append(SWEEP_FACTOR * trunc.tolerance)
    mono_eps = all(b <= a for a, b in zip(eps, eps[1:]))
    mono_bond = all(b >= a for a, b in zip(bonds, bonds[1:]))
    within = [e <= b for e, b in zip(eps, bounds)]
    fast, spent = within_budget(4, t0)
    ok = mono_eps and mono_bond and all(within) and fast
    labels = [Truncation.machine().label() if t is None else f"{t:g}" for t in SWEEP_TOLS]
    rows = ", ".join(f"{l}: eps={fmt(e)}{'' if w else ' (>1e3*tol)'} D={d}" for l, e, d, w in zip(labels, eps, bonds, within))
    record(4, ok, f"truncation sweep n=8: {rows}; eps monotone={mono_eps}, bond monotone={mono_bond} [{spent}]")
    assert ok


# ----------------------------------------------------------------------------- 5


def test_criterion_5():
    t0 = time.perf_counter()
    trunc = Truncation(SQUEEZED_TRUNC)
    arn = BenchmarkConfig(problem="squeezed2d", qubits=(4, 5, 6), target_epsilon=SQUEEZED_TARGET,
                          solver=SolverConfig(method="arnoldi", n_v=SQUEEZED_NV, max_steps=5000, energy_tolerance=1e-15, trunc=trunc))
    ren = run_renormalized(arn)
    dm = BenchmarkConfig(problem="squeezed2d", qubits=(5, 6), target_epsilon=SQUEEZED_TARGET,
                         solver=SolverConfig(method="dmrg", max_steps=100, energy_tolerance=1e-15, trunc=trunc))
    dmrg = {n: run_single(dm, n) for n in (5, 6)}
    cold = {r.qubits: r for r in ren.cold}
    warm = {r.qubits: r for r in ren.warm}
    both = all(dmrg[n].reached_target and cold[n].reached_target for n in (5, 6))
    fewer = all(dmrg[n].steps < cold[n].steps for n in (5, 6))
    warm_wins = {n: warm[n].reached_target and warm[n].steps < cold[n].steps for n in (5, 6)}
    fast, spent = within_budget(5, t0)
    ok = both and fewer and all(warm_wins.values()) and fast
    rows = "; ".join(
        f"n={n}: dmrg {dmrg[n].steps} sweeps eps={fmt(dmrg[n].final.epsilon)}, arnoldi cold {cold[n].steps} eps={fmt(cold[n].final.epsilon)}, "
        f"warm {warm[n].steps}{'' if warm_wins[n] else ' (not fewer)'}"
        for n in (5, 6)
    )
    walls = (sum(r.wall_time for r in ren.warm), sum(r.wall_time for r in ren.cold))
    record(5, ok, f"squeezed 2D to eps<{SQUEEZED_TARGET:g}, arnoldi nv={SQUEEZED_NV}: {rows} [{spent}]; "
                  f"wall warm {walls[0]:.1f}s vs cold {walls[1]:.1f}s (not counted)")
    assert ok


# ----------------------------------------------------------------------------- 6


def test_criterion_6():
    t0 = time.perf_counter()
    cfg = BenchmarkConfig(qubits=MEMORY_SIZES, oracle_cap=12,
                          solver=SolverConfig(method="dmrg", trunc=Truncation(MEMORY_TRUNC), max_steps=30, energy_tolerance=1e-12))
    runs = run_renormalized(cfg, cold=False).warm
    N = np.array([r.qubits for r in runs], dtype=float)
    params = np.array([report_memory(r.report)["mps_params"] for r in runs], dtype=float)
    slope = float(np.polyfit(np.log(N), np.log(params), 1)[0])
    ratio = report_memory(runs[-1].report)["ratio"]
    energies = [r.final.energy for r in runs]
    fast, spent = within_budget(6, t0)
    ok = len(runs) == len(MEMORY_SIZES) and slope < 2.0 and ratio > MEMORY_RATIO and fast
    record(6, ok, f"memory at trunc {MEMORY_TRUNC:g}: params {int(params[0])}..{int(params[-1])} for N={int(N[0])}..{int(N[-1])}, "
                  f"log-log slope {slope:.2f}, dense/MPS ratio at N=20 {ratio:.0f}; "
                  f"energies {energies[0]:.6f}..{max(energies[:-2]):.6f} up to N=18, {energies[-2]:.3f}/{energies[-1]:.3f} at N=19/20 [{spent}]")
    assert ok


# ----------------------------------------------------------------------------- 7

FLAG_CHECKS = {"cases": 0, "fails": 0}


def taylor_lambda(order, z):
    return np.polynomial.polynomial.polyval(-np.asarray(z), [1 / math.factorial(j) for j in range(order + 1)])


@settings(max_examples=300, derandomize=True)
@given(st.sampled_from([("euler", 1), ("heun", 2), ("rk4", 4)]), st.floats(0.0, 3.0),
       st.lists(st.floats(0.0, 10.0), min_size=2, max_size=8))
def flag_cases(method_order, db, es):
    method, order = method_order
    es = sorted(es)
    lam = taylor_lambda(order, db * np.array(es))
    if lam[0] == 0.0:
        return
    expected = bool(np.any(np.abs(lam[1:] / lam[0]) >= 1.0))
    got = contraction_profile(method, db, es).unstable
    FLAG_CHECKS["cases"] += 1
    FLAG_CHECKS["fails"] += got != expected
    assert got == expected


def test_criterion_7():
    t0 = time.perf_counter()
    z = np.linspace(0.0, 0.1, 201)
    series_ok = True
    for method, p in (("euler", 1), ("heun", 2), ("rk4", 4)):
        err = np.array([abs(stability_eigenvalue(method, x, 1.0) - math.exp(-x)) for x in z])
        lead = z ** (p + 1) / math.factorial(p + 1)
        series_ok &= bool(np.all(err <= lead * 1.01 + 4e-16))
        big = z >= 0.02
        series_ok &= bool(np.all(err[big] >= 0.85 * lead[big]))
    w = np.linalg.eigvalsh(dense_problem(GridSpec.symmetric(3, 10.0), [[1.0]]).matrix)
    r_euler, db_euler = min_ratio("euler", w, (0.0, 1.0))
    r_rk4, db_rk4 = min_ratio("rk4", w, (0.0, 1.0))
    flag_cases()
    flags_ok = FLAG_CHECKS["cases"] >= 200 and FLAG_CHECKS["fails"] == 0
    fast, spent = within_budget(7, t0)
    ok = series_ok and r_euler < r_rk4 and flags_ok and fast
    record(7, ok, f"stability: series order check {'ok' if series_ok else 'off'} on z in [0,0.1]; min |r_1| euler {r_euler:.4f} "
                  f"(db={db_euler:.3f}) vs rk4 {r_rk4:.4f} (db={db_rk4:.3f}); instability flag exact on "
                  f"{FLAG_CHECKS['cases'] - FLAG_CHECKS['fails']}/{FLAG_CHECKS['cases']} spectra [{spent}]")
    assert ok


# ----------------------------------------------------------------------------- 8


def test_criterion_8():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_gap, monotone = -math.inf, True
    for _ in range(50):
        B = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
        M = (B + B.conj().T) / 2
        H = mpo_from_dense(M, GridSpec.unit(4))
        v = rng.normal(size=16) + 1j * rng.normal(size=16)
        v /= np.linalg.norm(v)
        psi = mps_from_dense(v, GridSpec.unit(4))
        one = gradient_descent_solve(H, psi, SolverConfig(method="gradient", max_steps=1, energy_tolerance=1e-300))
        E = np.vdot(v, M @ v).real
        u = M @ v - E * v
        sigma = np.linalg.norm(u)
        scan = []
        for db in np.linspace(-4 / sigma, 4 / sigma, STEP_SCAN_POINTS):
            w = v + db * u
            scan.append(np.vdot(w, M @ w).real / np.vdot(w, w).real)
        worst_gap = max(worst_gap, one.energies[1] - min(scan))
        run = gradient_descent_solve(H, psi, SolverConfig(method="gradient", max_steps=40, energy_tolerance=1e-300))
        monotone &= bool(np.all(np.diff(run.energies) <= 1e-12))
    fast, spent = within_budget(8, t0)
    ok = worst_gap <= STEP_SCAN_SLACK and monotone and fast
    record(8, ok, f"optimal gradient step on 50 random 16x16 Hermitian: max(E_closed - E_scan) = {worst_gap:.2e} "
                  f"(<= {STEP_SCAN_SLACK:g}), monotone descent {monotone} [{spent}]")
    assert ok


# ----------------------------------------------------------------------------- 9


def test_criterion_9():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    g = GridSpec.symmetric(5)
    target = random_mps(g, 3, rng)
    ident = source_solve(identity_mpo(g), target, make_constant_mps(g), SolverConfig(method="gradient", energy_tolerance=1e-20))
    ident_ok = ident.steps == 1 and ident.converged and np.allclose(ident.state.to_dense(), target.to_dense(), atol=1e-12)

    g6 = GridSpec.symmetric(6)
    D = second_derivative_mpo(g6)
    x = g6.points(0)
    rhs = -np.sin(np.pi * x / 5) * (np.pi / 5) ** 2
    exact = dense_linear_solve(mpo_to_dense(D), rhs)
    cfg = SolverConfig(method="gradient", max_steps=POISSON_STEPS, energy_tolerance=1e-300)
    r = source_solve(D, mps_from_dense(rhs, g6), make_constant_mps(g6), cfg)
    rel = np.linalg.norm(r.state.to_dense() - exact) / np.linalg.norm(exact)
    fast, spent = within_budget(9, t0)
    # two-direction variant, reported for context only
    alt = source_solve(D, mps_from_dense(rhs, g6), make_constant_mps(g6), cfg.replace(method="improved_gradient"))
    rel_alt = np.linalg.norm(alt.state.to_dense() - exact) / np.linalg.norm(exact)
    ok = ident_ok and rel <= POISSON_TOL and fast
    record(9, ok, f"source problems: identity in {ident.steps} step(s) {'ok' if ident_ok else 'off'}; Poisson n=6 steepest descent "
                  f"rel. error {rel:.2e} after {r.steps} steps (need <= {POISSON_TOL:g}) [{spent}]; "
                  f"two-direction variant reaches {rel_alt:.1e} (not counted)")
    assert ok


# ----------------------------------------------------------------------------- 10


def strip_wall(text):
    return [line.rsplit(",", 1)[0] for line in text.splitlines()]


def test_criterion_10(tmp_path):
    t0 = time.perf_counter()
    configs = [
        BenchmarkConfig(qubits=5, initial="random", seed=11, solver=SolverConfig(method=m, delta_beta=0.004, max_steps=25))
        for m in ("euler", "heun", "rk4", "rkf45", "gradient", "improved_gradient", "arnoldi", "dmrg")
    ]
    configs.append(BenchmarkConfig(problem="squeezed2d", qubits=3, seed=3, initial="random",
                                   solver=SolverConfig(method="arnoldi", trunc=Truncation(1e-8), max_steps=40)))
    configs.append(BenchmarkConfig(qubits=(4, 5), warm_start=True, target_epsilon=1e-6, solver=SolverConfig(method="arnoldi", max_steps=200)))
    same = 0
    for i, cfg in enumerate(configs):
        texts = []
        for rep in range(2):
            cfg.output = str(tmp_path / f"c{i}_{rep}")
            texts.append([strip_wall(r.csv_text()) for r in run_benchmark(cfg)])
        same += texts[0] == texts[1]
    fast, spent = within_budget(10, t0)
    ok = same == len(configs) and fast
    record(10, ok, f"determinism: {same}/{len(configs)} configs give identical CSV apart from wall_ms [{spent}]")
    assert ok
