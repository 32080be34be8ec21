"""Benchmark runner: problem construction, figures of merit, CSV/JSON output."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from . import __version__
from .algebra import exact_norm, interpolate_double
from .grid import GridSpec
from .mpo import Mpo, continuum_ground_energy, expectation, hamiltonian
from .mps import DENSE_CAP, MpsState, Truncation, make_constant_mps, random_mps
from .oracle import FIXTURE_FILE, MEMORY_FIXTURE_FILE, DenseProblem, benchmark_potential, dense_problem
from .solvers import SolverConfig, SolverReport, StepInfo, solve
from .solvers.base import CostLedger, RkfParams

CSV_COLUMNS = (
    "step", "energy", "epsilon", "norm1", "infidelity", "sigma", "products",
    "combinations", "sweeps", "rescaled_cost", "max_bond", "params", "wall_ms",
)
# beyond the oracle cap epsilon is measured against the continuum energy
CONTINUUM_EPSILON = "epsilon_continuum"
PROBLEMS = ("ho1d", "squeezed2d")
DEFAULT_PARAMS = {
    "ho1d": {"omega": 1.0},
    "squeezed2d": {"theta": math.pi / 4, "sigma_max": 1.0, "sigma_min": 0.5},
}


@dataclass
class BenchmarkConfig:
    problem: str = "ho1d"
    params: dict = field(default_factory=dict)
    L: float = 10.0
    qubits: int | tuple[int, ...] = 8
    solver: SolverConfig = field(default_factory=SolverConfig)
    warm_start: bool = False
    output: str | None = None
    seed: int = 0
    # stop once epsilon falls below this (needs the oracle); None runs to the solver's own rule
    target_epsilon: float | None = None
    initial: str = "constant"
    oracle_cap: int = 16

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; choose from {PROBLEMS}")
        q = self.qubit_list
        if any(n < 1 for n in q) or list(q) != sorted(set(q)):
            raise ValueError("qubits must be positive and strictly ascending")
        if self.L <= 0:
            raise ValueError("L must be positive")
        if self.initial not in ("constant", "random"):
            raise ValueError("initial must be 'constant' or 'random'")
        self.params = {**DEFAULT_PARAMS[self.problem], **self.params}

    @property
    def qubit_list(self) -> list[int]:
        return [self.qubits] if isinstance(self.qubits, int) else list(self.qubits)

    @property
    def dims(self) -> int:
        return 1 if self.problem == "ho1d" else 2

    def grid(self, n: int) -> GridSpec:
        return GridSpec.symmetric(n, self.L, dims=self.dims)

    def potential(self) -> np.ndarray:
        return benchmark_potential(self.problem, self.params)

    def to_dict(self) -> dict:
        s = self.solver
        solver = {k: getattr(s, k) for k in ("method", "delta_beta", "n_v", "max_steps", "energy_tolerance", "max_sweeps", "seed")}
        solver["trunc"] = {"tolerance": s.trunc.tolerance, "max_bond": s.trunc.max_bond, "mode": s.trunc.mode}
        solver["rkf"] = asdict(s.rkf)
        q = self.qubits if isinstance(self.qubits, int) else list(self.qubits)
        return {
            "problem": self.problem, "params": dict(self.params), "L": self.L, "qubits": q,
            "solver": solver, "warm_start": self.warm_start, "output": self.output, "seed": self.seed,
            "target_epsilon": self.target_epsilon, "initial": self.initial, "oracle_cap": self.oracle_cap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkConfig":
        d = dict(d)
        s = dict(d.pop("solver", {}) or {})
        if "trunc" in s:
            t = s["trunc"]
            s["trunc"] = Truncation(**t) if isinstance(t, dict) else Truncation.machine() if t in ("machine", None) else Truncation(float(t))
        if "rkf" in s:
            s["rkf"] = RkfParams(**s["rkf"])
        q = d.get("qubits", 8)
        if isinstance(q, str):
            q = parse_qubits(q)
        elif isinstance(q, list):
            q = tuple(q)
        d["qubits"] = q
        return cls(solver=SolverConfig(**s), **d)

    @classmethod
    def load(cls, path: str | Path) -> "BenchmarkConfig":
        """JSON, or ``key = value`` lines with dotted keys for solver fields."""
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            data = _parse_key_values(text)
        return cls.from_dict(data)


def parse_qubits(text: str) -> int | tuple[int, ...]:
    """``"8"`` -> 8, ``"4-6"`` or ``"4:6"`` -> (4, 5, 6), ``"4,6"`` -> (4, 6)."""
    text = text.strip()
    for sep in ("-", ":"):
        if sep in text:
            lo, hi = (int(t) for t in text.split(sep))
            return tuple(range(lo, hi + 1))
    if "," in text:
        return tuple(int(t) for t in text.split(","))
    return int(text)


def _scalar(v: str):
    try:
        return json.loads(v)
    except json.JSONDecodeError:
        return v


def _parse_key_values(text: str) -> dict:
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (t.strip() for t in line.split("=", 1))
        node = out
        *head, last = key.split(".")
        for part in head:
            node = node.setdefault(part, {})
        node[last] = _scalar(value)
    return out


# ----------------------------------------------------------------------------- metrics


@dataclass
class MetricsRecord:
    step: int
    energy: float
    epsilon: float | None
    norm1: float | None
    infidelity: float | None
    sigma: float
    ledger: CostLedger
    mps_parameter_count: int
    max_bond: int
    wall_time: float = 0.0
    epsilon_is_continuum: bool = False

    def row(self) -> dict:
        return {
            "step": self.step,
            "energy": self.energy,
            "epsilon": self.epsilon,
            "norm1": self.norm1,
            "infidelity": self.infidelity,
            "sigma": self.sigma,
            "products": self.ledger.mpo_mps_products,
            "combinations": self.ledger.mps_combinations,
            "sweeps": self.ledger.simplification_sweeps,
            "rescaled_cost": self.ledger.rescaled_cost,
            "max_bond": self.max_bond,
            "params": self.mps_parameter_count,
            "wall_ms": 1e3 * self.wall_time,
        }


def energy_moments(psi: MpsState, H: Mpo) -> tuple[float, float]:
    """Exact ``<H>`` and ``<H^2>`` of the normalized state, no truncation involved."""
    env = np.ones((1, 1, 1, 1))
    for a, w in zip(psi.tensors, H.tensors):
        env = np.einsum("auvb,atc,ustx,vsry,brd->cxyd", env, a.conj(), w.conj(), w, a, optimize=True)
    n2 = psi.norm() ** 2
    h2 = float(env.reshape(-1)[0].real) / n2
    e = float(expectation(psi, H, psi).real) / n2
    return e, h2


def energy_spread(psi: MpsState, H: Mpo) -> tuple[float, float]:
    """``<H>`` and ``sigma = ||(H - <H>) psi||`` for the normalized state.

    Equal to ``sqrt(<H^2> - <H>^2)`` but without the cancellation, which would
    floor sigma near ``sqrt(eps) * ||H||``.
    """
    nrm = psi.norm()
    e = float(expectation(psi, H, psi).real) / nrm**2
    sigma = exact_norm([(1.0, H, psi), (-e, None, psi)]) / nrm
    return e, sigma


def compute_metrics(
    state: MpsState,
    H: Mpo,
    oracle: DenseProblem | None = None,
    *,
    energy: float | None = None,
    step: int = 0,
    ledger: CostLedger | None = None,
    wall_time: float = 0.0,
    continuum_energy: float | None = None,
) -> MetricsRecord:
    """Figures of merit for one state.

    ``energy`` defaults to the exact Rayleigh quotient; solvers pass the value
    they report. Without an oracle, epsilon falls back to ``continuum_energy``
    when given and the vector metrics are left empty.
    """
    e_exact, sigma = energy_spread(state, H)
    e = e_exact if energy is None else float(energy)
    eps = norm1 = infid = None
    continuum = False
    if oracle is not None:
        if oracle.grid.sites != state.size or (state.grid is not None and state.grid != oracle.grid):
            raise ValueError("oracle grid does not match the state")
        eps = abs(oracle.ground_energy - e)
        v = state.to_dense()
        v = v / np.linalg.norm(v)
        ov = np.vdot(oracle.ground_vector, v)
        phase = ov / abs(ov) if abs(ov) > 0 else 1.0
        norm1 = float(np.sum(np.abs(v * np.conj(phase) - oracle.ground_vector)))
        infid = float(min(max(1.0 - abs(ov) ** 2, 0.0), 1.0))
    elif continuum_energy is not None:
        eps = abs(continuum_energy - e)
        continuum = True
    return MetricsRecord(
        step, e, eps, norm1, infid, sigma, ledger or CostLedger(), state.param_count, state.max_bond, wall_time, continuum
    )


def report_memory(state: MpsState | SolverReport) -> dict:
    """MPS parameter count against the dense vector length."""
    if isinstance(state, SolverReport):
        state = state.state
    dense = 2**state.size
    params = state.param_count
    return {"sites": state.size, "bond_dims": state.bond_dims, "mps_params": params, "dense_params": dense, "ratio": dense / params}


# ----------------------------------------------------------------------------- runs


@dataclass
class RunResult:
    qubits: int
    records: list[MetricsRecord]
    report: SolverReport | None
    epsilon_column: str = "epsilon"
    failed: str | None = None

    @property
    def steps(self) -> int:
        return self.records[-1].step if self.records else 0

    @property
    def final(self) -> MetricsRecord:
        return self.records[-1]

    @property
    def wall_time(self) -> float:
        return self.records[-1].wall_time if self.records else 0.0

    @property
    def reached_target(self) -> bool:
        return bool(self.report is not None and self.report.reason == "observer")

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = list(CSV_COLUMNS)
        header[2] = self.epsilon_column
        w.writerow(header)
        for r in self.records:
            w.writerow([_fmt(k, v) for k, v in r.row().items()])
        return buf.getvalue()


def _fmt(key: str, v) -> str:
    if v is None:
        return ""
    if key == "wall_ms":
        return f"{v:.3f}"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _oracle_for(cfg: BenchmarkConfig, grid: GridSpec) -> DenseProblem | None:
    if grid.sites > min(cfg.oracle_cap, DENSE_CAP):
        return None
    return dense_problem(grid, cfg.potential())


def _initial_state(cfg: BenchmarkConfig, grid: GridSpec) -> MpsState:
    if cfg.initial == "random":
        return random_mps(grid, 2, np.random.default_rng(cfg.seed))
    return make_constant_mps(grid)


def run_single(cfg: BenchmarkConfig, n: int, psi0: MpsState | None = None) -> RunResult:
    """Solve at ``n`` qubits per dimension, recording metrics at every outer step."""
    grid = cfg.grid(n)
    H = hamiltonian(grid, cfg.potential())
    oracle = _oracle_for(cfg, grid)
    e_cont = None if oracle is not None else continuum_ground_energy(cfg.potential())
    records: list[MetricsRecord] = []
    spent = [0.0]
    t0 = time.perf_counter()

    def observer(info: StepInfo):
        tm = time.perf_counter()
        wall = tm - t0 - spent[0]
        rec = compute_metrics(
            info.state, H, oracle, energy=info.energy, step=info.step, ledger=info.ledger,
            wall_time=wall, continuum_energy=e_cont,
        )
        records.append(rec)
        spent[0] += time.perf_counter() - tm
        return cfg.target_epsilon is not None and rec.epsilon is not None and rec.epsilon < cfg.target_epsilon

    psi = psi0 if psi0 is not None else _initial_state(cfg, grid)
    solver_cfg = cfg.solver.replace(seed=cfg.seed)
    report = None
    failed = None
    try:
        report = solve(H, psi, solver_cfg, observer)
    except (FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        failed = f"{type(exc).__name__}: {exc}"
    col = CONTINUUM_EPSILON if oracle is None else "epsilon"
    return RunResult(n, records, report, col, failed)


def _manifest(cfg: BenchmarkConfig, results: Sequence[RunResult], extra: dict | None = None) -> dict:
    data = resources.files("tnpde").joinpath("data")
    hashes = {f: hashlib.sha256(data.joinpath(f).read_bytes()).hexdigest() for f in (FIXTURE_FILE, MEMORY_FIXTURE_FILE)}
    runs = []
    for r in results:
        runs.append({
            "qubits": r.qubits,
            "steps": r.steps,
            "converged": bool(r.report.converged) if r.report else False,
            "reason": r.report.reason if r.report else "failed",
            "failed": r.failed,
            "epsilon_column": r.epsilon_column,
            "unstable": bool(r.report.unstable) if r.report else False,
            "final_energy": r.final.energy if r.records else None,
        })
    out = {
        "config": cfg.to_dict(),
        "versions": {"tnpde": __version__, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
        "fixtures": hashes,
        "continuum_ground_energy": continuum_ground_energy(cfg.potential()),
        "csv_columns": list(CSV_COLUMNS),
        "runs": runs,
    }
    if extra:
        out.update(extra)
    return out


def _write(cfg: BenchmarkConfig, results: Sequence[RunResult], manifest: dict, tag: str = "") -> None:
    if not cfg.output:
        return
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    for r in results:
        name = f"{cfg.problem}_n{r.qubits}_{cfg.solver.method}{tag}.csv"
        (out / name).write_text(r.csv_text())
    (out / f"manifest{tag}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o).__name__)


def run_benchmark(cfg: BenchmarkConfig) -> list[RunResult]:
    """Cold-start runs at each qubit count (warm-started chain if ``cfg.warm_start``)."""
    if cfg.warm_start and len(cfg.qubit_list) > 1:
        return run_renormalized(cfg).warm
    results = [run_single(cfg, n) for n in cfg.qubit_list]
    _write(cfg, results, _manifest(cfg, results))
    return results


@dataclass
class RenormalizedResult:
    warm: list[RunResult]
    cold: list[RunResult]

    def summary(self) -> list[dict]:
        rows = []
        for w, c in zip(self.warm, self.cold):
            rows.append({
                "qubits": w.qubits, "warm_steps": w.steps, "cold_steps": c.steps,
                "warm_wall_s": w.wall_time, "cold_wall_s": c.wall_time,
                "warm_reached": w.reached_target, "cold_reached": c.reached_target,
            })
        return rows


def refine_state(psi: MpsState, trunc: Truncation | None = None) -> MpsState:
    """Interpolate onto the grid with one more qubit in every dimension."""
    for dim in range(psi.grid.dims):
        psi = interpolate_double(psi, dim, trunc)
    return psi.normalized()


def run_renormalized(cfg: BenchmarkConfig, cold: bool = True) -> RenormalizedResult:
    """Solve at the smallest size, then warm start each larger size from the interpolated
    previous solution; cold-start runs at the same sizes serve as the baseline."""
    qs = cfg.qubit_list
    warm: list[RunResult] = []
    prev: MpsState | None = None
    for n in qs:
        if prev is not None and prev.grid.qubits_per_dim[0] + 1 != n:
            raise ValueError("warm-start chains need consecutive qubit counts")
        psi0 = None if prev is None else refine_state(prev, cfg.solver.trunc)
        res = run_single(cfg, n, psi0)
        warm.append(res)
        if res.report is None:
            break
        prev = res.report.state
    colds = [run_single(cfg, n) for n in qs[: len(warm)]] if cold else []
    out = RenormalizedResult(warm, colds)
    _write(cfg, warm, _manifest(cfg, warm, {"renormalization": out.summary()}), tag="_warm")
    if colds:
        _write(cfg, colds, _manifest(cfg, colds), tag="_cold")
    return out
