"""Shared solver plumbing: configuration, cost ledger, reports and instrumented algebra."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..algebra import SimplifyOutcome, apply_mpo, fit
from ..mpo import Mpo, expectation
from ..mps import MpsState, Truncation, inner

IMAGINARY_TIME = ("euler", "heun", "rk4", "rkf45")
METHODS = IMAGINARY_TIME + ("gradient", "improved_gradient", "arnoldi", "dmrg")


def cost_factor(method: str, n_v: int = 3) -> float | None:
    """Per-step cost factor ``C`` used for the rescaled cost ``C * k``."""
    table = {"euler": 7.0, "heun": 14.0, "rk4": 28.0, "rkf45": 43.0, "gradient": 13.0, "improved_gradient": 13.0}
    if method in table:
        return table[method]
    if method == "arnoldi":
        return (6.0 * (n_v - 2) + 13.0) / (n_v - 1)
    return None


@dataclass(frozen=True)
class RkfParams:
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    initial_step: float = 0.01
    min_step: float = 1e-8
    max_step: float = 10.0


@dataclass(frozen=True)
class SolverConfig:
    """Knobs shared by every solver; each method reads the subset it needs."""

    method: str = "arnoldi"
    delta_beta: float = 0.01
    n_v: int = 3
    max_steps: int = 1000
    energy_tolerance: float = 1e-12
    trunc: Truncation = field(default_factory=Truncation.machine)
    rkf: RkfParams = field(default_factory=RkfParams)
    max_sweeps: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.n_v < 2:
            raise ValueError("n_v must be >= 2")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not self.energy_tolerance > 0 or not self.delta_beta > 0:
            raise ValueError("tolerances and delta_beta must be positive")

    def replace(self, **changes) -> "SolverConfig":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return SolverConfig(**kw)


@dataclass
class CostLedger:
    """Instrumented operation counts plus the rescaled cost ``C * steps``."""

    method: str = ""
    n_v: int = 3
    mpo_mps_products: int = 0
    mps_combinations: int = 0
    simplification_sweeps: int = 0
    cost_steps: int = 0
    expectations: int = 0

    @property
    def factor(self) -> float | None:
        return cost_factor(self.method, self.n_v)

    @property
    def rescaled_cost(self) -> float:
        c = self.factor
        return math.nan if c is None else c * self.cost_steps

    def snapshot(self) -> "CostLedger":
        return copy.copy(self)


@dataclass
class StepInfo:
    """What observers see after each recorded step."""

    step: int
    energy: float
    variance: float
    state: MpsState
    ledger: CostLedger


@dataclass
class SolverReport:
    energies: list[float]
    variances: list[float]
    state: MpsState
    ledger: CostLedger
    converged: bool
    steps: int
    reason: str = ""
    unstable: bool = False
    log_norm: float = 0.0
    costs: list[float] = field(default_factory=list)
    ledgers: list[CostLedger] = field(default_factory=list)
    max_bonds: list[int] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def energy(self) -> float:
        return self.energies[-1]

    @property
    def states(self) -> MpsState:
        return self.state


Observer = Callable[[StepInfo], "bool | None"]


class Workspace:
    """Counts every expensive call made on behalf of a solver."""

    def __init__(self, H: Mpo, cfg: SolverConfig):
        self.H = H
        self.cfg = cfg
        self.ledger = CostLedger(cfg.method, cfg.n_v)

    def apply(self, psi: MpsState, op: Mpo | None = None, count: bool = True) -> SimplifyOutcome:
        """Truncated ``H psi``; measurement-only products pass ``count=False`` and are
        charged later with :meth:`charge` if they end up feeding an update."""
        out = apply_mpo(op or self.H, psi, self.cfg.trunc, max_sweeps=self.cfg.max_sweeps)
        if count:
            self.charge(out)
        return out

    def charge(self, out: SimplifyOutcome) -> None:
        self.ledger.mpo_mps_products += 1
        self.ledger.simplification_sweeps += out.sweeps_used

    def combine(self, coefs: Sequence[complex], states: Sequence[MpsState]) -> SimplifyOutcome:
        terms = [(c, None, s) for c, s in zip(coefs, states) if c != 0]
        if not terms:
            terms = [(0.0, None, states[0])]
        out = fit(terms, trunc=self.cfg.trunc, max_sweeps=self.cfg.max_sweeps)
        self.ledger.mps_combinations += 1
        self.ledger.simplification_sweeps += out.sweeps_used
        return out

    def energy_and_variance(self, psi: MpsState, phi: MpsState) -> tuple[float, float]:
        """``<H>`` and ``<H^2> - <H>^2`` for normalized ``psi`` given ``phi = H psi``."""
        e = inner(psi, phi).real
        h2 = phi.norm() ** 2
        return float(e), float(h2 - e * e)

    def hmat(self, a: MpsState, b: MpsState) -> complex:
        self.ledger.expectations += 1
        return expectation(a, self.H, b)


class Recorder:
    """Accumulates the trajectory and evaluates the common stopping rules."""

    def __init__(self, ws: Workspace, observer: Observer | None = None):
        self.ws = ws
        self.observer = observer
        self.energies: list[float] = []
        self.variances: list[float] = []
        self.costs: list[float] = []
        self.ledgers: list[CostLedger] = []
        self.bonds: list[int] = []
        self.stop_reason = ""

    def record(self, energy: float, variance: float, state: MpsState) -> bool:
        """Store one step; return True when the run should stop."""
        self.energies.append(float(energy))
        self.variances.append(float(variance))
        self.costs.append(self.ws.ledger.rescaled_cost)
        snap = self.ws.ledger.snapshot()
        self.ledgers.append(snap)
        self.bonds.append(state.max_bond)
        if not np.isfinite(energy):
            self.stop_reason = "non-finite energy"
            return True
        if self.observer is not None:
            info = StepInfo(len(self.energies) - 1, float(energy), float(variance), state, snap)
            if self.observer(info):
                self.stop_reason = "observer"
                return True
        if len(self.energies) > 1 and abs(self.energies[-1] - self.energies[-2]) < self.ws.cfg.energy_tolerance:
            self.stop_reason = "energy tolerance"
            return True
        return False

    @property
    def steps(self) -> int:
        return max(len(self.energies) - 1, 0)

    def report(self, state: MpsState, converged: bool | None = None, unstable: bool = False, log_norm: float = 0.0, **extra) -> SolverReport:
        if converged is None:
            converged = self.stop_reason in ("energy tolerance", "observer", "eigenstate")
        return SolverReport(
            self.energies,
            self.variances,
            state,
            self.ws.ledger,
            bool(converged),
            self.steps,
            self.stop_reason or "max steps",
            unstable,
            log_norm,
            self.costs,
            self.ledgers,
            self.bonds,
            extra,
        )


def normalized_start(psi0: MpsState, trunc: Truncation | None = None) -> MpsState:
    from ..mps import canonicalize

    psi = canonicalize(psi0, 0)
    nrm = psi.norm()
    if not np.isfinite(nrm) or nrm == 0.0:
        raise ValueError("initial state has zero (or non-finite) norm")
    return psi.scaled(1.0 / nrm)
