"""Stability polynomials of the fixed-step integrators and step-size calibration."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

STABILITY_ORDER = {"euler": 1, "heun": 2, "rk4": 4}
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def stability_eigenvalue(method: str, delta_beta: float, E: float) -> float:
    """Per-step amplification of an eigencomponent with energy ``E``: truncated ``exp(-z)``."""
    if delta_beta < 0:
        raise ValueError("delta_beta must be non-negative")
    if method == "exact":
        return math.exp(-delta_beta * E)
    if method not in STABILITY_ORDER:
        raise ValueError(f"no fixed stability polynomial for {method!r}")
    z = delta_beta * E
    return float(sum((-z) ** j / math.factorial(j) for j in range(STABILITY_ORDER[method] + 1)))


@dataclass
class StabilityProfile:
    method: str
    energies: list[float]
    delta_beta: float
    lambdas: list[float]
    ratios: list[float]

    @property
    def unstable(self) -> bool:
        """Some excited component does not shrink relative to the ground one."""
        return any(abs(r) >= 1.0 for r in self.ratios[1:])

    @property
    def contraction(self) -> float:
        """Worst-case ratio ``max_m>0 |r_m|`` governing the asymptotic rate."""
        return max((abs(r) for r in self.ratios[1:]), default=0.0)


def contraction_profile(method: str, delta_beta: float, energies: Sequence[float]) -> StabilityProfile:
    """Ratios ``r_m = lambda_m / lambda_0`` over a sorted spectrum."""
    E = [float(e) for e in energies]
    if any(b < a for a, b in zip(E, E[1:])):
        raise ValueError("energies must be sorted ascending")
    lam = [stability_eigenvalue(method, delta_beta, e) for e in E]
    if lam[0] == 0.0:
        raise ZeroDivisionError("lambda_0 vanishes at this step size")
    return StabilityProfile(method, E, float(delta_beta), lam, [l / lam[0] for l in lam])


def min_ratio(method: str, energies: Sequence[float], interval=(0.0, 1.0), points: int = 2001, which: int = 1) -> tuple[float, float]:
    """Smallest ``|r_which|`` over a grid of step sizes and where it occurs."""
    best = (math.inf, math.nan)
    for db in np.linspace(interval[0], interval[1], points):
        try:
            prof = contraction_profile(method, db, energies)
        except ZeroDivisionError:
            continue
        r = abs(prof.ratios[which])
        if r < best[0]:
            best = (r, float(db))
    return best


def best_fixed_step(method: str, energies: Sequence[float], interval: tuple[float, float] | None = None, points: int = 4001) -> tuple[float, float]:
    """Step size minimizing the worst ratio ``max_m>0 |r_m|`` over a known spectrum.

    Returns ``(delta_beta, contraction)``. The default interval runs up to
    ``3 / (E_max - E_0)``, past the stability edge of every fixed-step method.
    """
    if method not in STABILITY_ORDER:
        raise ValueError(f"no fixed stability polynomial for {method!r}")
    E = np.sort(np.asarray(energies, dtype=float))
    if E.size < 2 or E[-1] == E[0]:
        raise ValueError("need at least two distinct energies")
    lo, hi = interval or (0.0, 3.0 / (E[-1] - E[0]))
    db = np.linspace(lo, hi, points)[1:, None]
    z = db * E[None, :]
    lam = sum((-z) ** j / math.factorial(j) for j in range(STABILITY_ORDER[method] + 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        worst = np.max(np.abs(lam[:, 1:] / lam[:, :1]), axis=1)
    worst[~np.isfinite(worst)] = np.inf
    i = int(np.argmin(worst))
    return float(db[i, 0]), float(worst[i])


@dataclass
class CalibrationResult:
    delta_beta: float
    merit: float
    samples: list[tuple[float, float]]
    unimodal: bool

    def __float__(self) -> float:
        return self.delta_beta


def _finite(v: float) -> float:
    return v if np.isfinite(v) else math.inf


def calibrate_step(
    runner: Callable[[float], object],
    figure_of_merit: Callable[[object], float] | None = None,
    interval: tuple[float, float] = (0.0, 1.0),
    budget: int = 30,
) -> CalibrationResult:
    """Golden-section search for the step size minimizing ``figure_of_merit(runner(db))``.

    Without a figure of merit the runner's return value is used directly.
    Non-finite merits count as +inf. If the samples do not look unimodal a
    warning is issued and the best sample seen is returned.
    """
    lo, hi = map(float, interval)
    if not lo < hi:
        raise ValueError("interval must satisfy lo < hi")
    if budget < 3:
        raise ValueError("budget must be at least 3")
    merit = figure_of_merit or (lambda r: float(r))
    samples: list[tuple[float, float]] = []

    def f(x: float) -> float:
        v = _finite(float(merit(runner(x))))
        samples.append((x, v))
        return v

    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while len(samples) < budget:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    if all(math.isinf(v) for _, v in samples):
        raise FloatingPointError("figure of merit is non-finite over the whole interval")
    best_x, best_v = min(samples, key=lambda s: s[1])
    unimodal = _looks_unimodal(samples)
    if not unimodal:
        warnings.warn("figure of merit does not look unimodal; returning the best sample", RuntimeWarning, stacklevel=2)
    return CalibrationResult(best_x, best_v, samples, unimodal)


def _looks_unimodal(samples: list[tuple[float, float]]) -> bool:
    pts = sorted(samples)
    vals = [v for _, v in pts]
    i = int(np.argmin(vals))
    left = vals[: i + 1]
    right = vals[i:]
    ok_left = all(x >= y or math.isinf(x) and math.isinf(y) for x, y in zip(left, left[1:]))
    ok_right = all(x <= y or math.isinf(x) and math.isinf(y) for x, y in zip(right, right[1:]))
    return ok_left and ok_right
