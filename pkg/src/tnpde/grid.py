"""Uniform grids on boxes, with one qubit register per spatial dimension."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Discretization of a box ``prod_i [a_i, a_i + L_i]`` with ``2**n_i`` points per axis.

    Endpoints are included, so the spacing is ``L_i / (2**n_i - 1)``. Sites of
    the tensor train are ordered register by register, most significant bit
    first inside each register.
    """

    qubits_per_dim: tuple[int, ...]
    lower: tuple[float, ...]
    length: tuple[float, ...]

    def __post_init__(self):
        q = tuple(int(n) for n in self.qubits_per_dim)
        lo = tuple(float(a) for a in self.lower)
        ln = tuple(float(v) for v in self.length)
        if not q:
            raise ValueError("grid needs at least one dimension")
        if not (len(q) == len(lo) == len(ln)):
            raise ValueError("qubits_per_dim, lower and length must have equal length")
        if any(n < 1 for n in q):
            raise ValueError(f"qubit counts must be >= 1, got {q}")
        if any(not np.isfinite(v) or v <= 0 for v in ln):
            raise ValueError(f"lengths must be positive, got {ln}")
        object.__setattr__(self, "qubits_per_dim", q)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "length", ln)

    @classmethod
    def symmetric(cls, qubits: int | Sequence[int], L: float | Sequence[float] = 10.0, dims: int | None = None) -> "GridSpec":
        """Grid on ``[-L/2, L/2]`` along every axis."""
        if isinstance(qubits, (int, np.integer)):
            qubits = (int(qubits),) * (dims or 1)
        qubits = tuple(qubits)
        lengths = (float(L),) * len(qubits) if np.isscalar(L) else tuple(L)
        return cls(qubits, tuple(-v / 2 for v in lengths), lengths)

    @classmethod
    def unit(cls, sites: int) -> "GridSpec":
        """One register with unit spacing, handy for generic states."""
        return cls((sites,), (0.0,), (float(2**sites - 1),))

    @property
    def dims(self) -> int:
        return len(self.qubits_per_dim)

    @property
    def sites(self) -> int:
        return sum(self.qubits_per_dim)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / (2**n - 1) for n, L in zip(self.qubits_per_dim, self.length))

    def register(self, dim: int) -> range:
        """Site indices belonging to ``dim``."""
        self._check_dim(dim)
        start = sum(self.qubits_per_dim[:dim])
        return range(start, start + self.qubits_per_dim[dim])

    def points(self, dim: int) -> np.ndarray:
        self._check_dim(dim)
        n = self.qubits_per_dim[dim]
        return self.lower[dim] + np.arange(2**n) * self.spacing[dim]

    def mesh(self) -> list[np.ndarray]:
        """Coordinate arrays flattened in the big-endian serial order of the state vector."""
        axes = np.meshgrid(*[self.points(d) for d in range(self.dims)], indexing="ij")
        return [a.ravel() for a in axes]

    def refine(self, dim: int) -> "GridSpec":
        """Same box with one more qubit along ``dim``."""
        self._check_dim(dim)
        q = list(self.qubits_per_dim)
        q[dim] += 1
        return GridSpec(tuple(q), self.lower, self.length)

    def _check_dim(self, dim: int) -> None:
        if not 0 <= dim < self.dims:
            raise IndexError(f"dimension {dim} out of range for a {self.dims}-D grid")

    def to_dict(self) -> dict:
        return {"qubits_per_dim": list(self.qubits_per_dim), "lower": list(self.lower), "length": list(self.length)}
