"""Uniform sample grids and grid-sampled test functions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SampleGrid:
    """Uniform grid ``start + i * step`` for ``i = 0 .. count - 1``."""

    start: float
    step: float
    count: int

    def __post_init__(self):
        if not np.isfinite(self.start):
            raise ValueError("grid start must be finite")
        if not (self.step > 0 and np.isfinite(self.step)):
            raise ValueError(f"grid step must be positive, got {self.step}")
        if int(self.count) != self.count or self.count < 1:
            raise ValueError(f"grid count must be a positive integer, got {self.count}")

    @classmethod
    def covering(cls, start: float, stop: float, step: float) -> "SampleGrid":
        """Smallest grid from ``start`` with the given step whose last node is >= stop."""
        n_steps = int(np.ceil((stop - start) / step - 1e-9))
        return cls(float(start), float(step), max(n_steps, 0) + 1)

    @property
    def stop(self) -> float:
        return self.start + (self.count - 1) * self.step

    @property
    def times(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)

    def index_of(self, t: float, tol: float = 1e-6) -> int:
        """Index of the node at time ``t``; raises if ``t`` is not a node."""
        pos = (t - self.start) / self.step
        idx = int(round(pos))
        if abs(pos - idx) > tol or not 0 <= idx < self.count:
            raise ValueError(f"time {t} is not a node of {self}")
        return idx

    def trapezoid_weights(self, a: float | None = None, b: float | None = None) -> np.ndarray:
        """Composite-trapezoid weights for the integral over [a, b] (nodes only)."""
        i0 = 0 if a is None else self.index_of(a)
        i1 = self.count - 1 if b is None else self.index_of(b)
        if i1 < i0:
            raise ValueError(f"empty interval [{a}, {b}]")
        w = np.zeros(self.count)
        if i1 == i0:
            return w
        w[i0 : i1 + 1] = self.step
        w[i0] *= 0.5
        w[i1] *= 0.5
        return w

    def same_as(self, other: "SampleGrid", rtol: float = 1e-12) -> bool:
        return (
            self.count == other.count
            and abs(self.step - other.step) <= rtol * self.step
            and abs(self.start - other.start) <= 1e-9 * max(1.0, abs(self.start)) + rtol * self.step
        )


@dataclass
class TestFunction:
    """An L2 function sampled on a grid; integrals use the composite trapezoid rule."""

    __test__ = False  # not a pytest class

    grid: SampleGrid
    values: np.ndarray
    quadrature: str = "trapezoid"
    label: str = field(default="", compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.count,):
            raise ValueError(
                f"values have shape {self.values.shape}, grid expects ({self.grid.count},)"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("test function values must be finite")
        if self.quadrature != "trapezoid":
            raise ValueError(f"unsupported quadrature {self.quadrature!r}")

    @classmethod
    def from_callable(cls, func, grid: SampleGrid, label: str = "") -> "TestFunction":
        return cls(grid, np.asarray(func(grid.times), dtype=float), label=label)

    def norm2(self) -> float:
        """Squared L2 norm on the whole grid."""
        return float(self.grid.trapezoid_weights() @ self.values**2)

    def __mul__(self, scalar: float) -> "TestFunction":
        return TestFunction(self.grid, self.values * float(scalar), label=self.label)

    __rmul__ = __mul__
