"""Centered, renormalized powers and polynomials of band-limited paths.

The n-th power is mapped to ``(x^n - E[X^n]) / s_n`` with the exact Gaussian
moment ``E[X^n]`` of ``N(0, 2W)`` and ``s_n = sqrt(2 (n-1)!! (2W)^(n-1))``
(``s_2 = 2 sqrt(W)``).  Polynomials subtract their exact mean and use the scale
of their leading power.

The sklearn transformers at the bottom work on 2-D arrays of paths
(``n_paths x n_times``) so the maps drop into ``sklearn.pipeline.Pipeline``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .grid import SampleGrid, TestFunction
from .kernels import gaussian_moment, power_scale
from .synth import SampledPath

__all__ = [
    "PolySpec",
    "Basis",
    "inner_product",
    "power_renormalize",
    "homogeneous_poly",
    "project",
    "projection_matrix",
    "make_trig_basis",
    "PowerRenormalizer",
    "PolynomialRenormalizer",
    "BasisProjector",
]


@dataclass(frozen=True)
class PolySpec:
    """``P(x) = sum_{p=1}^{n} c_p x^p`` with ``coeffs[p - 1] = c_p`` and ``c_n != 0``."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if not self.coeffs:
            raise ValueError("polynomial degree must be >= 1")
        if self.coeffs[-1] == 0:
            raise ValueError("leading coefficient must be nonzero")
        if not all(np.isfinite(self.coeffs)):
            raise ValueError("coefficients must be finite")

    @property
    def degree(self) -> int:
        return len(self.coeffs)

    @classmethod
    def monomial(cls, n: int) -> "PolySpec":
        return cls((0.0,) * (n - 1) + (1.0,))

    @classmethod
    def hermite(cls, n: int, W: float) -> "PolySpec":
        """``sigma^n He_n(x / sigma)`` with ``sigma^2 = 2W``: only its top chaos survives."""
        poly = np.polynomial.hermite_e.herme2poly([0.0] * n + [1.0])
        var = 2.0 * W
        coeffs = [poly[j] * var ** ((n - j) / 2) if j < len(poly) else 0.0 for j in range(1, n + 1)]
        return cls(tuple(coeffs))

    def mean(self, W: float) -> float:
        """``E[P(X)]`` for ``X ~ N(0, 2W)``."""
        return float(sum(c * gaussian_moment(p, 2.0 * W) for p, c in enumerate(self.coeffs, 1) if c))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        acc = None
        for p, c in enumerate(self.coeffs, start=1):
            if c:
                term = c * x**p
                acc = term if acc is None else acc + term
        return acc

    def describe(self) -> str:
        return "poly(" + ",".join(f"{c:.17g}" for c in self.coeffs) + ")"


@dataclass
class Basis:
    """Test functions ``phi_1 .. phi_N`` on a common grid over ``[0, T]``."""

    functions: list[TestFunction]
    T: float

    def __post_init__(self):
        if not self.functions:
            raise ValueError("basis must contain at least one function")
        g0 = self.functions[0].grid
        if not all(f.grid.same_as(g0) for f in self.functions):
            raise ValueError("basis functions must share one grid")

    @property
    def grid(self) -> SampleGrid:
        return self.functions[0].grid

    def __len__(self):
        return len(self.functions)

    def __getitem__(self, i):
        return self.functions[i]

    def gram(self) -> np.ndarray:
        W = projection_matrix(self.functions, 0.0, self.T)
        F = np.stack([f.values for f in self.functions])
        return W @ F.T


def _grid_of(x) -> SampleGrid:
    return x.grid


def inner_product(x, f: TestFunction, a: float | None = None, b: float | None = None) -> float:
    """Trapezoid approximation of ``int_a^b x(s) f(s) ds`` (defaults: whole grid).

    ``x`` is a SampledPath or TestFunction on the same grid as ``f``; ``a`` and
    ``b`` must be grid nodes.
    """
    gx, gf = _grid_of(x), f.grid
    if not gx.same_as(gf):
        raise ValueError(f"grid mismatch: {gx} vs {gf}")
    w = gf.trapezoid_weights(a, b)
    return float(w @ (np.asarray(x.values) * f.values))


def projection_matrix(functions: Sequence[TestFunction], a: float | None = None, b: float | None = None) -> np.ndarray:
    """Rows ``w_i`` with ``w_i @ x = [x, f_i]_a^b`` for any x on the shared grid."""
    grid = functions[0].grid
    w = grid.trapezoid_weights(a, b)
    return np.stack([w * f.values for f in functions])


def _check_n(n):
    if int(n) != n or n < 1:
        raise ValueError(f"power must be an integer >= 1, got {n}")
    return int(n)


def _renormalize(values, n: int, W: float):
    return (values**n - gaussian_moment(n, 2.0 * W)) / power_scale(n, W)


def _path_W(path: SampledPath, W):
    if W is not None:
        return float(W)
    if path.config is None:
        raise ValueError("path carries no config; pass W explicitly")
    return path.config.W


def power_renormalize(path: SampledPath, n: int, W: float | None = None) -> SampledPath:
    """Pointwise ``(x^n - E[X_W^n]) / s_n``."""
    n = _check_n(n)
    if path.kind != "base":
        raise ValueError(f"power_renormalize needs a base path, got kind={path.kind!r}")
    W = _path_W(path, W)
    return path.with_values(_renormalize(path.values, n, W), kind="power", n=n)


def homogeneous_poly(path: SampledPath, spec: PolySpec, W: float | None = None) -> SampledPath:
    """Pointwise ``(P(x) - E[P(X_W)]) / s_n`` with ``n`` the degree of ``P``."""
    if path.kind != "base":
        raise ValueError(f"homogeneous_poly needs a base path, got kind={path.kind!r}")
    W = _path_W(path, W)
    z = (spec(path.values) - spec.mean(W)) / power_scale(spec.degree, W)
    return path.with_values(z, kind="polynomial", n=spec.degree, poly=spec)


def project(path, basis: Basis) -> np.ndarray:
    """``y_i = [phi_i, path]_T`` for every basis member."""
    if not path.grid.same_as(basis.grid):
        raise ValueError(f"grid mismatch: {path.grid} vs {basis.grid}")
    return projection_matrix(basis.functions, 0.0, basis.T) @ np.asarray(path.values)


def make_trig_basis(N: int, T: float, grid: SampleGrid) -> Basis:
    """``1/sqrt(T), sqrt(2/T) cos(2 pi k t / T), sqrt(2/T) sin(2 pi k t / T), ...`` (first N)."""
    if int(N) != N or N < 1:
        raise ValueError(f"basis size must be >= 1, got {N}")
    if abs(grid.start) > 1e-12:
        raise ValueError("trig basis grid must start at 0")
    grid.index_of(T)  # T must be a node
    k_max = int(N) // 2
    if k_max and (T / k_max) / grid.step < 8:
        raise ValueError(
            f"grid step {grid.step} under-resolves frequency {k_max}/T (need >= 8 points per period)"
        )
    t = grid.times
    funcs = [TestFunction(grid, np.full(grid.count, 1.0 / math.sqrt(T)), label="trig:1")]
    k = 1
    while len(funcs) < N:
        arg = 2.0 * np.pi * k * t / T
        funcs.append(TestFunction(grid, math.sqrt(2.0 / T) * np.cos(arg), label=f"trig:{len(funcs) + 1}"))
        if len(funcs) < N:
            funcs.append(TestFunction(grid, math.sqrt(2.0 / T) * np.sin(arg), label=f"trig:{len(funcs) + 1}"))
        k += 1
    return Basis(funcs, float(T))


class PowerRenormalizer(TransformerMixin, BaseEstimator):
    """Renormalized n-th power of band-limited paths (rows = paths).

    Centering and scale are analytic functions of ``(n, W)``; ``fit`` only
    validates and records them.
    """

    def __init__(self, n=2, W=1.0):
        self.n = n
        self.W = W

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        n = _check_n(self.n)
        self.mean_ = gaussian_moment(n, 2.0 * self.W)
        self.scale_ = power_scale(n, self.W)
        return self

    def transform(self, X):
        check_is_fitted(self, "scale_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} time samples, got {X.shape[1]}")
        return (X ** int(self.n) - self.mean_) / self.scale_


class PolynomialRenormalizer(TransformerMixin, BaseEstimator):
    """Centered polynomial ``sum_p c_p x^p`` scaled by its leading power's ``s_n``."""

    def __init__(self, coeffs=(0.0, 1.0), W=1.0):
        self.coeffs = coeffs
        self.W = W

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        self.spec_ = PolySpec(tuple(self.coeffs))
        self.mean_ = self.spec_.mean(self.W)
        self.scale_ = power_scale(self.spec_.degree, self.W)
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        X = check_array(X)
        return (self.spec_(X) - self.mean_) / self.scale_


class BasisProjector(TransformerMixin, BaseEstimator):
    """Maps each path (row) to its inner products with a list of test functions.

    ``interval=(a, b)`` restricts every inner product to ``[a, b]``.
    """

    def __init__(self, functions=None, interval=None):
        self.functions = functions
        self.interval = interval

    def fit(self, X, y=None):
        funcs = list(self.functions.functions if isinstance(self.functions, Basis) else self.functions)
        a, b = self.interval if self.interval is not None else (None, None)
        self.weights_ = projection_matrix(funcs, a, b)
        self.n_features_in_ = self.weights_.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"paths have {X.shape[1]} samples, functions have {self.n_features_in_}")
        return X @ self.weights_.T
