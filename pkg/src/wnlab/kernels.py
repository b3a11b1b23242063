"""Covariance calculus for flat band-limited Gaussian processes and their powers.

Everything here is deterministic: closed forms, exact integer combinatorics
(Hermite and pair-partition expansions) and adaptive quadrature.  These are the
reference values the Monte Carlo estimators are checked against.

Conventions: the process ``X_W`` has spectral density 1 on ``[-W, W]``, so
``R_W(t) = sin(2 pi W t) / (pi t)``, ``R_W(0) = 2W`` and the correlation is
``rho(t) = R_W(t) / 2W``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, signal

from .grid import SampleGrid, TestFunction

__all__ = [
    "SpectralDensity",
    "CovarianceKernel",
    "HermiteExpansion",
    "PaddingError",
    "QuadratureError",
    "sinc_cov",
    "squared_cov",
    "double_factorial",
    "gaussian_moment",
    "hermite_coeffs",
    "wick_cov_oracle",
    "power_scale",
    "power_cov",
    "power_cov_from_corr",
    "sinc_power_integral",
    "intensity_constant",
    "poly_hermite_coeffs",
    "poly_cov",
    "poly_intensity",
    "conditional_decomposition",
    "kernel_action",
    "squared_cov_mass",
]

_SERIES_CUTOFF = 1e-4
MAX_HERMITE_ORDER = 20
MAX_WICK_ORDER = 6


class PaddingError(ValueError):
    """The input grid does not extend far enough for a kernel convolution."""

    def __init__(self, message: str, bound: float):
        super().__init__(f"{message} (estimated truncation bound {bound:.3g})")
        self.bound = bound


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested accuracy."""


def _check_W(W):
    if not (np.isfinite(W) and W > 0):
        raise ValueError(f"bandwidth W must be positive and finite, got {W}")


def _as_time(t):
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("time arguments must be finite")
    return t


@dataclass(frozen=True)
class SpectralDensity:
    """Flat spectral density ``level`` on ``[-bandwidth_W, bandwidth_W]``."""

    bandwidth_W: float
    level: float = 1.0

    def __post_init__(self):
        _check_W(self.bandwidth_W)
        if not self.level > 0:
            raise ValueError("spectral level must be positive")

    @property
    def total_power(self) -> float:
        return 2.0 * self.bandwidth_W * self.level

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        return np.where(
            (lam >= -self.bandwidth_W) & (lam < self.bandwidth_W), self.level, 0.0
        )


def sinc_cov(W: float, t):
    """Covariance ``sin(2 pi W t) / (pi t)`` of the flat band-limited process.

    Uses the series ``2W (1 - z^2/6 + z^4/120)``, ``z = 2 pi W t``, for ``|z| < 1e-4``.
    Accepts scalars or arrays.
    """
    _check_W(W)
    t = _as_time(t)
    z = 2.0 * np.pi * W * t
    small = np.abs(z) < _SERIES_CUTOFF
    z2 = z * z
    series = 2.0 * W * (1.0 - z2 / 6.0 + z2 * z2 / 120.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        exact = np.sin(z) / (np.pi * t)
    out = np.where(small, series, exact)
    return float(out) if out.ndim == 0 else out


def squared_cov(W: float, t):
    """Covariance of the renormalized square, ``R_W(t)^2 / 2W`` (a unit-mass Fejer-type kernel)."""
    r = sinc_cov(W, t)
    return r * r / (2.0 * W)


def squared_cov_mass(W: float, L: float, nodes: int = 24) -> float:
    """``int_{-L}^{L} R_W(t)^2 / 2W dt`` by Gauss-Legendre on each lobe between sinc zeros.

    The full-line value is 1; truncation at L removes about ``1 / (2 W pi^2 L)``.
    """
    _check_W(W)
    if not L > 0:
        raise ValueError("L must be positive")
    edges = np.arange(0.0, L, 1.0 / (2.0 * W))
    edges = np.append(edges, L)
    x, w = np.polynomial.legendre.leggauss(nodes)
    lo, hi = edges[:-1, None], edges[1:, None]
    t = 0.5 * (hi - lo) * x[None, :] + 0.5 * (hi + lo)
    vals = squared_cov(W, t)
    return float(2.0 * np.sum(0.5 * (hi - lo) * (vals @ w[:, None])))


def double_factorial(m: int) -> int:
    """``m (m-2) (m-4) ...`` with ``0!! = (-1)!! = 1``; exact integer."""
    if int(m) != m:
        raise TypeError(f"double factorial needs an integer, got {m!r}")
    m = int(m)
    if m < -1:
        raise ValueError(f"double factorial undefined for {m}")
    out = 1
    for k in range(m, 1, -2):
        out *= k
    return out


def gaussian_moment(n: int, variance: float) -> float:
    """``E[X^n]`` for ``X ~ N(0, variance)``."""
    if int(n) != n or n < 0:
        raise ValueError(f"moment order must be a non-negative integer, got {n}")
    if not variance > 0:
        raise ValueError(f"variance must be positive, got {variance}")
    n = int(n)
    if n % 2:
        return 0.0
    coef = double_factorial(n - 1)
    try:
        return float(coef) * float(variance) ** (n // 2)
    except OverflowError as exc:
        raise OverflowError(f"moment of order {n} overflows double precision") from exc


@dataclass(frozen=True)
class HermiteExpansion:
    """``x^n = sum_k coeffs[k] He_k(x)`` in the probabilists' Hermite basis.

    ``coeffs`` is indexed by k (length n + 1); entries with k of the wrong parity are 0.
    """

    n: int
    coeffs: tuple[int, ...]

    def __getitem__(self, k: int) -> int:
        return self.coeffs[k] if 0 <= k <= self.n else 0

    def nonzero(self) -> dict[int, int]:
        return {k: c for k, c in enumerate(self.coeffs) if c}

    def evaluate(self, x):
        """Evaluate ``sum_k b_k He_k(x)``; should equal ``x**n``."""
        return np.polynomial.hermite_e.hermeval(np.asarray(x, dtype=float), self.coeffs)


@lru_cache(maxsize=None)
def _hermite_table(n: int) -> tuple[int, ...]:
    if n == 0:
        return (1,)
    prev = _hermite_table(n - 1)
    out = [0] * (n + 1)
    # x He_k = He_{k+1} + k He_{k-1}
    for k, b in enumerate(prev):
        if b:
            out[k + 1] += b
            if k:
                out[k - 1] += k * b
    return tuple(out)


def hermite_coeffs(n: int) -> HermiteExpansion:
    if int(n) != n or n < 1:
        raise ValueError(f"Hermite order must be an integer >= 1, got {n}")
    if n > MAX_HERMITE_ORDER:
        raise ValueError(f"Hermite order {n} exceeds the supported maximum {MAX_HERMITE_ORDER}")
    return HermiteExpansion(int(n), _hermite_table(int(n)))


def _pairings_by_cross(labels: tuple[int, ...]) -> dict[int, int]:
    """Count perfect matchings of ``labels`` by their number of 0-1 pairs."""
    if not labels:
        return {0: 1}
    first, rest = labels[0], labels[1:]
    counts: dict[int, int] = {}
    for i, other in enumerate(rest):
        cross = int(first != other)
        for c, num in _pairings_by_cross(rest[:i] + rest[i + 1 :]).items():
            counts[c + cross] = counts.get(c + cross, 0) + num
    return counts


@lru_cache(maxsize=None)
def _wick_polynomial(n: int) -> tuple[int, ...]:
    """Integer coefficients q_j with cov(X^n, Y^n) = var^n * sum_j q_j rho^j."""
    joint = _pairings_by_cross((0,) * n + (1,) * n)
    single = _pairings_by_cross((0,) * n) if n % 2 == 0 else {}
    mean_sq = single.get(0, 0) ** 2
    q = [joint.get(j, 0) for j in range(n + 1)]
    q[0] -= mean_sq
    return tuple(q)


def wick_cov_oracle(n: int, rho: float, variance: float) -> float:
    """Brute-force ``cov(X^n, Y^n)`` by enumerating all pair partitions (Isserlis).

    ``(X, Y)`` are jointly Gaussian, each ``N(0, variance)``, with correlation ``rho``.
    """
    if int(n) != n or not 1 <= n <= MAX_WICK_ORDER:
        raise ValueError(f"oracle supports 1 <= n <= {MAX_WICK_ORDER}, got {n}")
    if not abs(rho) <= 1:
        raise ValueError(f"correlation must lie in [-1, 1], got {rho}")
    if not variance > 0:
        raise ValueError("variance must be positive")
    q = _wick_polynomial(int(n))
    return float(variance) ** n * sum(c * rho**j for j, c in enumerate(q))


def power_scale(n: int, W: float) -> float:
    """Renormalization scale ``sqrt(2 (n-1)!! (2W)^(n-1))``; equals ``2 sqrt(W)`` at n = 2."""
    _check_W(W)
    if int(n) != n or n < 1:
        raise ValueError(f"power must be an integer >= 1, got {n}")
    return math.sqrt(2.0 * double_factorial(n - 1) * (2.0 * W) ** (n - 1))


def _cov_from_hermite(a: Sequence[float], rho):
    """``sum_{k>=1} a_k^2 k! rho^k`` evaluated by Horner's rule."""
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    for k in range(len(a) - 1, 0, -1):
        out = (out + a[k] ** 2 * math.factorial(k)) * rho
    return out


def power_cov_from_corr(n: int, rho, variance: float):
    """``cov(X^n, Y^n) = variance^n sum_{k>=1} b_{n,k}^2 k! rho^k`` (Hermite route)."""
    out = float(variance) ** n * _cov_from_hermite(hermite_coeffs(n).coeffs, rho)
    return float(out) if np.ndim(out) == 0 else out


def power_cov(n: int, W: float, t):
    """``cov(X_W(t)^n, X_W(0)^n)`` via the Hermite expansion of ``x^n``."""
    _check_W(W)
    return power_cov_from_corr(n, sinc_cov(W, t) / (2.0 * W), 2.0 * W)


def _sin_power_fourier(k: int):
    """Power-reduction of ``sin(u)^k``: (constant, [(freq, coef, 'sin'|'cos'), ...])."""
    scale = 2.0 / 2.0**k
    terms = []
    if k % 2:
        h = (k - 1) // 2
        for j in range(h + 1):
            terms.append((k - 2 * j, scale * (-1) ** (h - j) * math.comb(k, j), "sin"))
        return 0.0, terms
    h = k // 2
    for j in range(h):
        terms.append((k - 2 * j, scale * (-1) ** (h - j) * math.comb(k, j), "cos"))
    return math.comb(k, h) / 2.0**k, terms


@lru_cache(maxsize=None)
def sinc_power_integral(k: int, tol: float = 1e-8) -> float:
    """``J_k = int_{-inf}^{inf} (sin u / u)^k du`` by adaptive quadrature.

    The head ``[0, L]`` is integrated one half-period at a time.  The tail is
    bounded by ``2 / ((k-1) L^(k-1))``; when that bound exceeds ``tol`` (always
    for k = 1, 2) the tail is evaluated instead by power-reducing ``sin^k`` and
    integrating each ``u^-k cos/sin(m u)`` term with Fourier-weighted quadrature.
    Raises QuadratureError if the error estimate exceeds ``tol``.
    """
    if int(k) != k or k < 1:
        raise ValueError(f"sinc power must be an integer >= 1, got {k}")
    k = int(k)
    n_periods = 64
    L = n_periods * np.pi

    def integrand(u):
        return np.sinc(u / np.pi) ** k

    head, head_err = 0.0, 0.0
    for j in range(n_periods):
        val, err = integrate.quad(integrand, j * np.pi, (j + 1) * np.pi, epsabs=1e-14, limit=200)
        head += val
        head_err += err

    tail_bound = 2.0 / ((k - 1) * L ** (k - 1)) if k > 1 else np.inf
    if tail_bound / 2.0 <= tol / 4.0:
        tail, tail_err = 0.0, tail_bound / 2.0
    else:
        const, terms = _sin_power_fourier(k)
        tail = const / ((k - 1) * L ** (k - 1)) if const else 0.0
        tail_err = 0.0
        for freq, coef, kind in terms:
            val, err = integrate.quad(
                lambda u: u ** (-k), L, np.inf, weight=kind, wvar=freq, epsabs=1e-13, limlst=200
            )
            tail += coef * val
            tail_err += abs(coef) * err

    total_err = 2.0 * (head_err + tail_err)
    if not total_err <= tol:
        raise QuadratureError(
            f"J_{k}: quadrature error estimate {total_err:.3g} exceeds tolerance {tol:.3g}"
        )
    return 2.0 * (head + tail)


def intensity_constant(n: int) -> float:
    """Limiting white-noise intensity of ``(X_W^n - E X_W^n) / power_scale(n, W)``.

    ``C(n) = sum_{k>=1} b_{n,k}^2 k! J_k / (2 pi (n-1)!!)``; C(2) = 1, C(1) = 1/2.
    """
    b = hermite_coeffs(n).coeffs
    total = sum(bk * bk * math.factorial(k) * sinc_power_integral(k) for k, bk in enumerate(b) if k and bk)
    return total / (2.0 * np.pi * double_factorial(n - 1))


def poly_hermite_coeffs(coeffs: Sequence[float], W: float) -> np.ndarray:
    """Hermite coefficients ``a_k`` of ``P(X) = sum_p c_p X^p`` with ``X ~ N(0, 2W)``.

    ``coeffs[p - 1]`` is ``c_p``.  Returns ``a`` (index k) with
    ``P(X) = sum_k a_k He_k(X / sigma)``; ``a_0`` is the mean of ``P(X)``.
    """
    _check_W(W)
    sigma = math.sqrt(2.0 * W)
    a = np.zeros(len(coeffs) + 1)
    for p, c in enumerate(coeffs, start=1):
        if c:
            a[: p + 1] += c * sigma**p * np.asarray(hermite_coeffs(p).coeffs, dtype=float)
    return a


def poly_cov(coeffs: Sequence[float], W: float, t):
    """``cov(P(X_W(t)), P(X_W(0)))`` for ``P(x) = sum_p c_p x^p``."""
    a = poly_hermite_coeffs(coeffs, W)
    out = _cov_from_hermite(a, sinc_cov(W, t) / (2.0 * W))
    return float(out) if np.ndim(out) == 0 else out


def poly_intensity(coeffs: Sequence[float], W: float | None = None) -> float:
    """Integrated covariance of the renormalized polynomial transform.

    With ``W`` given: the exact infinite-horizon value
    ``int cov(Z(t), Z(0)) dt`` at that bandwidth, where ``Z`` is scaled by the
    degree-n ``power_scale``.  With ``W=None``: the ``W -> infinity`` limit.
    """
    n = len(coeffs)
    if n < 1 or coeffs[-1] == 0:
        raise ValueError("polynomial needs degree >= 1 and a nonzero leading coefficient")
    if W is None:
        # only (2W)^n terms survive: the leading monomial alone
        return float(coeffs[-1]) ** 2 * intensity_constant(n)
    a = poly_hermite_coeffs(coeffs, W)
    total = sum(a[k] ** 2 * math.factorial(k) * sinc_power_integral(k) for k in range(1, n + 1) if a[k])
    return total / (2.0 * np.pi * W) / power_scale(n, W) ** 2


def conditional_decomposition(W: float, t: float) -> tuple[float, float]:
    """Regression of ``X_W(t)`` on ``X_W(0)``: ``(a, residual variance)``."""
    r0 = 2.0 * W
    rt = sinc_cov(W, t)
    return rt / r0, (r0 * r0 - rt * rt) / r0


@dataclass(frozen=True)
class CovarianceKernel:
    """A stationary covariance ``K(t)``: ``sinc``, ``squared`` or ``power`` (n-th power process).

    ``normalize=True`` divides by ``power_scale(n, W)**2`` so the kernel is the
    covariance of the renormalized transform.
    """

    kind: str
    W: float
    n: int = 1
    normalize: bool = False

    def __post_init__(self):
        if self.kind not in ("sinc", "squared", "power"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        _check_W(self.W)
        if self.kind == "power" and (int(self.n) != self.n or self.n < 1):
            raise ValueError("power kernel needs integer n >= 1")

    def __call__(self, t):
        if self.kind == "sinc":
            out, n = sinc_cov(self.W, t), 1
        elif self.kind == "squared":
            # already the renormalized-square covariance
            return squared_cov(self.W, t)
        else:
            out, n = power_cov(self.n, self.W, t), self.n
        if self.normalize:
            out = out / power_scale(n, self.W) ** 2
        return out

    @property
    def variance(self) -> float:
        return float(self(0.0))


def _aligned_offset(f_grid: SampleGrid, eval_grid: SampleGrid) -> int | None:
    if abs(eval_grid.step - f_grid.step) > 1e-12 * f_grid.step:
        return None
    pos = (eval_grid.start - f_grid.start) / f_grid.step
    off = round(pos)
    return int(off) if abs(pos - off) < 1e-9 else None


def kernel_action(
    kernel: Callable,
    f: TestFunction,
    eval_grid: SampleGrid | None = None,
    edge_tol: float = 1e-6,
) -> TestFunction:
    """``g(t) = int K(t - s) f(s) ds`` by composite trapezoid on ``f``'s grid.

    ``f`` must have decayed at both ends of its grid (relative to ``max |f|``);
    otherwise the integral is truncated and PaddingError is raised.  The
    evaluation grid must lie inside ``f``'s grid.
    """
    if eval_grid is None:
        eval_grid = f.grid
    fg = f.grid
    peak = float(np.max(np.abs(f.values)))
    if peak > 0:
        edge = max(abs(f.values[0]), abs(f.values[-1])) / peak
        if edge > edge_tol:
            raise PaddingError("test function has not decayed at its grid edges", edge)
    if eval_grid.start < fg.start - 1e-12 or eval_grid.stop > fg.stop + 1e-12:
        raise PaddingError("evaluation grid extends beyond the test-function grid", 1.0)

    weighted = fg.trapezoid_weights() * f.values
    off = _aligned_offset(fg, eval_grid)
    if off is not None:
        # lags (i + off - j) * h for eval index i and input index j
        lag_idx = np.arange(off - (fg.count - 1), off + eval_grid.count)
        kv = np.asarray(kernel(lag_idx * fg.step), dtype=float)
        full = signal.fftconvolve(kv, weighted, mode="full")
        g = full[fg.count - 1 : fg.count - 1 + eval_grid.count]
    else:
        te, ts = eval_grid.times, fg.times
        g = np.empty(eval_grid.count)
        chunk = max(1, 2_000_000 // fg.count)
        for i in range(0, eval_grid.count, chunk):
            blk = np.asarray(kernel(te[i : i + chunk, None] - ts[None, :]), dtype=float)
            g[i : i + chunk] = blk @ weighted
    return TestFunction(eval_grid, g, label=f"K*{f.label}")
