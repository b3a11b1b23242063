"""Monte Carlo estimators with explicit error bars.

Each check returns a :class:`StatReport`.  Replications are generated in
fixed-size chunks of replication ids; chunks may run on several threads but are
reassembled in id order, so every number is independent of ``workers``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import stats

from .grid import TestFunction
from .kernels import CovarianceKernel, intensity_constant, kernel_action, poly_cov, poly_intensity, power_scale
from .synth import ProcessConfig, sample_paths
from .transform import Basis, PolySpec, _renormalize, projection_matrix

__all__ = [
    "StatReport",
    "ReplicationSet",
    "Z_THRESHOLD",
    "transform_label",
    "apply_transform",
    "limit_intensity",
    "run_replications",
    "exact_payload_cov",
    "empirical_cov",
    "empirical_char_functional",
    "gaussianity_report",
    "cross_interval_corr",
    "delta_action_check",
    "intensity_check",
    "lag_covariance_check",
]

Z_THRESHOLD = 4.0
CHUNK_SIZE = 256
KS_LEVEL = 0.01

Transform = Union[str, int, PolySpec]


@dataclass
class StatReport:
    """One named check: a scalar metric, its uncertainty and a verdict.

    ``estimate`` is the quantity compared with ``threshold``; vectors and
    per-entry z-scores go in ``details``.
    """

    name: str
    estimate: float
    stderr: float
    z: float
    threshold: float
    verdict: bool
    metadata: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "z": self.z,
            "threshold": self.threshold,
            "verdict": "pass" if self.verdict else "fail",
            "metadata": self.metadata,
            "details": _jsonable(self.details),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


@dataclass
class ReplicationSet:
    """``M`` iid rows of functionals of transformed paths, with their provenance."""

    config: ProcessConfig
    transform: str
    M: int
    payload: np.ndarray
    seeds: tuple[int, range]
    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("a replication set needs M >= 2")
        if self.payload.shape[0] != self.M:
            raise ValueError("payload rows must equal M")
        if not np.all(np.isfinite(self.payload)):
            raise ValueError("payload contains non-finite values")

    def column(self, j: int = 0) -> np.ndarray:
        return self.payload[:, j]


def transform_label(transform: Transform) -> str:
    if isinstance(transform, PolySpec):
        return transform.describe()
    if transform in ("base", None, 0):
        return "base"
    return f"power({int(transform)})"


def apply_transform(X: np.ndarray, transform: Transform, W: float) -> np.ndarray:
    """Apply a transform (``"base"``, power ``n`` or a PolySpec) to rows of paths."""
    if isinstance(transform, PolySpec):
        return (transform(X) - transform.mean(W)) / power_scale(transform.degree, W)
    if transform in ("base", None, 0):
        return X
    n = int(transform)
    if n < 1:
        raise ValueError(f"invalid power {transform}")
    return _renormalize(X, n, W)


def limit_intensity(transform: Transform, W: float | None = None) -> float:
    """Integrated covariance (white-noise intensity) of the transformed process.

    For powers this is ``C(n)`` at every W.  A PolySpec whose coefficients were
    built for a particular W (e.g. ``PolySpec.hermite``) needs that ``W``; with
    ``W=None`` only the leading monomial is kept.
    """
    if isinstance(transform, PolySpec):
        return poly_intensity(transform.coeffs, W)
    if transform in ("base", None, 0):
        return 1.0
    return intensity_constant(int(transform))


def _weights(functionals) -> tuple[np.ndarray, list[str]]:
    """Weight rows for a Basis, TestFunctions, or ``(TestFunction, (a, b))`` pairs."""
    if isinstance(functionals, Basis):
        return projection_matrix(functionals.functions, 0.0, functionals.T), [f.label for f in functionals]
    if isinstance(functionals, TestFunction):
        functionals = [functionals]
    rows, labels = [], []
    for item in functionals:
        if isinstance(item, TestFunction):
            f, (a, b) = item, (None, None)
        else:
            f, (a, b) = item
            if not b > a:
                raise ValueError(f"zero-length interval [{a}, {b}]")
        rows.append(f.grid.trapezoid_weights(a, b) * f.values)
        labels.append(f.label if a is None else f"{f.label}[{a:g},{b:g}]")
    return np.stack(rows), labels


def _evaluate(config, transform, weights: np.ndarray, M: int, workers: int) -> np.ndarray:
    """Rows ``weights @ Z_r`` for replications ``r = 0 .. M-1``, in id order."""

    def chunk(start):
        X = sample_paths(config, range(start, min(start + CHUNK_SIZE, M)))
        return apply_transform(X, transform, config.W) @ weights.T

    starts = range(0, M, CHUNK_SIZE)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            parts = list(pool.map(chunk, starts))
    else:
        parts = [chunk(s) for s in starts]
    return np.concatenate(parts, axis=0)


def run_replications(
    config: ProcessConfig,
    transform: Transform,
    functionals,
    M: int,
    workers: int = 1,
) -> ReplicationSet:
    """Generate paths ``0 .. M-1``, transform them and evaluate every functional."""
    if int(M) != M or M < 2:
        raise ValueError(f"M must be an integer >= 2, got {M}")
    M = int(M)
    weights, labels = _weights(functionals)
    if weights.shape[1] != config.grid.count:
        raise ValueError("functional grid does not match the process grid")

    payload = _evaluate(config, transform, weights, M, workers)
    return ReplicationSet(config, transform_label(transform), M, payload, (config.seed, range(M)), labels)


def _degree(transform: Transform) -> int:
    if isinstance(transform, PolySpec):
        return transform.degree
    return 1 if transform in ("base", None, 0) else int(transform)


def _kernel_for(transform: Transform, W: float):
    if isinstance(transform, PolySpec):
        s2 = power_scale(transform.degree, W) ** 2
        return lambda t: poly_cov(transform.coeffs, W, t) / s2
    if transform in ("base", None, 0):
        return CovarianceKernel("sinc", W)
    return CovarianceKernel("power", W, int(transform), normalize=True)


def exact_payload_cov(config: ProcessConfig, transform: Transform, functionals) -> np.ndarray:
    """Covariance of the functionals under the exact sinc-based law on the grid.

    Deterministic: ``w_i^T K w_j`` with ``K_ab = cov(Z(t_a), Z(t_b))``.
    """
    weights, _ = _weights(functionals)
    t = config.grid.times
    K = np.asarray(_kernel_for(transform, config.W)(t[:, None] - t[None, :]), dtype=float)
    return weights @ K @ weights.T


def _payload(data) -> np.ndarray:
    return data.payload if isinstance(data, ReplicationSet) else np.asarray(data, dtype=float)


def _meta(data, **extra) -> dict:
    meta = {}
    if isinstance(data, ReplicationSet):
        meta = {"W": data.config.W, "M": data.M, "seed": data.config.seed, "transform": data.transform}
    meta.update(extra)
    return meta


def empirical_cov(data, threshold: float | None = None) -> StatReport:
    """Sample covariance of the payload columns against the identity.

    Per-entry z-scores use ``Var(C_ij) ~ (1 + delta_ij) / M``; the verdict is
    ``max |C - I| <= threshold`` (default ``5 sqrt(2 / M)``).
    """
    Y = _payload(data)
    if Y.ndim == 1:
        Y = Y[:, None]
    M, N = Y.shape
    if M < 10:
        raise ValueError("empirical_cov needs M >= 10")
    C = np.atleast_2d(np.cov(Y, rowvar=False, ddof=1))
    dev = C - np.eye(N)
    se = np.sqrt((1.0 + np.eye(N)) / M)
    zs = dev / se
    degenerate = [int(j) for j in np.flatnonzero(np.diag(C) <= 1e-300)]
    thr = 5.0 * math.sqrt(2.0 / M) if threshold is None else float(threshold)
    max_dev = float(np.max(np.abs(dev)))
    i, j = np.unravel_index(np.argmax(np.abs(dev)), dev.shape)
    return StatReport(
        "projection_cov",
        max_dev,
        float(se[i, j]),
        float(np.max(np.abs(zs))),
        thr,
        bool(max_dev <= thr and not degenerate),
        _meta(data, N=N),
        {"cov": C, "z": zs, "degenerate_columns": degenerate},
    )


def empirical_char_functional(data, h_norm2: float, threshold: float | None = None) -> StatReport:
    """``C_hat = mean(exp(i s))`` against the Gaussian value ``exp(-|h|^2 / 2)``.

    Default threshold is the Monte Carlo radius ``4 / sqrt(M)``.
    """
    s = _payload(data)
    s = s[:, 0] if s.ndim == 2 else s
    M = s.size
    if M < 100:
        raise ValueError("empirical_char_functional needs M >= 100")
    e = np.exp(1j * s)
    c_hat = complex(np.mean(e))
    target = math.exp(-0.5 * h_norm2)
    dev = abs(c_hat - target)
    se = math.sqrt(float(np.mean(np.abs(e - c_hat) ** 2)) / M)
    thr = Z_THRESHOLD / math.sqrt(M) if threshold is None else float(threshold)
    return StatReport(
        "char_functional",
        dev,
        se,
        dev / se if se > 0 else (0.0 if dev == 0 else math.inf),
        thr,
        bool(dev <= thr),
        _meta(data, h_norm2=h_norm2),
        {"c_hat": [c_hat.real, c_hat.imag], "target": target, "mc_radius": Z_THRESHOLD / math.sqrt(M)},
    )


def gaussianity_report(samples, name: str = "gaussianity") -> StatReport:
    """Skewness and excess-kurtosis z-scores plus a KS distance to the fitted normal.

    Passes when both ``|z| <= 4`` and the KS statistic is below its asymptotic
    1% critical value ``K_0.99 / sqrt(M)``.  ``estimate`` is the larger |z|.
    """
    x = np.asarray(samples, dtype=float).ravel()
    M = x.size
    if M < 100:
        raise ValueError("gaussianity_report needs M >= 100")
    ks_crit = float(stats.kstwobign.ppf(1.0 - KS_LEVEL)) / math.sqrt(M)
    sd = float(np.std(x, ddof=1))
    if not sd > 0:
        return StatReport(name, math.nan, math.nan, math.nan, Z_THRESHOLD, False, {"M": M, "degenerate": True})
    g1 = float(stats.skew(x))
    g2 = float(stats.kurtosis(x))
    z_skew = g1 * math.sqrt(M / 6.0)
    z_kurt = g2 * math.sqrt(M / 24.0)
    ks = float(stats.kstest((x - x.mean()) / sd, "norm").statistic)
    worst = max(abs(z_skew), abs(z_kurt))
    return StatReport(
        name,
        worst,
        1.0,
        worst,
        Z_THRESHOLD,
        bool(worst <= Z_THRESHOLD and ks <= ks_crit),
        {"M": M},
        {"skewness": g1, "excess_kurtosis": g2, "z_skew": z_skew, "z_kurt": z_kurt, "ks": ks, "ks_crit": ks_crit},
    )


def cross_interval_corr(
    config: ProcessConfig,
    transform: Transform,
    h: TestFunction,
    I1: tuple[float, float],
    I2: tuple[float, float],
    M: int,
    tol: float | None = None,
    workers: int = 1,
) -> StatReport:
    """Correlation of ``[Z, h]`` over ``I1`` with ``[Z, h]`` over ``I2`` across replications.

    Standard error ``1 / sqrt(M)``; passes when ``|rho| <= tol`` (default ``4 / sqrt(M)``).
    ``details["exact"]`` is the deterministic correlation under the sinc law.
    """
    for a, b in (I1, I2):
        if not b > a:
            raise ValueError(f"zero-length interval [{a}, {b}]")
        if a < 0 or b > config.T + 1e-12:
            raise ValueError(f"interval [{a}, {b}] is not inside [0, T]")
    funcs = [(h, I1), (h, I2)]
    rs = run_replications(config, transform, funcs, M, workers=workers)
    rho = float(np.corrcoef(rs.payload, rowvar=False)[0, 1])
    ex = exact_payload_cov(config, transform, funcs)
    exact = float(ex[0, 1] / math.sqrt(ex[0, 0] * ex[1, 1]))
    se = 1.0 / math.sqrt(M)
    thr = Z_THRESHOLD * se if tol is None else float(tol)
    return StatReport(
        "independence",
        rho,
        se,
        rho / se,
        thr,
        bool(abs(rho) <= thr),
        _meta(rs, I1=list(I1), I2=list(I2)),
        {"exact": exact},
    )


def delta_action_check(n, W: float, f: TestFunction, tol: float = 0.05) -> StatReport:
    """Relative L2 error of ``int K(t-s) f(s) ds`` against ``C(n) f`` (no sampling).

    ``K`` is the covariance of the renormalized transform and ``C(n)`` its limiting
    intensity; ``n`` is a power or a PolySpec.
    """
    degree = _degree(n)
    if f.grid.step > 1.0 / (2.0 * degree * W):
        raise ValueError(
            f"test-function grid step {f.grid.step} under-resolves the degree-{degree} kernel at W={W}"
        )
    kernel = _kernel_for(n, W)
    C = limit_intensity(n, W)
    g = kernel_action(kernel, f)
    w = f.grid.trapezoid_weights()
    err = math.sqrt(float(w @ (g.values - C * f.values) ** 2)) / (C * math.sqrt(f.norm2()))
    return StatReport(
        "delta_action",
        err,
        0.0,
        0.0,
        tol,
        bool(err <= tol),
        {"W": W, "n": degree, "transform": transform_label(n)},
        {"intensity": C},
    )


def intensity_check(
    n,
    W: float,
    f: TestFunction,
    M: int,
    tol: float = 0.1,
    T: float = 1.0,
    seed: int = 0,
    oversample: int = 4,
    pad_taps: int = 64,
    method: str = "fft",
    workers: int = 1,
    expected: float | None = None,
) -> StatReport:
    """``Var([Z, f]) / (C |f|^2)`` with a variance-of-variance standard error.

    The standard error uses the sample fourth central moment, so it stays valid
    for the non-Gaussian finite-W functionals.  Passes when ``|ratio - 1| <= tol``.
    """
    config = ProcessConfig(W=W, T=T, oversample=oversample, pad_taps=pad_taps, seed=seed, method=method)
    rs = run_replications(config, n, [f], M, workers=workers)
    return variance_ratio_report(
        rs.column(0), limit_intensity(n, W) if expected is None else expected, f.norm2(), tol,
        _meta(rs, n=_degree(n)),
    )


def variance_ratio_report(s, intensity: float, f_norm2: float, tol: float, meta: dict | None = None) -> StatReport:
    s = np.asarray(s, dtype=float)
    M = s.size
    v = float(np.var(s, ddof=1))
    m4 = float(np.mean((s - s.mean()) ** 4))
    var_v = max(m4 - v * v * (M - 3) / (M - 1), 0.0) / M
    target = intensity * f_norm2
    ratio = v / target
    se = math.sqrt(var_v) / target
    return StatReport(
        "intensity",
        ratio,
        se,
        (ratio - 1.0) / se if se > 0 else math.inf,
        tol,
        bool(abs(ratio - 1.0) <= tol),
        dict(meta or {}),
        {"variance": v, "target": target, "intensity_constant": intensity},
    )


def lag_covariance_check(
    config: ProcessConfig,
    transform: Transform,
    lags: Sequence[float],
    M: int,
    workers: int = 1,
) -> StatReport:
    """Empirical ``cov(Z(t0), Z(t0 + lag))`` at the grid centre versus the exact kernel.

    ``estimate`` is the largest |z| over the lags; passes at ``|z| <= 4``.
    """
    grid = config.grid
    i0 = grid.count // 2
    idx = [i0 + int(round(lag / grid.step)) for lag in lags]
    if max(idx) >= grid.count:
        raise ValueError("lag exceeds the horizon")
    # point evaluations at t0 and t0 + lag
    rows = np.eye(grid.count)[[i0] + idx]
    Z = _evaluate(config, transform, rows, M, workers)
    kern = _kernel_for(transform, config.W)
    est, ses, exact = [], [], []
    for j, lag in enumerate(lags, start=1):
        prod = Z[:, 0] * Z[:, j]
        est.append(float(prod.mean()))
        ses.append(float(prod.std(ddof=1) / math.sqrt(M)))
        exact.append(float(kern(idx[j - 1] * grid.step - i0 * grid.step)))
    zs = [(e - x) / s for e, x, s in zip(est, exact, ses)]
    worst = max(abs(z) for z in zs)
    return StatReport(
        "lag_covariance",
        worst,
        1.0,
        worst,
        Z_THRESHOLD,
        bool(worst <= Z_THRESHOLD),
        {"W": config.W, "M": M, "seed": config.seed, "transform": transform_label(transform)},
        {"lags": list(lags), "estimate": est, "stderr": ses, "exact": exact, "z": zs},
    )
