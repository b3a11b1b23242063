"""Seedable synthesis of flat band-limited Gaussian sample paths.

Two generators ship and cross-check each other:

* ``sinc_interp`` draws iid ``N(0, 2W)`` samples at the Nyquist times
  ``k / 2W`` (exact, since ``R_W`` vanishes there) and evaluates the truncated
  Shannon series on the output grid;
* ``fft`` fills the band ``|lambda| < W`` of a padded circular spectrum with
  Hermitian Gaussian coefficients and inverse-transforms.

Every replication draws from its own counter-based stream keyed by
``(seed, replication_id)``, so a path depends on nothing but its config and id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Iterable

import numpy as np
from scipy import fft as sfft

from .grid import SampleGrid

__all__ = [
    "ProcessConfig",
    "SampledPath",
    "RngStream",
    "NyquistSamples",
    "gaussian_stream",
    "nyquist_samples",
    "interpolate_sinc",
    "interpolation_matrix",
    "synth_fft",
    "make_path",
    "sample_paths",
    "METHODS",
]

METHODS = ("sinc_interp", "fft")
_U64 = 1 << 64
_TWO_M53 = 2.0**-53


@dataclass(frozen=True)
class ProcessConfig:
    """Recipe for one family of band-limited paths on ``[0, T]``.

    The output grid step is ``1 / (2 W oversample)``; ``pad_taps`` Nyquist
    intervals of padding are added on each side (sinc window / FFT crop).
    """

    W: float
    T: float = 1.0
    oversample: int = 4
    pad_taps: int = 64
    seed: int = 0
    method: str = "fft"

    def __post_init__(self):
        if not (np.isfinite(self.W) and self.W > 0):
            raise ValueError(f"W must be positive, got {self.W}")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"T must be positive, got {self.T}")
        if int(self.oversample) != self.oversample or self.oversample < 1:
            raise ValueError(f"oversample must be an integer >= 1, got {self.oversample}")
        if int(self.pad_taps) != self.pad_taps or self.pad_taps < 1:
            raise ValueError(f"pad_taps must be an integer >= 1, got {self.pad_taps}")
        if int(self.seed) != self.seed or not 0 <= self.seed < _U64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")

    @property
    def step(self) -> float:
        return 1.0 / (2.0 * self.W * self.oversample)

    @property
    def grid(self) -> SampleGrid:
        """Output grid covering ``[0, T]``."""
        return SampleGrid.covering(0.0, self.T, self.step)

    @property
    def variance(self) -> float:
        return 2.0 * self.W


@dataclass
class SampledPath:
    """Grid values of one path.  ``kind`` is ``base``, ``power`` or ``polynomial``."""

    grid: SampleGrid
    values: np.ndarray
    kind: str = "base"
    config: ProcessConfig | None = None
    replication_id: int = 0
    n: int | None = None
    poly: Any = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.count,):
            raise ValueError(
                f"path has {self.values.shape} values, grid has {self.grid.count} nodes"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("path values must be finite")
        if self.kind not in ("base", "power", "polynomial"):
            raise ValueError(f"unknown path kind {self.kind!r}")

    @property
    def W(self) -> float | None:
        return None if self.config is None else self.config.W

    def with_values(self, values, **changes) -> "SampledPath":
        return replace(self, values=np.asarray(values, dtype=float), info=dict(self.info), **changes)


class RngStream:
    """Counter-based N(0, 1) stream keyed by ``(seed, stream_id)``.

    Uniforms come from Philox-4x64 keyed by the pair; Box-Muller turns pairs of
    uniforms into pairs of normals.  ``counter`` counts 64-bit words consumed.
    """

    def __init__(self, seed: int, stream_id: int):
        for name, val in (("seed", seed), ("stream_id", stream_id)):
            if int(val) != val or not 0 <= val < _U64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {val}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.counter = 0
        self._bitgen = np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"

    def uniform_raw(self, size: int) -> np.ndarray:
        raw = self._bitgen.random_raw(size)
        self.counter += size
        return raw

    def normals(self, size: int) -> np.ndarray:
        """Next ``size`` standard normal deviates."""
        pairs = (size + 1) // 2
        raw = self.uniform_raw(2 * pairs).reshape(pairs, 2)
        u1 = ((raw[:, 0] >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_M53
        u2 = (raw[:, 1] >> np.uint64(11)).astype(np.float64) * _TWO_M53
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.empty((pairs, 2))
        out[:, 0] = radius * np.cos(angle)
        out[:, 1] = radius * np.sin(angle)
        return out.reshape(-1)[:size]


def gaussian_stream(seed: int, stream_id: int) -> RngStream:
    return RngStream(seed, stream_id)


@dataclass
class NyquistSamples:
    """Values at the Nyquist times ``(k_start + j) / 2W``."""

    W: float
    k_start: int
    values: np.ndarray

    @property
    def k_stop(self) -> int:
        return self.k_start + len(self.values) - 1

    @property
    def times(self) -> np.ndarray:
        return (self.k_start + np.arange(len(self.values))) / (2.0 * self.W)


def _nyquist_range(W: float, a: float, b: float) -> tuple[int, int]:
    return math.floor(2.0 * W * a + 1e-9), math.ceil(2.0 * W * b - 1e-9)


def nyquist_samples(W: float, span: tuple[float, float], stream: RngStream) -> NyquistSamples:
    """iid ``N(0, 2W)`` samples at every Nyquist time covering ``span``."""
    a, b = span
    if not (np.isfinite(a) and np.isfinite(b)):
        raise ValueError("span must be finite")
    if not b > a:
        raise ValueError(f"empty span {span}")
    if not W > 0:
        raise ValueError("W must be positive")
    k0, k1 = _nyquist_range(W, a, b)
    vals = math.sqrt(2.0 * W) * stream.normals(k1 - k0 + 1)
    return NyquistSamples(W, k0, vals)


def _sinc_window(W: float, grid: SampleGrid, taps: int) -> tuple[int, int]:
    u = 2.0 * W * grid.times
    return math.ceil(u.min() - taps - 1e-9), math.floor(u.max() + taps + 1e-9)


def interpolation_matrix(W: float, grid: SampleGrid, k_start: int, n_samples: int, taps: int) -> np.ndarray:
    """Dense ``(grid.count, n_samples)`` matrix of ``sinc(2W t - k)`` with ``|2W t - k| <= taps``."""
    u = 2.0 * W * grid.times
    k = k_start + np.arange(n_samples)
    d = u[:, None] - k[None, :]
    return np.where(np.abs(d) <= taps + 1e-9, np.sinc(d), 0.0)


@lru_cache(maxsize=16)
def _cached_matrix(W, start, step, count, k_start, n_samples, taps):
    return interpolation_matrix(W, SampleGrid(start, step, count), k_start, n_samples, taps)


def interpolate_sinc(samples: NyquistSamples, grid: SampleGrid, taps: int) -> SampledPath:
    """Truncated Shannon series ``x(t) = sum_k s_k sinc(2Wt - k)`` on ``grid``.

    ``info["variance_deficit"]`` is the worst relative variance lost to the
    truncation over the grid (``1 - sum_k sinc^2``).
    """
    if int(taps) != taps or taps < 1:
        raise ValueError("taps must be a positive integer")
    W = samples.W
    need_lo, need_hi = _sinc_window(W, grid, taps)
    if samples.k_start > need_lo or samples.k_stop < need_hi:
        short = max(samples.k_start - need_lo, need_hi - samples.k_stop)
        raise ValueError(
            f"Nyquist samples do not cover the sinc window: {short} more sample(s) needed "
            f"per side (require pad_taps >= {taps} beyond the grid)"
        )
    A = interpolation_matrix(W, grid, samples.k_start, len(samples.values), int(taps))
    deficit = float(np.max(1.0 - np.sum(A * A, axis=1)))
    return SampledPath(grid, A @ samples.values, info={"variance_deficit": deficit, "taps": int(taps)})


def _fft_layout(config: ProcessConfig) -> tuple[int, int, int, int]:
    """(pad points, horizon points, FFT length, highest band bin J)."""
    grid = config.grid
    pad = config.pad_taps * config.oversample
    n_fft = sfft.next_fast_len(grid.count + 2 * pad, real=True)
    period = n_fft * config.step
    J = math.ceil(config.W * period - 1e-9) - 1
    if J < 1 or J >= n_fft // 2:
        raise ValueError("FFT grid cannot resolve the band; increase oversample or T")
    return pad, grid.count, n_fft, J


def _fft_paths(config: ProcessConfig, normals: np.ndarray) -> np.ndarray:
    pad, count, n_fft, J = _fft_layout(config)
    m = normals.shape[0]
    v = 2.0 * config.W / (2 * J + 1)
    spec = np.zeros((m, n_fft // 2 + 1), dtype=complex)
    spec[:, 0] = normals[:, 0] * math.sqrt(v)
    spec[:, 1 : J + 1] = (normals[:, 1 : J + 1] + 1j * normals[:, J + 1 : 2 * J + 1]) * math.sqrt(v / 2.0)
    x = sfft.irfft(spec * n_fft, n=n_fft, axis=1)
    return x[:, pad : pad + count]


def fft_draws(config: ProcessConfig) -> int:
    """Normals consumed per FFT path."""
    return 2 * _fft_layout(config)[3] + 1


def synth_fft(config: ProcessConfig, stream: RngStream) -> SampledPath:
    """One path by discretized spectral synthesis on a padded circular grid."""
    if config.method != "fft":
        raise ValueError("synth_fft requires method='fft'")
    if config.step > 1.0 / (2.0 * config.W):
        raise ValueError("grid step is coarser than the Nyquist interval")
    z = stream.normals(fft_draws(config))[None, :]
    return SampledPath(config.grid, _fft_paths(config, z)[0], config=config, replication_id=stream.stream_id)


def _sinc_layout(config: ProcessConfig) -> tuple[int, int]:
    pad = config.pad_taps / (2.0 * config.W)
    k0, k1 = _nyquist_range(config.W, -pad, config.T + pad)
    return k0, k1 - k0 + 1


def sample_paths(config: ProcessConfig, replication_ids: Iterable[int]) -> np.ndarray:
    """Base paths for the given replication ids, one row each, on ``config.grid``.

    Row ``r`` is the path ``make_path(config, replication_ids[r])`` (the FFT
    rows are bit-identical; sinc rows agree up to BLAS summation order).
    """
    ids = [int(i) for i in replication_ids]
    if config.method == "fft":
        draws = fft_draws(config)
        z = np.stack([RngStream(config.seed, i).normals(draws) for i in ids]) if ids else np.empty((0, draws))
        return _fft_paths(config, z)
    grid = config.grid
    k0, q = _sinc_layout(config)
    A = _cached_matrix(config.W, grid.start, grid.step, grid.count, k0, q, config.pad_taps)
    if not ids:
        return np.empty((0, grid.count))
    s = np.stack([RngStream(config.seed, i).normals(q) for i in ids]) * math.sqrt(2.0 * config.W)
    return s @ A.T


def make_path(config: ProcessConfig, replication_id: int) -> SampledPath:
    """Path number ``replication_id`` of the family described by ``config``."""
    stream = gaussian_stream(config.seed, replication_id)
    if config.method == "fft":
        return synth_fft(config, stream)
    pad = config.pad_taps / (2.0 * config.W)
    samples = nyquist_samples(config.W, (-pad, config.T + pad), stream)
    path = interpolate_sinc(samples, config.grid, config.pad_taps)
    path.config = config
    path.replication_id = int(replication_id)
    return path
