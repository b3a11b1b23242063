import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from wnlab.grid import SampleGrid
from wnlab.kernels import sinc_cov
from wnlab.synth import (
    ProcessConfig,
    RngStream,
    SampledPath,
    gaussian_stream,
    interpolate_sinc,
    make_path,
    nyquist_samples,
    sample_paths,
    synth_fft,
)


class TestProcessConfig:
    def test_grid_covers_horizon(self):
        cfg = ProcessConfig(W=4.0, T=1.0, oversample=4)
        g = cfg.grid
        assert g.step == pytest.approx(1 / 32)
        assert g.start == 0 and g.stop >= 1.0 - 1e-12
        assert g.step <= 1 / (2 * cfg.W)

    @pytest.mark.parametrize(
        "kwargs",
        [dict(W=0), dict(W=-1), dict(W=1, T=0), dict(W=1, oversample=0), dict(W=1, oversample=1.5),
         dict(W=1, pad_taps=0), dict(W=1, seed=-1), dict(W=1, method="spline")],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            ProcessConfig(**kwargs)


class TestSampledPath:
    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            SampledPath(SampleGrid(0, 0.1, 5), np.zeros(4))

    def test_nonfinite(self):
        with pytest.raises(ValueError):
            SampledPath(SampleGrid(0, 0.1, 2), np.array([0.0, np.nan]))


class TestRngStream:
    def test_deterministic(self):
        a = gaussian_stream(7, 3).normals(1001)
        b = gaussian_stream(7, 3).normals(1001)
        assert a.tobytes() == b.tobytes()

    def test_chunking_invariant_counter(self):
        s = RngStream(1, 1)
        s.normals(10)
        assert s.counter == 10
        s.normals(3)
        assert s.counter == 14  # odd sizes consume a whole pair

    def test_mean_bound(self):
        x = gaussian_stream(42, 0).normals(100_000)
        assert abs(x.mean()) <= 4 / math.sqrt(1e5)
        assert abs(x.var() - 1) <= 4 * math.sqrt(2 / 1e5)

    def test_streams_uncorrelated(self):
        a = gaussian_stream(42, 0).normals(100_000)
        b = gaussian_stream(42, 1).normals(100_000)
        assert abs(np.corrcoef(a, b)[0, 1]) <= 4 / math.sqrt(1e5)

    def test_seeds_differ(self):
        assert not np.array_equal(gaussian_stream(0, 0).normals(8), gaussian_stream(1, 0).normals(8))

    def test_normal_law(self):
        x = gaussian_stream(5, 9).normals(20_000)
        assert stats.kstest(x, "norm").pvalue > 1e-4

    @pytest.mark.parametrize("seed,sid", [(-1, 0), (0, 2**64), (1.5, 0)])
    def test_rejects_bad_keys(self, seed, sid):
        with pytest.raises(ValueError):
            RngStream(seed, sid)


class TestNyquist:
    def test_unit_variance_at_half(self):
        s = nyquist_samples(0.5, (0, 20_000), gaussian_stream(0, 0))
        assert s.values.var() == pytest.approx(1.0, abs=0.04)

    def test_variance_and_lag1(self):
        W = 4.0
        s = nyquist_samples(W, (0, 10_000 / (2 * W)), gaussian_stream(3, 0))
        assert len(s.values) >= 10_000
        assert 0.94 <= s.values.var() / (2 * W) <= 1.06
        x = s.values - s.values.mean()
        assert abs(np.dot(x[:-1], x[1:]) / np.dot(x, x)) <= 0.04

    def test_times_cover_span(self):
        s = nyquist_samples(2.0, (0.1, 0.9), gaussian_stream(0, 0))
        assert s.times[0] <= 0.1 and s.times[-1] >= 0.9
        assert np.allclose(np.diff(s.times), 0.25)

    @pytest.mark.parametrize("span", [(1.0, 1.0), (2.0, 1.0), (0.0, math.inf)])
    def test_rejects_bad_span(self, span):
        with pytest.raises(ValueError):
            nyquist_samples(1.0, span, gaussian_stream(0, 0))


class TestInterpolation:
    def _samples(self, W, taps, seed=0):
        return nyquist_samples(W, (-taps / (2 * W), 1 + taps / (2 * W)), gaussian_stream(seed, 0))

    def test_reproduces_nyquist_samples(self):
        W, taps = 4.0, 16
        s = self._samples(W, taps)
        grid = SampleGrid(0.0, 1 / (2 * W), int(2 * W) + 1)
        path = interpolate_sinc(s, grid, taps)
        k = np.round(grid.times * 2 * W).astype(int) - s.k_start
        assert np.allclose(path.values, s.values[k], atol=1e-12)

    def test_deficit_shrinks_with_taps(self):
        W = 4.0
        grid = SampleGrid.covering(0, 1, 1 / (8 * W))
        d = [interpolate_sinc(self._samples(W, 64), grid, taps).info["variance_deficit"] for taps in (32, 64)]
        assert 0 < d[1] < d[0] < 0.01

    def test_insufficient_padding(self):
        W = 4.0
        s = nyquist_samples(W, (0, 1), gaussian_stream(0, 0))
        with pytest.raises(ValueError, match="pad_taps"):
            interpolate_sinc(s, SampleGrid.covering(0, 1, 1 / 16), 8)

    def test_lag_covariance_matches_sinc(self):
        W = 4.0
        cfg = ProcessConfig(W=W, T=0.5, oversample=4, pad_taps=32, seed=11, method="sinc_interp")
        X = sample_paths(cfg, range(20_000))
        i0 = cfg.grid.count // 2
        prod = X[:, i0] * X[:, i0 + 1]  # lag one grid step = 1/(8W)
        z = (prod.mean() - sinc_cov(W, 1 / (8 * W))) / (prod.std(ddof=1) / math.sqrt(prod.size))
        assert abs(z) <= 4


class TestFFT:
    def test_mean_and_variance(self):
        W = 8.0
        cfg = ProcessConfig(W=W, seed=2)
        x = sample_paths(cfg, range(10_000))[:, cfg.grid.count // 3]
        assert abs(x.mean()) <= 4 * math.sqrt(2 * W / 1e4)
        assert abs(x.var(ddof=1) / (2 * W) - 1) <= 0.06

    def test_exact_variance_of_construction(self):
        # the per-bin variances sum to 2W exactly, so E x(t)^2 = 2W at every t
        cfg = ProcessConfig(W=3.0, T=0.5, seed=0)
        X = sample_paths(cfg, range(4000))
        assert X.var(axis=0).mean() == pytest.approx(6.0, rel=0.05)

    def test_real_and_grid(self):
        cfg = ProcessConfig(W=2.0, seed=0)
        p = synth_fft(cfg, gaussian_stream(0, 5))
        assert p.values.dtype == float and p.grid.same_as(cfg.grid)
        assert p.kind == "base" and p.replication_id == 5

    def test_rejects_wrong_method(self):
        with pytest.raises(ValueError):
            synth_fft(ProcessConfig(W=1.0, method="sinc_interp"), gaussian_stream(0, 0))

    def test_stationary_variance(self):
        cfg = ProcessConfig(W=8.0, seed=4)
        X = sample_paths(cfg, range(10_000))
        n = cfg.grid.count
        v = X[:, [1, n // 2, n - 2]].var(axis=0, ddof=1)
        se = 16.0 * math.sqrt(2 / 1e4)
        assert np.ptp(v) <= 4 * math.sqrt(2) * se

    @pytest.mark.parametrize("lag_steps", [0, 1, 2, 4])
    def test_lag_covariance(self, lag_steps):
        W = 8.0
        cfg = ProcessConfig(W=W, seed=9)
        X = sample_paths(cfg, range(10_000))
        i0 = cfg.grid.count // 2
        prod = X[:, i0] * X[:, i0 + lag_steps]
        z = (prod.mean() - sinc_cov(W, lag_steps * cfg.step)) / (prod.std(ddof=1) / 100)
        assert abs(z) <= 4


class TestMakePath:
    @pytest.mark.parametrize("method", ["fft", "sinc_interp"])
    def test_deterministic(self, method):
        cfg = ProcessConfig(W=4.0, seed=1, method=method, pad_taps=16)
        assert make_path(cfg, 3).values.tobytes() == make_path(cfg, 3).values.tobytes()
        assert make_path(cfg, 3).kind == "base"

    @pytest.mark.parametrize("method", ["fft", "sinc_interp"])
    def test_batch_matches_single(self, method):
        cfg = ProcessConfig(W=4.0, seed=1, method=method, pad_taps=16)
        X = sample_paths(cfg, [5, 2, 9])
        for row, i in zip(X, [5, 2, 9]):
            assert np.allclose(row, make_path(cfg, i).values, rtol=0, atol=1e-12)

    def test_fft_batch_bit_identical(self):
        cfg = ProcessConfig(W=4.0, seed=1)
        X = sample_paths(cfg, [0, 1, 2])
        assert X[1].tobytes() == make_path(cfg, 1).values.tobytes()

    def test_distinct_ids_independent(self):
        cfg = ProcessConfig(W=4.0, seed=0)
        M = 4000
        X = sample_paths(cfg, range(2 * M))
        w = cfg.grid.trapezoid_weights()
        y = X @ w
        assert abs(np.corrcoef(y[0::2], y[1::2])[0, 1]) <= 4 / math.sqrt(M)

    @given(st.integers(0, 2**64 - 1), st.integers(0, 2**20))
    @settings(max_examples=20, deadline=None)
    def test_pure_function(self, seed, rid):
        cfg = ProcessConfig(W=1.0, T=0.25, oversample=2, pad_taps=4, seed=seed)
        assert np.array_equal(make_path(cfg, rid).values, make_path(cfg, rid).values)
