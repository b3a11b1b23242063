"""Experiment configuration, orchestration and report emission.

Config files are flat ``key=value`` lines (``#`` starts a comment).  Values
resolve with precedence command-line flags > config file > defaults, and
every run is reproducible from its manifest: there is no entropy-seeded mode.
"""

from __future__ import annotations

import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .estimators import (
    StatReport,
    cross_interval_corr,
    delta_action_check,
    empirical_char_functional,
    empirical_cov,
    gaussianity_report,
    intensity_check,
    limit_intensity,
    run_replications,
)
from .grid import SampleGrid, TestFunction
from .kernels import power_cov, power_cov_from_corr, squared_cov_mass, wick_cov_oracle
from .synth import METHODS, ProcessConfig
from .transform import PolySpec, make_trig_basis

__all__ = [
    "ConfigError",
    "ExperimentSpec",
    "RunManifest",
    "EXPERIMENTS",
    "CSV_HEADER",
    "parse_config",
    "run_experiment",
    "emit_report",
    "csv_text",
    "json_text",
]

EXPERIMENTS = ("kernel-check", "whiteness", "char-functional", "independence", "power-sweep", "poly")
FORMATS = ("csv", "json", "both")
CSV_HEADER = "experiment,W,n,M,metric,estimate,stderr,z,threshold,verdict"

# the finite-W allowance used by the acceptance criteria at M = 2e4
LIMIT_TOL = 0.05
MASS_L = 25.0
H_NORMS2 = (0.25, 1.0, 4.0)


class ConfigError(ValueError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    W: tuple[float, ...]
    n: int = 2
    M: int = 10000
    T: float = 1.0
    N: int = 8
    seed: int = 0
    workers: int = 1
    oversample: int = 4
    pad_taps: int = 64
    method: str = "fft"
    out: str = "-"
    format: str = "csv"
    basis: str = "trig"
    test_function: str = "trig:1"

    def process_config(self, W: float) -> ProcessConfig:
        return ProcessConfig(
            W=W, T=self.T, oversample=self.oversample, pad_taps=self.pad_taps, seed=self.seed, method=self.method
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["W"] = list(self.W)
        return d

    def to_text(self) -> str:
        """Config-file text that parses back to this spec."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "W":
                v = ",".join(_fmt(w) for w in v)
            elif isinstance(v, float):
                v = _fmt(v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"


KEYS = tuple(f.name for f in fields(ExperimentSpec))
DEFAULTS = {f.name: f.default for f in fields(ExperimentSpec) if f.name not in ("experiment", "W")}


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _parse_int(key, raw, lo=None, hi=None):
    try:
        v = int(str(raw).strip(), 10)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {raw!r}") from None
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ConfigError(key, f"value {v} out of range")
    return v


def _parse_float(key, raw, positive=True):
    try:
        v = float(str(raw).strip())
    except ValueError:
        raise ConfigError(key, f"expected a number, got {raw!r}") from None
    if not math.isfinite(v) or (positive and v <= 0):
        raise ConfigError(key, f"value {raw!r} must be a positive finite number")
    return v


def _parse_choice(key, raw, choices):
    v = str(raw).strip()
    if v not in choices:
        raise ConfigError(key, f"must be one of {', '.join(choices)}; got {v!r}")
    return v


def _parse_test_function(key, raw):
    v = str(raw).strip()
    kind, _, arg = v.partition(":")
    if kind != "trig" or not arg:
        raise ConfigError(key, f"expected 'trig:<k>', got {v!r}")
    _parse_int(key, arg, lo=1)
    return v


def _coerce(key: str, raw: Any):
    if key == "experiment":
        return _parse_choice(key, raw, EXPERIMENTS)
    if key == "W":
        items = raw if isinstance(raw, (list, tuple)) else str(raw).split(",")
        vals = tuple(_parse_float(key, w) for w in items if str(w).strip())
        if not vals:
            raise ConfigError(key, "needs at least one bandwidth")
        return vals
    if key == "n":
        return _parse_int(key, raw, lo=1, hi=6)
    if key == "M":
        return _parse_int(key, raw, lo=2)
    if key in ("N", "workers", "oversample", "pad_taps"):
        return _parse_int(key, raw, lo=1)
    if key == "seed":
        return _parse_int(key, raw, lo=0, hi=2**64 - 1)
    if key == "T":
        return _parse_float(key, raw)
    if key == "method":
        return _parse_choice(key, raw, METHODS)
    if key == "format":
        return _parse_choice(key, raw, FORMATS)
    if key == "basis":
        return _parse_choice(key, raw, ("trig",))
    if key == "test_function":
        return _parse_test_function(key, raw)
    if key == "out":
        v = str(raw).strip()
        if not v:
            raise ConfigError(key, "empty output path")
        return v
    raise ConfigError(key, "unknown key")


def read_config_text(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines into a raw dict (later duplicates win)."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(key or f"line {lineno}", f"line {lineno} is not key=value")
        if key not in KEYS:
            raise ConfigError(key, "unknown key")
        out[key] = value.strip()
    return out


def parse_config(path: str | Path | None = None, overrides: dict | None = None, text: str | None = None) -> ExperimentSpec:
    """Resolve a spec from a config file (or ``text``) plus flag ``overrides``."""
    raw: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from None
    if text is not None:
        raw.update(read_config_text(text))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in KEYS:
            raise ConfigError(key, "unknown key")
        raw[key] = value
    for key in ("experiment", "W"):
        if key not in raw:
            raise ConfigError(key, "missing required key")
    values = {key: _coerce(key, value) for key, value in raw.items()}
    return ExperimentSpec(**values)


@dataclass
class RunManifest:
    tool_version: str
    config: dict
    seeds: dict
    wall_clock: float
    rows: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r["verdict"] for r in self.rows)

    def add(self, spec: ExperimentSpec, W: float, report: StatReport, metric: str | None = None, n: int | None = None, M: int | None = None):
        self.rows.append(
            {
                "experiment": spec.experiment,
                "W": float(W),
                "n": spec.n if n is None else n,
                "M": 0 if M is None else M,
                "metric": metric or report.name,
                "estimate": report.estimate,
                "stderr": report.stderr,
                "z": report.z,
                "threshold": report.threshold,
                "verdict": bool(report.verdict),
                "report": report.to_dict(),
            }
        )

    def sorted_rows(self) -> list[dict]:
        return sorted(self.rows, key=lambda r: (r["W"], r["metric"]))


def _test_function(spec: ExperimentSpec, grid: SampleGrid) -> TestFunction:
    k = int(spec.test_function.split(":")[1])
    return make_trig_basis(k, spec.T, grid)[k - 1]


def _gaussian_bump(W: float, degree: int, L: float = MASS_L) -> TestFunction:
    step = 1.0 / (8.0 * degree * W)
    grid = SampleGrid.covering(-L, L, step)
    return TestFunction.from_callable(lambda t: np.exp(-0.5 * t**2), grid, label="gauss")


def _oracle_report(W: float) -> StatReport:
    """Worst relative gap between the Hermite and pair-partition covariances."""
    worst = 0.0
    for n in range(1, 6):
        for var in (1.0, 2.0 * W):
            for rho in (-1.0, -0.5, 0.0, 0.3, 0.99, 1.0):
                ref = wick_cov_oracle(n, rho, var)
                got = power_cov_from_corr(n, rho, var)
                worst = max(worst, abs(got - ref) / abs(ref) if ref else abs(got))
    return StatReport("oracle_equivalence", worst, 0.0, 0.0, 1e-12, worst <= 1e-12, {"W": W})


def _run_kernel_check(spec, manifest):
    for W in spec.W:
        mass = squared_cov_mass(W, MASS_L)
        lo = 1.0 - 1.0 / (W * math.pi**2 * MASS_L) - 1e-6
        ok = lo <= mass <= 1.0 + 1e-6
        manifest.add(spec, W, StatReport("unit_mass", mass, 0.0, 0.0, lo, ok, {"W": W, "L": MASS_L}))
        manifest.add(spec, W, delta_action_check(spec.n, W, _gaussian_bump(W, spec.n), tol=LIMIT_TOL))
        manifest.add(spec, W, _oracle_report(W))
        lags = np.array([0.0, 0.125, 0.25, 0.5]) / W
        direct = power_cov(spec.n, W, lags)
        ref = np.array([wick_cov_oracle(spec.n, float(r), 2.0 * W) for r in np.sinc(2.0 * W * lags)])
        err = float(np.max(np.abs(direct - ref) / np.maximum(np.abs(ref), 1e-300)))
        manifest.add(spec, W, StatReport("power_cov_lags", err, 0.0, 0.0, 1e-12, err <= 1e-12, {"W": W}))


def _halves(spec, interval_gap):
    g = interval_gap * spec.T
    return (0.0, 0.5 * (spec.T - g)), (0.5 * (spec.T + g), spec.T)


def _limit_tol(M: int) -> float:
    return max(LIMIT_TOL, 4.0 / math.sqrt(M))


def _run_whiteness(spec, manifest, char_only=False):
    for W in spec.W:
        cfg = spec.process_config(W)
        grid = cfg.grid
        h = _test_function(spec, grid)
        if char_only:
            rs = run_replications(cfg, spec.n, [h], spec.M, workers=spec.workers)
            s = rs.column(0)
        else:
            basis = make_trig_basis(spec.N, spec.T, grid)
            rs = run_replications(cfg, spec.n, list(basis.functions) + [h], spec.M, workers=spec.workers)
            proj = rs.payload[:, : spec.N]
            s = rs.payload[:, spec.N]
            manifest.add(spec, W, empirical_cov(proj), M=spec.M)
            per_coord = [gaussianity_report(proj[:, j], name=f"gaussianity[{j + 1}]") for j in range(spec.N)]
            worst = max(per_coord, key=lambda r: r.estimate)
            summary = StatReport(
                "gaussianity",
                worst.estimate,
                worst.stderr,
                worst.z,
                worst.threshold,
                all(r.verdict for r in per_coord),
                {"W": W, "M": spec.M},
                {"coordinates": [r.details for r in per_coord]},
            )
            manifest.add(spec, W, summary, M=spec.M)
        h_norm2 = h.norm2()
        char_reports = []
        for target in H_NORMS2:
            scale = math.sqrt(target / h_norm2)
            r = empirical_char_functional(scale * s, target, threshold=_limit_tol(spec.M))
            char_reports.append(r)
            if char_only:
                manifest.add(spec, W, r, metric=f"char_functional[h2={_fmt(target)}]", M=spec.M)
        if not char_only:
            worst = max(char_reports, key=lambda r: r.estimate)
            worst.details["per_norm"] = {_fmt(t): r.estimate for t, r in zip(H_NORMS2, char_reports)}
            worst.verdict = all(r.verdict for r in char_reports)
            manifest.add(spec, W, worst, M=spec.M)
            I1, I2 = _halves(spec, 0.25)
            manifest.add(
                spec, W,
                cross_interval_corr(cfg, spec.n, h, I1, I2, spec.M, tol=_limit_tol(spec.M), workers=spec.workers),
                M=spec.M,
            )


def _run_independence(spec, manifest):
    I1, I2 = _halves(spec, 0.25)
    base_rho = {}
    for W in spec.W:
        cfg = spec.process_config(W)
        h = _test_function(spec, cfg.grid)
        rb = cross_interval_corr(cfg, "base", h, I1, I2, spec.M, tol=_limit_tol(spec.M), workers=spec.workers)
        base_rho[W] = rb.estimate
        manifest.add(spec, W, rb, metric="independence_base", n=1, M=spec.M)
        rp = cross_interval_corr(cfg, spec.n, h, I1, I2, spec.M, tol=_limit_tol(spec.M), workers=spec.workers)
        manifest.add(spec, W, rp, metric="independence_power", M=spec.M)
    for W in spec.W:
        if W / 2.0 in base_rho:
            prev, cur = abs(base_rho[W / 2.0]), abs(base_rho[W])
            ratio = cur / prev if prev > 0 else math.inf
            r = StatReport("base_corr_halving", ratio, 0.0, 0.0, 0.3, abs(ratio - 0.5) <= 0.3 * 0.5, {"W": W, "W_prev": W / 2.0})
            manifest.add(spec, W, r, n=1, M=spec.M)


def intensity_tol(degree: int) -> float:
    return 0.15 if degree >= 4 else 0.1


def _run_power_sweep(spec, manifest):
    for W in spec.W:
        f = _test_function(spec, spec.process_config(W).grid)
        r = intensity_check(
            spec.n, W, f, spec.M, tol=intensity_tol(spec.n), T=spec.T, seed=spec.seed,
            oversample=spec.oversample, pad_taps=spec.pad_taps, method=spec.method, workers=spec.workers,
        )
        manifest.add(spec, W, r, M=spec.M)


def poly_specs(n: int, W: float) -> dict[str, PolySpec]:
    """The two built-in polynomials of degree n: all-ones and the Hermite combination."""
    return {"mixed": PolySpec((1.0,) * n), "hermite": PolySpec.hermite(n, W)}


def _run_poly(spec, manifest):
    for W in spec.W:
        f = _test_function(spec, spec.process_config(W).grid)
        for label, poly in poly_specs(spec.n, W).items():
            r = intensity_check(
                poly, W, f, spec.M, tol=intensity_tol(spec.n), T=spec.T, seed=spec.seed,
                oversample=spec.oversample, pad_taps=spec.pad_taps, method=spec.method, workers=spec.workers,
            )
            r.details["poly"] = list(poly.coeffs)
            r.details["limit_intensity"] = limit_intensity(poly, W)
            manifest.add(spec, W, r, metric=f"intensity_{label}", M=spec.M)


_RUNNERS = {
    "kernel-check": _run_kernel_check,
    "whiteness": _run_whiteness,
    "char-functional": lambda spec, m: _run_whiteness(spec, m, char_only=True),
    "independence": _run_independence,
    "power-sweep": _run_power_sweep,
    "poly": _run_poly,
}


def run_experiment(spec: ExperimentSpec) -> RunManifest:
    """Run every check of ``spec.experiment`` across ``spec.W``."""
    started = time.perf_counter()
    manifest = RunManifest(
        tool_version=__version__,
        config=spec.to_dict(),
        seeds={"seed": spec.seed, "replication_ids": f"0..{spec.M - 1}"},
        wall_clock=0.0,
    )
    _RUNNERS[spec.experiment](spec, manifest)
    manifest.wall_clock = time.perf_counter() - started
    return manifest


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def csv_text(manifest: RunManifest) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for r in manifest.sorted_rows():
        buf.write(
            ",".join(
                [
                    r["experiment"],
                    _num(r["W"]),
                    str(r["n"]),
                    str(r["M"]),
                    r["metric"],
                    _num(r["estimate"]),
                    _num(r["stderr"]),
                    _num(r["z"]),
                    _num(r["threshold"]),
                    "pass" if r["verdict"] else "fail",
                ]
            )
            + "\n"
        )
    return buf.getvalue()


def _dump(obj, indent=0) -> str:
    """JSON with every float written to 17 significant digits (non-finite -> null)."""
    pad = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_dump(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[" + ", ".join(_dump(v, indent + 1) for v in obj) + "]"
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format(float(obj), ".17g") if math.isfinite(obj) else "null"
    return json.dumps(str(obj))


def json_text(manifest: RunManifest) -> str:
    doc = {
        "manifest": {
            "tool_version": manifest.tool_version,
            "config": manifest.config,
            "seeds": manifest.seeds,
            "wall_clock": manifest.wall_clock,
            "passed": manifest.passed,
        },
        "reports": [
            {k: r[k] for k in ("experiment", "W", "n", "M", "metric")} | r["report"] | {"verdict": "pass" if r["verdict"] else "fail"}
            for r in manifest.sorted_rows()
        ],
    }
    return _dump(doc) + "\n"


def emit_report(manifest: RunManifest, format: str = "csv", out: str = "-", stream=None) -> list[str]:
    """Write the CSV and/or JSON report; returns the paths written (``-`` = ``stream``)."""
    if format not in FORMATS:
        raise ConfigError("format", f"must be one of {', '.join(FORMATS)}")
    wanted = ("csv", "json") if format == "both" else (format,)
    texts = {"csv": csv_text, "json": json_text}
    written = []
    for fmt in wanted:
        text = texts[fmt](manifest)
        if out == "-":
            (stream or sys.stdout).write(text)
            written.append("-")
            continue
        path = Path(out)
        if format == "both":
            stem = path.with_suffix("") if path.suffix in (".csv", ".json") else path
            path = stem.with_name(stem.name + "." + fmt)
        try:
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write report to {path}: {exc}") from exc
        written.append(str(path))
    return written

