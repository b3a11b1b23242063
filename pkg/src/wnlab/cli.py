"""``wnlab`` command line.

Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 configuration error,
3 runtime or numeric error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import EXPERIMENTS, FORMATS, ConfigError, emit_report, parse_config, run_experiment
from .synth import METHODS

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wnlab", description="Verify that renormalized powers of band-limited noise become white noise.")
    p.add_argument("experiment", nargs="?", choices=EXPERIMENTS)
    p.add_argument("--config", metavar="FILE")
    p.add_argument("--W", help="comma-separated bandwidths")
    p.add_argument("--n", type=str)
    p.add_argument("--M", type=str)
    p.add_argument("--T", type=str)
    p.add_argument("--N", type=str)
    p.add_argument("--seed", type=str)
    p.add_argument("--workers", type=str)
    p.add_argument("--oversample", type=str)
    p.add_argument("--pad-taps", dest="pad_taps", type=str)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--basis")
    p.add_argument("--test-function", dest="test_function")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--format", choices=FORMATS)
    return p


def _error(kind: str, exc: Exception, **extra) -> None:
    record = {"error": kind, "message": str(exc)} | extra
    sys.stderr.write(json.dumps(record) + "\n")


def main(argv=None) -> int:
    try:
        args = vars(build_parser().parse_args(argv))
        config = args.pop("config")
        spec = parse_config(config, overrides=args)
    except ConfigError as exc:
        _error("config", exc, key=exc.key)
        return EXIT_CONFIG
    try:
        manifest = run_experiment(spec)
        emit_report(manifest, spec.format, spec.out)
    except Exception as exc:  # any module failure aborts the run
        _error("runtime", exc, type=type(exc).__name__)
        return EXIT_RUNTIME
    return EXIT_OK if manifest.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
