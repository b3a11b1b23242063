import json

import pytest

from wnlab.cli import main
from wnlab.harness import (
    CSV_HEADER,
    ConfigError,
    ExperimentSpec,
    RunManifest,
    csv_text,
    emit_report,
    json_text,
    parse_config,
    run_experiment,
)


def _kernel_spec(**kw):
    return parse_config(overrides={"experiment": "kernel-check", "W": "4,16,64", **kw})


class TestParseConfig:
    def test_defaults_filled(self):
        spec = parse_config(text="experiment=kernel-check\nW=4\n")
        assert spec.seed == 0 and spec.out == "-" and spec.format == "csv"
        assert spec.W == (4.0,) and spec.M == 10000 and spec.method == "fft"

    def test_negative_M_names_key(self):
        with pytest.raises(ConfigError) as exc:
            parse_config(text="experiment=whiteness\nW=4\nM=-5\n")
        assert exc.value.key == "M"

    def test_flag_beats_file(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("experiment=whiteness  # comment\nW=4\nM=100\nseed=3\n")
        spec = parse_config(p, overrides={"M": "250", "seed": None})
        assert spec.M == 250 and spec.seed == 3

    @pytest.mark.parametrize(
        "text,key",
        [
            ("W=4\n", "experiment"),
            ("experiment=whiteness\n", "W"),
            ("experiment=whiteness\nW=4\ncolour=red\n", "colour"),
            ("experiment=whiteness\nW=0\n", "W"),
            ("experiment=whiteness\nW=4\nmethod=spline\n", "method"),
            ("experiment=nope\nW=4\n", "experiment"),
            ("experiment=whiteness\nW=4\nn=seven\n", "n"),
            ("experiment=whiteness\nW=4\ntest_function=poly:1\n", "test_function"),
            ("experiment=whiteness\nW=4\njunk\n", "junk"),
        ],
    )
    def test_rejections(self, text, key):
        with pytest.raises(ConfigError) as exc:
            parse_config(text=text)
        assert exc.value.key == key

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            parse_config(tmp_path / "none.cfg")
        assert exc.value.key == "config"

    def test_round_trip(self):
        spec = parse_config(overrides={"experiment": "power-sweep", "W": "2,8.5", "n": "3", "T": "0.5", "seed": "99"})
        assert parse_config(text=spec.to_text()) == spec


def _report(name, W, verdict=True):
    from wnlab.estimators import StatReport

    return StatReport(name, 0.1, 0.01, 1.0, 0.5, verdict, {"W": W})


class TestReport:
    def test_header_only_for_empty(self):
        m = RunManifest("0", {}, {}, 0.0)
        assert csv_text(m) == CSV_HEADER + "\n"
        assert CSV_HEADER == "experiment,W,n,M,metric,estimate,stderr,z,threshold,verdict"

    def test_one_metric_one_row(self):
        spec = ExperimentSpec("kernel-check", (4.0,))
        m = RunManifest("0", spec.to_dict(), {}, 0.0)
        m.add(spec, 4.0, _report("unit_mass", 4.0))
        lines = csv_text(m).splitlines()
        assert len(lines) == 2 and lines[1].startswith("kernel-check,4,2,0,unit_mass,0.10000000000000001,")
        doc = json.loads(json_text(m))
        assert set(doc) == {"manifest", "reports"} and len(doc["reports"]) == 1
        assert doc["reports"][0]["verdict"] == "pass" and doc["manifest"]["passed"] is True

    def test_rows_sorted_by_W_then_metric(self):
        spec = ExperimentSpec("kernel-check", (4.0, 16.0, 64.0))
        m = RunManifest("0", spec.to_dict(), {}, 0.0)
        for W in (64.0, 4.0, 16.0):
            for name in ("d", "b", "c", "a"):
                m.add(spec, W, _report(name, W))
        rows = csv_text(m).splitlines()[1:]
        assert len(rows) == 12
        keys = [(float(r.split(",")[1]), r.split(",")[4]) for r in rows]
        assert keys == sorted(keys)

    def test_failed_row(self):
        spec = ExperimentSpec("kernel-check", (4.0,))
        m = RunManifest("0", spec.to_dict(), {}, 0.0)
        m.add(spec, 4.0, _report("x", 4.0, verdict=False))
        assert not m.passed and csv_text(m).rstrip().endswith(",fail")

    def test_both_formats_to_files(self, tmp_path):
        m = run_experiment(_kernel_spec(W="4"))
        paths = emit_report(m, "both", str(tmp_path / "out.csv"))
        assert paths == [str(tmp_path / "out.csv"), str(tmp_path / "out.json")]
        json.loads((tmp_path / "out.json").read_text())


class TestRunExperiment:
    def test_kernel_check_sweep(self):
        m = run_experiment(_kernel_spec())
        rows = m.sorted_rows()
        assert len(rows) == 12 and m.passed
        mass = [r for r in rows if r["metric"] == "unit_mass"]
        assert [r["W"] for r in mass] == [4.0, 16.0, 64.0]

    def test_kernel_check_deterministic(self):
        assert csv_text(run_experiment(_kernel_spec())) == csv_text(run_experiment(_kernel_spec()))

    def test_sampling_experiment_deterministic_and_worker_free(self):
        base = {"experiment": "power-sweep", "W": "8", "M": "600", "seed": "5"}
        a = csv_text(run_experiment(parse_config(overrides=base)))
        b = csv_text(run_experiment(parse_config(overrides=base | {"workers": "3"})))
        assert a == b

    def test_json_stable_apart_from_clock(self):
        spec = parse_config(overrides={"experiment": "char-functional", "W": "4", "M": "500"})
        a, b = json.loads(json_text(run_experiment(spec))), json.loads(json_text(run_experiment(spec)))
        a["manifest"].pop("wall_clock"), b["manifest"].pop("wall_clock")
        assert a == b
        assert [r["metric"] for r in a["reports"]] == [
            "char_functional[h2=0.25]", "char_functional[h2=1]", "char_functional[h2=4]"
        ]

    def test_whiteness_metrics(self):
        spec = parse_config(overrides={"experiment": "whiteness", "W": "4", "M": "400"})
        names = {r["metric"] for r in run_experiment(spec).rows}
        assert names == {"projection_cov", "gaussianity", "char_functional", "independence"}

    def test_poly_metrics(self):
        spec = parse_config(overrides={"experiment": "poly", "W": "8", "M": "400", "n": "3"})
        rows = run_experiment(spec).rows
        assert {r["metric"] for r in rows} == {"intensity_mixed", "intensity_hermite"}
        herm = next(r for r in rows if r["metric"] == "intensity_hermite")
        assert herm["report"]["details"]["limit_intensity"] == pytest.approx(9 / 8)

    def test_independence_metrics(self):
        spec = parse_config(overrides={"experiment": "independence", "W": "4,8", "M": "300"})
        names = [r["metric"] for r in run_experiment(spec).sorted_rows()]
        assert names.count("base_corr_halving") == 1 and names.count("independence_base") == 2


class TestCLI:
    def test_kernel_check_exit_zero(self, capsys):
        assert main(["kernel-check", "--W", "4,16"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == CSV_HEADER and len(out) == 9

    def test_config_error_exit_two(self, capsys):
        assert main(["whiteness", "--W", "4", "--M", "-5"]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "config" and err["key"] == "M"

    def test_unknown_experiment_exit_two(self, capsys):
        assert main(["sideways", "--W", "4"]) == 2

    def test_verdict_failure_exit_one(self, capsys):
        # the square at W=4 is still visibly skewed
        assert main(["whiteness", "--W", "4", "--M", "2000"]) == 1

    def test_runtime_error_exit_three(self, tmp_path, capsys):
        code = main(["kernel-check", "--W", "4", "--out", str(tmp_path / "missing" / "r.csv")])
        assert code == 3
        assert json.loads(capsys.readouterr().err)["error"] == "runtime"

    def test_config_file_and_json(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("experiment=kernel-check\nW=8\nformat=json\n")
        out = tmp_path / "r.json"
        assert main(["--config", str(cfg), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["manifest"]["config"]["W"] == [8.0]
