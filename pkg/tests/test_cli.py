import json

import pytest

from aps.cli import main

TINY_CONFIG = {
    "pmfs": [[0.99, 0.01], [0.7, 0.3]],
    "budget": 250,
    "eta": 0.004,
    "strategies": ["bayes-ucb", "oracle"],
    "replications": 15,
    "seed": 5,
}


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(TINY_CONFIG), encoding="utf-8")
    return path


class TestSimulate:
    def test_writes_reports(self, config_file, tmp_path, capsys):
        out = tmp_path / "out"
        rc = main(["simulate", "--config", str(config_file), "--out", str(out)])
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert set(report["strategies"]) == {"bayes-ucb", "oracle"}
        csv_text = (out / "report.csv").read_text()
        assert csv_text.startswith("strategy,checkpoint,metric,arm,value,stderr")

    def test_same_seed_is_byte_identical(self, config_file, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", str(config_file),
                     "--out", str(out1)]) == 0
        assert main(["simulate", "--config", str(config_file),
                     "--out", str(out2)]) == 0
        assert ((out1 / "report.csv").read_bytes()
                == (out2 / "report.csv").read_bytes())
        assert ((out1 / "report.json").read_bytes()
                == (out2 / "report.json").read_bytes())

    def test_seed_flag_changes_output(self, config_file, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["simulate", "--config", str(config_file), "--out", str(out1)])
        main(["simulate", "--config", str(config_file), "--out", str(out2),
              "--seed", "99"])
        assert ((out1 / "report.csv").read_text()
                != (out2 / "report.csv").read_text())

    def test_missing_config_exits_2(self, tmp_path):
        rc = main(["simulate", "--config", str(tmp_path / "nope.json"),
                   "--out", str(tmp_path)])
        assert rc == 2

    def test_invalid_config_exits_2_with_field_message(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"pmfs": [[0.6, 0.5]], "budget": 10,
                                   "eta": 0.5}))
        rc = main(["simulate", "--config", str(bad), "--out", str(tmp_path)])
        assert rc == 2
        assert "simplex" in capsys.readouterr().err

    def test_bundled_config_resolves(self, tmp_path):
        # The bundled config parses and validates; run a trimmed copy.
        from aps.cli import _load_config_text

        raw = json.loads(_load_config_text("two-arm-binary"))
        assert raw["budget"] == 2500
        assert raw["eta"] == pytest.approx(1 / 2500)
        raw.update(replications=5, budget=120, eta=1 / 120)
        small = tmp_path / "small.json"
        small.write_text(json.dumps(raw))
        assert main(["simulate", "--config", str(small),
                     "--out", str(tmp_path / "o")]) == 0


class TestAnalyzeSurvey:
    def test_fixture_produces_four_column_table(self, fixture_csv, tmp_path,
                                                capsys):
        out = tmp_path / "sv"
        rc = main(["analyze-survey", str(fixture_csv), "--out", str(out),
                   "--batch-size", "800", "--replications", "2"])
        assert rc == 0
        lines = (out / "allocations.csv").read_text().splitlines()
        assert lines[0] == ("category,actual,oracle,constrained,"
                            "adaptive_mean,adaptive_se")
        assert lines[-1].startswith("_total,16000,16000,16000,16000")

    def test_batch_size_flag_reaches_replay(self, fixture_csv, tmp_path):
        out = tmp_path / "sv"
        rc = main(["analyze-survey", str(fixture_csv), "--out", str(out),
                   "--batch-size", "1600", "--replications", "1"])
        assert rc == 0
        payload = json.loads((out / "allocations.json").read_text())
        assert payload["batch_size"] == 1600

    def test_infeasible_theta0_flagged(self, fixture_csv, tmp_path, capsys):
        out = tmp_path / "sv"
        rc = main(["analyze-survey", str(fixture_csv), "--out", str(out),
                   "--batch-size", "4000", "--replications", "1",
                   "--theta0", "1e-9"])
        assert rc == 0
        assert "infeasible" in capsys.readouterr().out
        payload = json.loads((out / "allocations.json").read_text())
        assert payload["feasible"] is False

    def test_schema_errors_pass_through_with_rows(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("category,weight,samples,positives\nx,0.5,5,9\ny,0.5,5,0\n")
        rc = main(["analyze-survey", str(bad), "--out", str(tmp_path)])
        assert rc == 2
        assert "row 1" in capsys.readouterr().err


class TestPlanBatch:
    def test_snapshot_with_direct_bounds(self, tmp_path, capsys):
        snap = tmp_path / "snap.json"
        snap.write_text(json.dumps({
            "batch_size": 100,
            "theta0": 1.0,
            "categories": [
                {"name": "a", "weight": 0.5, "T": 0, "u": 0.0198},
                {"name": "b", "weight": 0.5, "T": 0, "u": 0.42},
            ],
        }))
        rc = main(["plan-batch", str(snap)])
        assert rc == 0
        plan = json.loads(capsys.readouterr().out)
        taus = [c["tau_int"] for c in plan["categories"]]
        assert taus == [18, 82]

    def test_snapshot_with_alphas(self, tmp_path):
        snap = tmp_path / "snap.json"
        snap.write_text(json.dumps({
            "batch_size": 60,
            "budget": 600,
            "theta0": 1.0,
            "categories": [
                {"name": "a", "weight": 0.5, "alpha": [91, 11], "T": 100},
                {"name": "b", "weight": 0.5, "alpha": [1, 1], "T": 0},
            ],
        }))
        out = tmp_path / "o"
        rc = main(["plan-batch", str(snap), "--out", str(out)])
        assert rc == 0
        plan = json.loads((out / "plan.json").read_text())
        assert sum(c["tau_int"] for c in plan["categories"]) == 60

    def test_missing_snapshot_exits_2(self, tmp_path):
        assert main(["plan-batch", str(tmp_path / "nope.json")]) == 2


def test_help_runs(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for sub in ("simulate", "analyze-survey", "plan-batch", "serve"):
        assert sub in out


@pytest.mark.parametrize("sub,flags", [
    ("simulate", ("--config", "--out", "--seed", "--workers")),
    ("analyze-survey", ("--out", "--batch-size", "--replications", "--seed",
                        "--theta0")),
    ("plan-batch", ("--out", "--batch-size")),
    ("serve", ("--journal", "--host", "--port")),
])
def test_subcommand_help_documents_flags(sub, flags, capsys):
    with pytest.raises(SystemExit) as exc:
        main([sub, "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for flag in flags:
        assert flag in out
