import csv
import json
import os
from pathlib import Path

import pytest

from cli_run import GOLDEN_FILES, seeded_run
from volquant.cli import main

GOLDEN = Path(__file__).parent / "golden"
TAU_HEADER = ["0.05", "0.1", "0.25", "0.5", "0.75", "0.9", "0.95"]


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    return seeded_run(tmp_path_factory.mktemp("run"))


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestEstimateLayout:
    def test_table_structure(self, run):
        table = rows(run / "estimates.csv")
        assert table[0] == ["sample", "model", "parameter", *TAU_HEADER]
        groups = {}
        for r in table[1:]:
            groups.setdefault((r[0], r[1]), []).append(r[2])
        assert set(groups) == {(s, m) for s in ("pre", "post", "full")
                               for m in ("RV", "INDEX", "RV+INDEX")}
        assert groups[("full", "RV")] == ["beta_RV", "alpha_A01", "alpha_A02", "alpha_A03"]
        assert groups[("full", "RV+INDEX")] == ["beta_RV", "beta_INDEX", "alpha_A01",
                                                "alpha_A02", "alpha_A03"]
        for r in table[1:]:
            for cell in r[3:]:
                est, t = cell.split(" ")
                float(est)
                assert t.startswith("(") and t.endswith(")")
                assert not est.startswith("-0.000") and not t.startswith("(-0.00)")

    def test_appendix_json(self, run):
        doc = json.loads((run / "estimates.json").read_text())
        assert list(doc) == ["meta", "taus", "results", "univariate"]
        res = doc["results"][0]
        est = res["estimates"][0]
        assert [p["name"] for p in est["params"]] == ["beta[rv_sqrt]", "alpha[A01]",
                                                      "alpha[A02]", "alpha[A03]"]
        assert set(est["fit"]) == {"tau", "beta", "alpha", "objective", "solver"}
        assert len(doc["univariate"]) == 2 * 3 * 3 * 7

    def test_figure_files(self, run):
        for name in ("fig_coefficients.csv", "fig_normal_samples.csv", "fig_normal_models.csv",
                     "fig_univariate.csv"):
            assert (run / name).exists()
        fig = rows(run / "fig_normal_samples.csv")
        assert fig[0][:2] == ["tau", "gamma"] and fig[0][-3:] == ["intersection_low",
                                                                  "intersection_high", "empty"]
        assert [r[1] for r in fig[1:]] == ["-1.644853627", "-1.281551566", "-0.6744897502", "0",
                                           "0.6744897502", "1.281551566", "1.644853627"]
        models = rows(run / "fig_normal_models.csv")[0]
        assert "beta_RV" in models and "beta_INDEX" in models

    def test_effective_config_echoed(self, run):
        text = (run / "config_estimate.ini").read_text()
        assert "replicates = 20" in text and "command = estimate" in text
        assert "command = report" in (run / "config_report.ini").read_text()

    @pytest.mark.parametrize("name", GOLDEN_FILES)
    def test_golden(self, run, name):
        got = (run / name).read_bytes()
        if os.environ.get("UPDATE_GOLDEN"):
            (GOLDEN / name).write_bytes(got)
        assert got == (GOLDEN / name).read_bytes()

    def test_rerun_is_byte_identical(self, run, tmp_path):
        again = seeded_run(tmp_path)
        for name in GOLDEN_FILES:
            assert (again / name).read_bytes() == (run / name).read_bytes()

    def test_single_tau_single_column(self, run, tmp_path):
        sim = run.parent / "sim"
        assert main(["estimate", "--out", str(tmp_path), "--returns", str(sim / "returns.csv"),
                     "--rv", str(sim / "rv.csv"), "--taus", "0.5", "--replicates", "0"]) == 0
        table = rows(tmp_path / "estimates.csv")
        assert table[0] == ["sample", "model", "parameter", "0.5"]
        assert table[1][3].endswith("(NA)")


class TestCommands:
    def test_forecast(self, run, tmp_path):
        sim, idx = run.parent / "sim", run.parent / "idx"
        assert main(["forecast", "--out", str(tmp_path), "--estimates", str(run / "estimates.json"),
                     "--returns", str(sim / "returns.csv"), "--rv", str(sim / "rv.csv"),
                     "--index", str(idx / "index.csv")]) == 0
        fc = rows(tmp_path / "forecasts.csv")
        assert fc[0] == ["asset", "date", "tau", "model", "value"]
        assert {r[3] for r in fc[1:]} == {"RV", "INDEX", "RV+INDEX", "parametric"}
        assert rows(tmp_path / "coverage.csv")[0][:3] == ["tau", "model", "n"]

    def test_bootstrap(self, run, tmp_path):
        sim = run.parent / "sim"
        assert main(["bootstrap", "--out", str(tmp_path), "--returns", str(sim / "returns.csv"),
                     "--rv", str(sim / "rv.csv"), "--taus", "0.1,0.9", "--replicates", "5"]) == 0
        doc = json.loads((tmp_path / "bootstrap.json").read_text())
        assert doc["taus"] == [0.1, 0.9]
        assert len(doc["results"][0]["bands"]["beta[rv_sqrt]"]["lower"]) == 2

    def test_ingest_ticks(self, tmp_path, capsys):
        ticks = tmp_path / "ticks.csv"
        ticks.write_text(
            "instrument,timestamp,price\n"
            "CL,2011-07-01T10:00:00-04:00,100\nCL,2011-07-01T12:00:00-04:00,101\n"
            "CL,2011-07-04T10:00:00-04:00,100\nCL,2011-07-04T12:00:00-04:00,101\n"
            "CL,2011-07-05T10:00:00-04:00,101\nCL,2011-07-05T12:00:00-04:00,102\n")
        assert main(["ingest-ticks", "--out", str(tmp_path / "o"), "--ticks", str(ticks)]) == 0
        rv = rows(tmp_path / "o" / "rv.csv")
        assert [r[1] for r in rv[1:]] == ["2011-07-01", "2011-07-05"]
        assert "1 excluded days" in capsys.readouterr().err

    def test_malformed_tick_exit_code(self, tmp_path, capsys):
        ticks = tmp_path / "ticks.csv"
        ticks.write_text("instrument,timestamp,price\nCL,2011-07-01T10:00:00-04:00,1\nCL,bad,1\n")
        assert main(["ingest-ticks", "--out", str(tmp_path), "--ticks", str(ticks)]) == 2
        assert "row 3" in capsys.readouterr().err

    def test_usage_errors(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["estimate"])
        assert exc.value.code == 1
        assert main(["estimate", "--out", str(tmp_path), "--returns", "x", "--taus", "0.5,0.4"]) == 1

    def test_unbalanced_strict(self, tmp_path):
        (tmp_path / "r.csv").write_text("instrument,date,value\nA,2011-01-03,0.1\nA,2011-01-04,0.2\n"
                                        "A,2011-01-05,0.1\nB,2011-01-03,0.1\nB,2011-01-05,0.2\n")
        (tmp_path / "v.csv").write_text("instrument,date,value\nA,2011-01-03,0.1\nA,2011-01-04,0.2\n"
                                        "A,2011-01-05,0.1\nB,2011-01-03,0.1\nB,2011-01-05,0.2\n")
        args = ["estimate", "--out", str(tmp_path / "o"), "--returns", str(tmp_path / "r.csv"),
                "--rv", str(tmp_path / "v.csv"), "--replicates", "0", "--strict"]
        assert main(args) == 2

    def test_missing_upstream(self, tmp_path, capsys):
        assert main(["report", "--out", str(tmp_path)]) == 2
        assert "estimates.json" in capsys.readouterr().err

    def test_numerical_failure_exit_code(self, tmp_path):
        (tmp_path / "r.csv").write_text("instrument,date,value\n" + "".join(
            f"A,2011-01-{d:02d},{d / 100}\n" for d in range(3, 13)))
        (tmp_path / "v.csv").write_text("instrument,date,value\n" + "".join(
            f"A,2011-01-{d:02d},0.5\n" for d in range(3, 13)))
        args = ["estimate", "--out", str(tmp_path / "o"), "--returns", str(tmp_path / "r.csv"),
                "--rv", str(tmp_path / "v.csv"), "--replicates", "0"]
        assert main(args) == 3

    def test_config_file_and_override(self, run, tmp_path):
        sim = run.parent / "sim"
        cfg = tmp_path / "run.ini"
        cfg.write_text(f"[run]\nreturns = {sim / 'returns.csv'}\nrv = {sim / 'rv.csv'}\n"
                       "taus = 0.25,0.75\nreplicates = 0\n")
        assert main(["estimate", "--config", str(cfg), "--out", str(tmp_path / "o"),
                     "--taus", "0.5"]) == 0
        assert rows(tmp_path / "o" / "estimates.csv")[0][3:] == ["0.5"]
        assert "taus = 0.5" in (tmp_path / "o" / "config_estimate.ini").read_text()
        cfg.write_text("[run]\nbogus = 1\n")
        assert main(["estimate", "--config", str(cfg), "--out", str(tmp_path / "p")]) == 1
