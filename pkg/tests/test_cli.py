import json

import numpy as np
import pytest

from occutest.analysis import DatasetReport, analyze_dataset
from occutest.cli import main
from occutest.config import SweepConfig
from occutest.io import DatasetError, format_value, read_csv, read_dataset, write_table
from occutest.model import RegionDesign, RegionParams, derive_stream, simulate_region


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestDatasetFiles:
    def test_summary_layout(self, tmp_path):
        ds = read_dataset(write(tmp_path / "d.csv", "# survey\nregion,N,K,s_d,d\n1,50,3,30,60\n2,40,4,12,25\n"))
        assert ds.layout == "summary"
        assert ds.designs == (RegionDesign(50, 3), RegionDesign(40, 4))
        assert (ds.data[1].s_d, ds.data[1].d) == (12, 25)

    def test_site_layout_aggregates(self, tmp_path):
        rows = ["region,site,K,y"] + [f"1,a{i},3,{y}" for i, y in enumerate([0, 1, 3, 0, 2])]
        rows += [f"2,b{i},2,{y}" for i, y in enumerate([0, 0, 1])]
        ds = read_dataset(write(tmp_path / "s.csv", "\n".join(rows) + "\n"))
        assert ds.designs == (RegionDesign(5, 3), RegionDesign(3, 2))
        assert (ds.data[0].s_d, ds.data[0].d) == (3, 6)
        assert (ds.data[1].s_d, ds.data[1].d) == (1, 1)

    @pytest.mark.parametrize(
        "text,line",
        [
            ("region,N,K,s_d,d\n1,50,3,30,60\n2,50,3,x,1\n", "line 3"),
            ("region,N,K,s_d,d\n1,50,3,30,60\n3,50,3,1,1\n", "line 3"),
            ("region,N,K,s_d,d\n1,50,3,30,60\n2,50,3,10,5\n", "line 3"),
            ("region,N,K,s_d,d\n1,50,3,30,60\n1,50,3,10,15\n", "line 3"),
            ("region,N,K,s_d,d\n1,50,3,30\n", "line 2"),
            ("region,site,K,y\n1,a,3,1\n1,b,3,5\n", "line 3"),
            ("foo,bar\n1,2\n", "line 1"),
        ],
    )
    def test_errors_carry_line_numbers(self, tmp_path, text, line):
        with pytest.raises(DatasetError, match=line):
            read_dataset(write(tmp_path / "bad.csv", text))

    def test_missing_region(self, tmp_path):
        with pytest.raises(DatasetError, match="regions 1 and 2"):
            read_dataset(write(tmp_path / "one.csv", "region,N,K,s_d,d\n1,50,3,30,60\n"))


class TestTables:
    def test_six_significant_digits(self, tmp_path):
        path = write_table(tmp_path / "t.csv", ["a", "b", "c"], [[1 / 3, 12345678.9, float("nan")], [0.0, None, True]])
        text = path.read_text(encoding="utf-8")
        assert text == "a,b,c\n0.333333,1.23457e+07,nan\n0,,true\n"

    def test_json(self, tmp_path):
        path = write_table(tmp_path / "t.json", ["R", "rate"], [[0.1, 2 / 3]], fmt="json")
        assert json.loads(path.read_text()) == [{"R": 0.1, "rate": 0.666667}]

    def test_numpy_scalars(self):
        assert format_value(np.float64(0.5)) == "0.5"
        assert format_value(np.int64(3)) == "3"


class TestReport:
    def test_identical_regions(self):
        designs = (RegionDesign(50, 3), RegionDesign(50, 3))
        from occutest.model import RegionSummary

        report = analyze_dataset((RegionSummary(30, 55), RegionSummary(30, 55)), designs)
        for t in report.tests:
            assert abs(t.statistic) < 1e-8
            assert not t.reject_standard and not t.reject_modified

    def test_json_round_trip(self):
        from occutest.model import RegionSummary

        designs = (RegionDesign(50, 3), RegionDesign(50, 3))
        report = analyze_dataset((RegionSummary(35, 56), RegionSummary(14, 28)), designs)
        assert DatasetReport.from_dict(json.loads(json.dumps(report.to_dict()))) == report

    def test_failed_fit_reported(self):
        from occutest.model import RegionSummary

        designs = (RegionDesign(50, 3), RegionDesign(50, 3))
        report = analyze_dataset((RegionSummary(0, 0), RegionSummary(14, 28)), designs)
        assert report.fits[0].status == "degenerate_data"
        assert report.fits[0].estimate == [None, None, None] and report.fits[0].loglik is None
        text = json.dumps(report.to_dict(), allow_nan=False)
        assert DatasetReport.from_dict(json.loads(text)) == report
        assert all(t.statistic is None and t.note for t in report.tests)

    def test_negative_statistics_common_off_null(self):
        # datasets simulated at psi1 = 0.8, psi2 = 0.32 often give negative T_O, which the modified rule rejects
        designs = (RegionDesign(50, 3), RegionDesign(50, 3))
        negative = 0
        for i in range(60):
            rng = derive_stream(5, 0, i)
            data = (simulate_region(designs[0], RegionParams(0.8, 0.5), rng),
                    simulate_region(designs[1], RegionParams(0.32, 0.5), rng))
            t = next(t for t in analyze_dataset(data, designs).tests if t.test == "score_observed")
            if t.statistic is not None and t.statistic < 0:
                negative += 1
                assert t.reject_modified and not t.reject_standard
        assert negative >= 15


SMALL = ["--reps", "30", "--r-step", "0.3", "--seed", "42", "--no-plot"]


class TestCommandLine:
    def test_test_command(self, tmp_path, capsys):
        data = write(tmp_path / "d.csv", "region,N,K,s_d,d\n1,50,3,30,60\n2,50,3,12,25\n")
        assert main(["test", str(data)]) == 0
        out = capsys.readouterr().out
        for name in ("lrt", "wald", "score_expected", "score_observed", "eigenvalues"):
            assert name in out
        assert main(["test", str(data), "--format", "json", "--out-dir", str(tmp_path / "r")]) == 0
        report = json.loads(capsys.readouterr().out)
        assert len(report["tests"]) == 4
        assert (tmp_path / "r" / "report.json").exists()
        assert main(["test", str(data), "--format", "csv"]) == 0
        assert capsys.readouterr().out.startswith("test,statistic,p_value")

    def test_io_errors(self, tmp_path, capsys):
        assert main(["test", str(tmp_path / "missing.csv")]) == 3
        bad = write(tmp_path / "bad.csv", "region,N,K,s_d,d\n1,50,3,30,6x\n")
        assert main(["test", str(bad)]) == 3
        assert "line 2" in capsys.readouterr().err

    @pytest.mark.parametrize(
        "flag,value",
        [
            ("--psi1", "1.2"),
            ("--p1", "0"),
            ("--p2", "abc"),
            ("--alpha", "1"),
            ("--reps", "0"),
            ("--r-max", "1.0"),
            ("--r-min", "-0.1"),
            ("--r-step", "0"),
            ("--K", "0"),
            ("--N1", "-3"),
            ("--seed", "-1"),
            ("--psi2", "1.5"),
        ],
    )
    def test_flag_validation(self, flag, value, capsys, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["power", flag, value, "--out-dir", str(tmp_path)])
        assert exc.value.code == 2
        assert flag in capsys.readouterr().err

    def test_cross_flag_validation(self, capsys, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["power", "--psi1", "0.4", "--psi2", "0.6", "--out-dir", str(tmp_path)])
        assert exc.value.code == 2
        assert "--psi2" in capsys.readouterr().err

    def test_psi2_sets_single_point(self, tmp_path):
        assert main(["power", "--psi2", "0.32", "--reps", "20", "--no-plot", "--out-dir", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "power.csv")
        assert {r["R"] for r in rows} == {"0.6"}

    @pytest.mark.parametrize(
        "command,files",
        [
            (["all"] + SMALL, ["power", "failures", "medians", "agreement", "eigen", "scatter"]),
            (["power", "--filter", "common"] + SMALL, ["power", "failures"]),
            (["agreement", "--rule", "modified"] + SMALL, ["agreement"]),
            (["asymptotics", "--r-step", "0.1", "--no-plot"], ["asymptotics"]),
            (["fig6", "--reps", "50", "--seed", "42", "--no-plot"], ["fig6"]),
        ],
    )
    def test_outputs_byte_identical(self, tmp_path, command, files):
        assert main(command + ["--out-dir", str(tmp_path / "a")]) == 0
        assert main(command + ["--out-dir", str(tmp_path / "b")]) == 0
        for stem in files:
            a = (tmp_path / "a" / f"{stem}.csv").read_bytes()
            assert a == (tmp_path / "b" / f"{stem}.csv").read_bytes()
            assert a.decode("utf-8").count("\n") > 1

    def test_figures_written_and_stable(self, tmp_path):
        for d in ("a", "b"):
            assert main(["medians", "--reps", "20", "--r-step", "0.3", "--out-dir", str(tmp_path / d)]) == 0
        svg = (tmp_path / "a" / "medians.svg").read_bytes()
        assert svg.startswith(b"<?xml")
        assert svg == (tmp_path / "b" / "medians.svg").read_bytes()

    def test_rerun_from_logged_config(self, tmp_path, capsys):
        assert main(["power", "--psi1", "0.4", "--reps", "25", "--r-min", "0.2", "--r-max", "0.5", "--r-step", "0.15",
                     "--seed", "9", "--no-plot", "--out-dir", str(tmp_path / "a")]) == 0
        assert "base_seed" in capsys.readouterr().err
        logged = json.loads((tmp_path / "a" / "config.json").read_text())
        assert logged["config"]["base_seed"] == 9 and logged["config"]["psi1"] == 0.4
        assert main(["power", "--config", str(tmp_path / "a" / "config.json"), "--no-plot",
                     "--out-dir", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "power.csv").read_bytes() == (tmp_path / "b" / "power.csv").read_bytes()

    def test_defaults_are_standard_configuration(self, tmp_path):
        from occutest.cli import build_parser, resolve_config

        args = build_parser().parse_args(["power"])
        config = resolve_config(args)
        assert config == SweepConfig()
        assert (config.psi1, config.p1, config.p2) == (0.8, 0.5, 0.5)
        assert config.designs == (RegionDesign(50, 3), RegionDesign(50, 3))
        assert config.R_grid[-1] == 0.9 and config.R_grid[1] == 0.025
        asym = resolve_config(build_parser().parse_args(["asymptotics"]))
        assert asym.R_grid[1] == 0.01

    def test_json_format(self, tmp_path):
        assert main(["medians", "--format", "json"] + SMALL + ["--out-dir", str(tmp_path)]) == 0
        rows = json.loads((tmp_path / "medians.json").read_text())
        assert rows[0]["R"] == 0.0 and "median_ratio" in rows[0]
