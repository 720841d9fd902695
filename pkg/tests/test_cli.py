import io
import json
import subprocess
import sys

import numpy as np
import pytest

from firmshare.cli import (
    CsvRowError,
    CsvSchemaError,
    dumps_report,
    parse_firm_csv,
    run,
    write_firm_csv,
)
from firmshare.estimation import estimate_scale_share_gradient
from firmshare.market_structure import FirmRecord, labor_share


def run_capture(argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def run_json(argv):
    code, out, err = run_capture(argv)
    assert code == 0, err
    return json.loads(out)


def write_zipf_fixture(path, n=100):
    # rank-consistent deterministic Zipf outputs: exactly alpha == 1
    rows = []
    for i in range(1, n + 1):
        y = 1000.0 / (i - 0.5)
        rows.append(FirmRecord(f"f{i}", 2000, "R1", "J1", y, 10.0, 50.0, 3.0, 10.0))
    write_firm_csv(rows, path)
    return path


class TestParseFirmCsv:
    def test_well_formed(self, tmp_path):
        path = tmp_path / "firms.csv"
        path.write_text(
            "firm_id,year,region,industry,output,labor,capital,wage_bill,value_added\n"
            "a,2000,R1,J1,100,10,50,31,100\n"
            "b,2000,R1,J1,150,12,70,40,120\n"
            "c,2001,R2,J1,80,9,40,25,\n"
        )
        records = parse_firm_csv(str(path))
        assert len(records) == 3
        assert records[2].value_added is None
        assert records[1].wage_bill == 40.0

    def test_invalid_row_reports_line_number(self, tmp_path):
        path = tmp_path / "firms.csv"
        path.write_text(
            "firm_id,year,region,industry,output,labor,capital,wage_bill\n"
            "a,2000,R1,J1,100,10,50,31\n"
            "b,2000,R1,J1,0,10,50,31\n"
        )
        with pytest.raises(CsvRowError) as info:
            parse_firm_csv(str(path))
        assert len(info.value.diagnostics) == 1
        assert ":3:" in info.value.diagnostics[0]

    def test_missing_column(self, tmp_path):
        path = tmp_path / "firms.csv"
        path.write_text("firm_id,year,region,industry,output,labor,capital\na,2000,R,J,1,1,1\n")
        with pytest.raises(CsvSchemaError, match="wage_bill"):
            parse_firm_csv(str(path))

    def test_unparsable_number_collected(self, tmp_path):
        path = tmp_path / "firms.csv"
        path.write_text(
            "firm_id,year,region,industry,output,labor,capital,wage_bill\n"
            "a,2000,R1,J1,abc,10,50,31\n"
        )
        with pytest.raises(CsvRowError):
            parse_firm_csv(str(path))

    def test_roundtrip_is_bit_exact(self, tmp_path):
        records = [
            FirmRecord("a", 2000, "R1", "J1", 1.0 / 3.0, 10.0, 50.0, 31.0, 100.0),
            FirmRecord("b", 2001, "R2", "J2", 7.1e-17, 1e12, 0.25, 0.0, None),
        ]
        path = tmp_path / "firms.csv"
        write_firm_csv(records, str(path))
        back = parse_firm_csv(str(path))
        assert back == records


class TestReportSerialization:
    def test_floats_are_17_digits_and_json_parsable(self):
        text = dumps_report({"x": 1.0 / 3.0, "flag": True, "none": None, "n": 3})
        parsed = json.loads(text)
        assert parsed["x"] == 1.0 / 3.0
        assert parsed["flag"] is True
        assert parsed["none"] is None

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            dumps_report({"x": float("nan")})

    def test_string_escaping(self):
        text = dumps_report({"s": 'quote " and backslash \\'})
        assert json.loads(text)["s"] == 'quote " and backslash \\'


class TestExitCodes:
    def test_unknown_command_is_usage_error(self):
        proc = subprocess.run(
            [sys.executable, "-m", "firmshare.cli", "frobnicate"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 2

    def test_unknown_flag_is_usage_error(self):
        proc = subprocess.run(
            [sys.executable, "-m", "firmshare.cli", "moments", "--xi", "1", "--r", "2",
             "--bogus"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 2

    def test_computation_error_is_exit_one(self, tmp_path):
        path = tmp_path / "firms.csv"
        path.write_text(
            "firm_id,year,region,industry,output,labor,capital,wage_bill\n"
            "a,2000,R1,J1,0,10,50,31\n"
        )
        code, _, err = run_capture(["fit-tail", "--input", str(path)])
        assert code == 1
        assert ":2:" in err

    def test_missing_value_added_under_va_basis(self, tmp_path):
        path = tmp_path / "firms.csv"
        rows = [
            FirmRecord(f"f{i}", 2000, "R1", "J1", float(i + 1), 1.0, 1.0, 0.5, None)
            for i in range(30)
        ]
        write_firm_csv(rows, str(path))
        code, _, err = run_capture(["panel", "--input", str(path)])
        assert code == 1
        assert "value_added missing" in err


class TestMomentsCommand:
    def test_basic_report(self):
        report = run_json(
            ["moments", "--xi", "2", "--y-min", "1", "--y-max", "2", "--order", "1",
             "--no-timestamp"]
        )
        assert report["command"] == "moments"
        assert report["results"]["moments"][0] == pytest.approx(4.0 / 3.0, rel=1e-12)
        assert report["version"] == "0.1.0"

    def test_xi_one_quadrature_fallback_warns(self):
        report = run_json(["moments", "--xi", "1", "--r", "10", "--no-timestamp"])
        assert any("quadrature" in w for w in report["warnings"])


class TestFitTailCommand:
    def test_zipf_fixture(self, tmp_path):
        path = write_zipf_fixture(tmp_path / "zipf.csv")
        report = run_json(["fit-tail", "--input", str(path), "--no-timestamp"])
        alpha = report["results"]["rank_regression"]["alpha_hat"]
        assert alpha == pytest.approx(1.0, abs=0.02)
        assert report["results"]["hill"]["k"] == 10


class TestAggregateCommand:
    def test_identity_in_report(self):
        report = run_json(
            ["aggregate", "--xi", "1.2", "--r", "1000", "--beta", "0.703",
             "--gamma", "1.329", "--no-timestamp"]
        )
        res = report["results"]
        assert res["identity_rel_error"] < 1e-12
        assert res["regularity"] == "regular"
        assert res["theta"] == pytest.approx(297.0 / 626.0, rel=1e-12)


class TestWeightingCommand:
    def test_hand_example(self):
        report = run_json(
            ["weighting", "--xi", "2", "--r", "2.718281828", "--ls", "0.525",
             "--delta", "-0.066", "--no-timestamp"]
        )
        res = report["results"]
        assert res["macro_ls"] == pytest.approx(0.497410, abs=1e-5)
        assert res["macro_ls_exact"] == pytest.approx(res["macro_ls"], abs=1e-10)

    def test_derived_from_technology(self):
        report = run_json(
            ["weighting", "--xi", "2", "--r", "10", "--beta", "0.703", "--gamma", "1.329",
             "--g", "0.01", "--no-timestamp"]
        )
        assert report["results"]["delta_source"] == "derived"
        assert report["results"]["delta"] == pytest.approx(0.0075789, abs=1e-6)

    def test_requires_consistent_flags(self):
        code, _, err = run_capture(["weighting", "--xi", "2", "--r", "10", "--ls", "0.5"])
        assert code == 1 and "together" in err


class TestCounterfactualCommand:
    def test_contribution_path(self):
        report = run_json(
            ["counterfactual", "--total", "-5.42", "--contribution", "-7.02",
             "--no-timestamp"]
        )
        res = report["results"]
        assert res["distribution_share_pct"] == pytest.approx(129.5, abs=0.2)
        assert res["residual_share_pct"] == pytest.approx(-29.5, abs=0.2)

    def test_coefficient_path(self):
        report = run_json(
            ["counterfactual", "--total", "-5.42", "--coefficient", "0.43875",
             "--alpha-start", "0.98", "--alpha-end", "0.82", "--no-timestamp"]
        )
        assert report["results"]["distribution_contribution_pp"] == pytest.approx(
            -7.02, abs=1e-9
        )


class TestPanelCommand:
    def make_panel_csv(self, path, n=40):
        rng = np.random.default_rng(0)
        rows = []
        for region in ("R1", "R2"):
            outputs = rng.pareto(1.0, n) * 10 + 10
            for i, y in enumerate(outputs):
                rows.append(
                    FirmRecord(f"{region}-{i}", 2000, region, "J1", float(y), 5.0, 20.0,
                               31.0, 100.0)
                )
        write_firm_csv(rows, str(path))

    def test_cells_and_warnings(self, tmp_path):
        path = tmp_path / "panel.csv"
        self.make_panel_csv(path)
        report = run_json(["panel", "--input", str(path), "--no-timestamp"])
        assert len(report["results"]) == 2
        cell = report["results"][0]
        assert 0.0 < cell["hhi"] <= 1.0
        assert cell["n_firms"] == 40

    def test_min_cell_size_flag_drops(self, tmp_path):
        path = tmp_path / "panel.csv"
        self.make_panel_csv(path, n=25)
        report = run_json(
            ["panel", "--input", str(path), "--min-cell-size", "30", "--no-timestamp"]
        )
        assert report["results"] == []
        assert any("dropped 2" in w for w in report["warnings"])

    def test_csv_format_is_a_table(self, tmp_path):
        path = tmp_path / "panel.csv"
        self.make_panel_csv(path)
        code, out, _ = run_capture(
            ["panel", "--input", str(path), "--format", "csv", "--no-timestamp"]
        )
        assert code == 0
        header = out.splitlines()[0].split(",")
        assert header[:4] == ["region", "industry", "year", "n_firms"]
        assert len(out.splitlines()) == 3


class TestDecomposeMpCommand:
    def test_worked_example_via_csv(self, tmp_path):
        # outputs double as weights; wage_bill/value_added reproduce the shares
        rows = []
        for fid, w, share in [("A", 0.5, 0.40), ("B", 0.3, 0.30), ("C", 0.2, 0.50)]:
            rows.append(FirmRecord(fid, 2000, "R", "J", w, 1.0, 1.0, share * w, w))
        for fid, w, share in [("A", 0.6, 0.35), ("B", 0.2, 0.30), ("D", 0.2, 0.45)]:
            rows.append(FirmRecord(fid, 2001, "R", "J", w, 1.0, 1.0, share * w, w))
        path = tmp_path / "mp.csv"
        write_firm_csv(rows, str(path))
        report = run_json(
            ["decompose-mp", "--input", str(path), "--year1", "2000", "--year2", "2001",
             "--no-timestamp"]
        )
        res = report["results"]
        assert res["total_change"] == pytest.approx(-0.03, abs=1e-12)
        assert res["within"] == pytest.approx(-0.025, abs=1e-12)
        assert res["exit"] == pytest.approx(-0.0275, abs=1e-12)
        assert res["entry"] == pytest.approx(0.0225, abs=1e-12)


class TestSimulateAndRoundTrip:
    def test_simulate_report_and_export(self, tmp_path):
        out_csv = tmp_path / "pop.csv"
        report = run_json(
            ["simulate", "--xi", "0.892", "--r", "1e4", "--beta", "0.703",
             "--gamma", "1.329", "--delta", "-0.064", "--noise-ls-sd", "0.05",
             "--n-firms", "2000", "--seed", "123", "--population-out", str(out_csv),
             "--no-timestamp"]
        )
        assert report["results"]["planted"]["delta"] == pytest.approx(-0.064, abs=1e-12)
        assert report["seed"] == 123
        records = parse_firm_csv(str(out_csv))
        assert len(records) == 2000

    def test_round_trip_recovers_planted_parameters(self, tmp_path):
        out_csv = tmp_path / "pop.csv"
        run_json(
            ["simulate", "--xi", "0.892", "--r", "1e4", "--beta", "0.703",
             "--gamma", "1.329", "--delta", "-0.064", "--noise-ls-sd", "0.05",
             "--noise-labor-sd", "0.8", "--noise-capital-sd", "0.8",
             "--n-firms", "50000", "--seed", "5", "--population-out", str(out_csv),
             "--no-timestamp"]
        )
        records = parse_firm_csv(str(out_csv))
        report = run_json(["panel", "--input", str(out_csv), "--no-timestamp"])
        cell = report["results"][0]
        assert cell["alpha_hat"] == pytest.approx(0.892, abs=0.03)
        outputs = np.array([r.output for r in records])
        shares = np.array([labor_share(r) for r in records])
        fit = estimate_scale_share_gradient(shares, outputs)
        assert fit.slope == pytest.approx(-0.064, abs=0.005)


class TestDeterminism:
    def test_reports_are_byte_identical_without_timestamp(self, tmp_path):
        argv = ["weighting", "--xi", "2", "--r", "7.3", "--ls", "0.5", "--delta", "-0.05",
                "--no-timestamp"]
        _, first, _ = run_capture(argv)
        _, second, _ = run_capture(argv)
        assert first == second

    def test_config_file_and_flag_precedence(self, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("min_cell_size = 35\nseed = 9  # comment\n")
        report = run_json(
            ["moments", "--xi", "2", "--r", "2", "--config", str(cfg), "--no-timestamp"]
        )
        assert report["config"]["min_cell_size"] == 35
        assert report["seed"] == 9
        report = run_json(
            ["moments", "--xi", "2", "--r", "2", "--config", str(cfg), "--seed", "4",
             "--no-timestamp"]
        )
        assert report["seed"] == 4

    def test_env_var_default_seed(self, monkeypatch):
        monkeypatch.setenv("FIRMSHARE_SEED", "777")
        report = run_json(["moments", "--xi", "2", "--r", "2", "--no-timestamp"])
        assert report["seed"] == 777

    def test_out_path(self, tmp_path):
        target = tmp_path / "report.json"
        code, out, _ = run_capture(
            ["moments", "--xi", "2", "--r", "2", "--out", str(target), "--no-timestamp"]
        )
        assert code == 0 and out == ""
        assert json.loads(target.read_text())["command"] == "moments"


class TestVerifyCommand:
    def test_all_checks_pass(self):
        report = run_json(["verify", "--no-timestamp"])
        assert all(c["passed"] for c in report["results"])
        names = {c["check"] for c in report["results"]}
        assert "aggregation_identity_exact" in names
        assert "melitz_polanec_identity_fuzz" in names
