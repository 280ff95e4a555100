import numpy as np
import pytest
import yaml

from gaugeport import PricePanel, TimeGrid
from gaugeport.cli import EXIT_COMPUTE, EXIT_OK, EXIT_USAGE, main
from gaugeport.io import (
    PanelFormatError,
    RunConfig,
    export_panel,
    ingest,
    load_config,
    read_report,
    write_report,
)


def write_csv(tmp_path, text, name="panel.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


GOOD_CSV = (
    "date,Stock,Bond#cash\n"
    "2020-01-01,100.0,1.0\n"
    "2020-01-02,101.5,1.0001\n"
    "2020-01-03,99.75,1.0002\n"
)


class TestIngest:
    def test_round_trip_preserves_prices(self, fixture_panel, fixture_csv):
        panel = ingest(fixture_csv)
        assert panel.asset_ids == fixture_panel.asset_ids
        assert np.array_equal(panel.prices, fixture_panel.prices)

    def test_basic_parse(self, tmp_path):
        panel = ingest(write_csv(tmp_path, GOOD_CSV))
        assert panel.n_assets == 2
        assert panel.grid.steps == 2
        assert panel.prices[1, 0] == 101.5

    def test_normalize_rescales_to_inception(self, tmp_path):
        panel = ingest(write_csv(tmp_path, GOOD_CSV), normalize=True)
        np.testing.assert_allclose(panel.prices[0], 1.0)
        assert panel.prices[1, 0] == pytest.approx(1.015)

    def test_ragged_row_reports_coordinates(self, tmp_path):
        bad = GOOD_CSV.replace("2020-01-02,101.5,1.0001", "2020-01-02,101.5")
        with pytest.raises(PanelFormatError, match="row 2"):
            ingest(write_csv(tmp_path, bad))

    def test_bad_number_reports_row_and_column(self, tmp_path):
        bad = GOOD_CSV.replace("99.75", "ninety")
        with pytest.raises(PanelFormatError, match="row 3.*'Stock'"):
            ingest(write_csv(tmp_path, bad))

    def test_nonpositive_price_rejected(self, tmp_path):
        bad = GOOD_CSV.replace("99.75", "-1.0")
        with pytest.raises(PanelFormatError, match="nonpositive"):
            ingest(write_csv(tmp_path, bad))

    def test_bad_date_rejected(self, tmp_path):
        bad = GOOD_CSV.replace("2020-01-02", "02/01/2020")
        with pytest.raises(PanelFormatError, match="bad date"):
            ingest(write_csv(tmp_path, bad))

    def test_dates_must_increase(self, tmp_path):
        bad = GOOD_CSV.replace("2020-01-03", "2020-01-02")
        with pytest.raises(PanelFormatError, match="not after"):
            ingest(write_csv(tmp_path, bad))

    def test_at_most_one_cash_column(self, tmp_path):
        bad = GOOD_CSV.replace("Stock", "Stock#cash")
        with pytest.raises(PanelFormatError, match="#cash"):
            ingest(write_csv(tmp_path, bad))

    def test_needs_two_data_rows(self, tmp_path):
        bad = "date,A\n2020-01-01,1.0\n"
        with pytest.raises(PanelFormatError, match="two data rows"):
            ingest(write_csv(tmp_path, bad))

    def test_export_requires_labels(self, tmp_path):
        panel = PricePanel(grid=TimeGrid(0.0, 0.5, 1), prices=np.ones((2, 1)))
        with pytest.raises(ValueError, match="labels"):
            export_panel(panel, tmp_path / "out.csv")


class TestRunConfig:
    def test_defaults_when_no_file(self):
        config = load_config(None)
        assert config.section("simulate")["n_assets"] == 8
        assert config.section("pde")["strike"] == 100.0

    def test_yaml_overrides_merge_with_defaults(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump({"simulate": {"n_paths": 5}}))
        config = load_config(path)
        section = config.section("simulate")
        assert section["n_paths"] == 5
        assert section["noise"] == "normal"  # default retained

    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump({"simulte": {"n_paths": 5}}))
        with pytest.raises(ValueError, match="unknown config sections"):
            load_config(path)

    @pytest.mark.parametrize(
        "section,key,value,message",
        [
            ("simulate", "process", "garch", "unknown process"),
            ("simulate", "noise", "levy", "unknown noise"),
            ("simulate", "dt", -0.1, "dt must be positive"),
            ("pde", "payoff", "digital", "unknown payoff"),
            ("pde", "n_s", 4, "too coarse"),
            ("sensitivity", "n_factors", 99, "n_factors"),
        ],
    )
    def test_value_validation(self, tmp_path, section, key, value, message):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump({section: {key: value}}))
        with pytest.raises(ValueError, match=message):
            load_config(path)

    def test_sha256_tracks_content(self):
        a = RunConfig({"simulate": {"seed": 1}})
        b = RunConfig({"simulate": {"seed": 2}})
        assert a.sha256() == RunConfig({"simulate": {"seed": 1}}).sha256()
        assert a.sha256() != b.sha256()


class TestReports:
    def test_provenance_block(self, tmp_path):
        path = tmp_path / "report.yaml"
        write_report(path, "simulate", {"x": np.float64(1.5)}, RunConfig({}), seed=3)
        doc = read_report(path)
        prov = doc["provenance"]
        assert prov["command"] == "simulate"
        assert prov["seed"] == 3
        assert len(prov["config_sha256"]) == 64
        assert "generated_at" in prov
        assert doc["report"]["x"] == 1.5

    def test_canonical_form_drops_timestamp(self, tmp_path):
        path = tmp_path / "report.yaml"
        write_report(path, "price", {}, RunConfig({}), timestamp=False)
        assert "generated_at" not in read_report(path)["provenance"]

    def test_missing_provenance_rejected(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text(yaml.safe_dump({"report": {}}))
        with pytest.raises(ValueError, match="provenance"):
            read_report(path)


class TestCli:
    def test_simulate_writes_report(self, tmp_path):
        out = tmp_path / "sim.yaml"
        assert main(["simulate", "--out", str(out)]) == EXIT_OK
        doc = read_report(out)
        assert doc["provenance"]["seed"] == 1
        assert len(doc["report"]["terminal_mean"]) == 8

    def test_simulate_is_deterministic(self, tmp_path):
        out1 = tmp_path / "a.yaml"
        out2 = tmp_path / "b.yaml"
        assert main(["simulate", "--out", str(out1), "--no-timestamp"]) == EXIT_OK
        assert main(["simulate", "--out", str(out2), "--no-timestamp"]) == EXIT_OK
        assert out1.read_bytes() == out2.read_bytes()

    def test_gauge_requires_panel(self, tmp_path):
        assert main(["gauge", "--out", str(tmp_path / "g.yaml")]) == EXIT_USAGE

    def test_gauge_on_flat_panel_finds_zero_field(self, tmp_path):
        rows = ["date,A,B"]
        for day in range(1, 21):
            rows.append(f"2020-01-{day:02d},1.0,1.0")
        path = write_csv(tmp_path, "\n".join(rows) + "\n")
        out = tmp_path / "g.yaml"
        assert main(["gauge", "--panel", str(path), "--out", str(out)]) == EXIT_OK
        doc = read_report(out)
        np.testing.assert_allclose(doc["report"]["a_field"], 0.0, atol=1e-12)

    def test_gauge_on_fixture_panel(self, fixture_csv, tmp_path):
        out = tmp_path / "g.yaml"
        assert main(["gauge", "--panel", str(fixture_csv), "--out", str(out)]) == EXIT_OK
        doc = read_report(out)
        assert len(doc["report"]["asset_ids"]) == 12
        assert doc["report"]["portfolio_value"][0] == 1.0

    def test_malformed_panel_is_compute_error(self, tmp_path):
        path = write_csv(tmp_path, GOOD_CSV.replace("99.75", "broken"))
        code = main(["gauge", "--panel", str(path), "--out", str(tmp_path / "g.yaml")])
        assert code == EXIT_COMPUTE

    def test_price_matches_oracle(self, tmp_path):
        from gaugeport import bs_closed_form

        out = tmp_path / "p.yaml"
        assert main(["price", "--out", str(out)]) == EXIT_OK
        doc = read_report(out)
        exact = bs_closed_form(100, 100, 0.2, 1.0)
        assert doc["report"]["at_the_money_value"] == pytest.approx(exact, rel=1e-3)

    def test_discount_pipeline(self, fixture_csv, tmp_path):
        out = tmp_path / "d.yaml"
        assert main(["discount", "--panel", str(fixture_csv), "--out", str(out)]) == EXIT_OK
        doc = read_report(out)
        report = doc["report"]
        assert report["asset_ids"][-1] == "risk-free portfolio"
        assert report["final_values"][-1] == 1.0
        assert report["table"].startswith("Final Asset Values")

    def test_sensitivity_command(self, tmp_path):
        out = tmp_path / "s.yaml"
        assert main(["sensitivity", "--out", str(out)]) == EXIT_OK
        doc = read_report(out)
        assert doc["report"]["residual"] < 1e-8
        assert doc["report"]["residual"] < doc["report"]["equal_weight_residual"]

    def test_riskfree_command(self, tmp_path):
        config = tmp_path / "run.yaml"
        config.write_text(
            yaml.safe_dump(
                {
                    "simulate": {"n_assets": 64, "dt": 1.0 / 64, "horizon": 0.125},
                    "riskfree": {"sizes": [8, 16, 32, 64], "n_paths": 500},
                }
            )
        )
        out = tmp_path / "r.yaml"
        code = main(["riskfree", "--config", str(config), "--out", str(out)])
        assert code == EXIT_OK
        doc = read_report(out)
        assert -0.7 < doc["report"]["slope"] < -0.3
        assert doc["report"]["analytic_slope"] == pytest.approx(-0.5, abs=1e-9)

    def test_unknown_command_is_usage_error(self):
        assert main(["frobnicate"]) == EXIT_USAGE

    def test_bad_config_is_usage_error(self, tmp_path):
        config = tmp_path / "run.yaml"
        config.write_text(yaml.safe_dump({"simulate": {"noise": "levy"}}))
        assert main(["simulate", "--config", str(config)]) == EXIT_USAGE
