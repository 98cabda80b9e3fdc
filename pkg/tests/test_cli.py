"""Tests for the command-line interface."""

import json

import pytest

from coopnav.cli import EXIT_CONFIG, EXIT_OK, _parse_seeds, main
from coopnav.errors import ConfigError


class TestSeedParsing:
    def test_comma_list(self):
        assert _parse_seeds("1,2,5") == [1, 2, 5]

    def test_range(self):
        assert _parse_seeds("0:4") == [0, 1, 2, 3]

    def test_single(self):
        assert _parse_seeds("7") == [7]

    def test_invalid(self):
        with pytest.raises(ConfigError):
            _parse_seeds("a,b")
        with pytest.raises(ConfigError):
            _parse_seeds(",")


class TestCommands:
    def test_validate_bundled(self, capsys):
        assert main(["validate", "multi_floor"]) == EXIT_OK
        assert "multi_floor: OK" in capsys.readouterr().out

    def test_validate_unknown_name(self, capsys):
        assert main(["validate", "never_heard_of_it"]) == EXIT_CONFIG
        assert "configuration error" in capsys.readouterr().err

    def test_validate_broken_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"name": "x"}')
        assert main(["validate", str(bad)]) == EXIT_CONFIG
        assert "duration_s" in capsys.readouterr().err

    def test_run_writes_records(self, tmp_path, capsys):
        import dataclasses

        from coopnav.config import load_scenario, bundled_scenario_path, save_scenario

        scen = load_scenario(bundled_scenario_path("single_floor_inference"))
        short = dataclasses.replace(
            scen,
            duration_s=2.0,
            parameters=dataclasses.replace(scen.parameters, metrics_burn_in_s=0.0),
        )
        path = tmp_path / "short.json"
        save_scenario(short, path)
        code = main(
            ["run", str(path), "--seed", "1", "--output-dir", str(tmp_path), "--trace"]
        )
        assert code == EXIT_OK
        records = tmp_path / "single_floor_inference_seed1_records.csv"
        trace = tmp_path / "single_floor_inference_seed1_trace.csv"
        assert records.exists() and trace.exists()
        assert records.read_text().startswith("time_s,node_id,true_x")

    def test_compare_writes_json(self, tmp_path):
        import dataclasses

        from coopnav.config import load_scenario, bundled_scenario_path, save_scenario

        scen = load_scenario(bundled_scenario_path("single_floor_inference"))
        short = dataclasses.replace(
            scen,
            duration_s=2.0,
            parameters=dataclasses.replace(scen.parameters, metrics_burn_in_s=0.0),
        )
        path = tmp_path / "short.json"
        save_scenario(short, path)
        code = main(
            [
                "compare", str(path), "--baseline", "LS-AL-UN",
                "--candidate", "BP-AL-UN", "--seeds", "0,1",
                "--output-dir", str(tmp_path), "--node", "10",
            ]
        )
        assert code == EXIT_OK
        out = json.loads(
            (tmp_path / "single_floor_inference_LS-AL-UN_vs_BP-AL-UN.json").read_text()
        )
        assert out["baseline"] == "LS-AL-UN" and out["seeds"] == [0, 1]
