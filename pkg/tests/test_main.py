"""Integration tests for the peaky-lab command line."""

import argparse
import json

import pytest

from src.main import Application, build_parser, main, parse_T_list
from src.records import CommandOutcome


@pytest.fixture
def settings_file(tmp_path):
    """Settings with a single worker and quiet logging."""
    path = tmp_path / "settings.yaml"
    path.write_text("log_level: WARNING\nworkers: 1\n", encoding="utf-8")
    return str(path)


def run(settings_file, *argv):
    return main(["--settings", settings_file, *argv])


class TestParseTList:
    """Tests for the --T-list argument type."""

    def test_values_and_ranges(self):
        assert parse_T_list("5,10,20..23") == [5, 10, 20, 21, 22, 23]

    @pytest.mark.parametrize("text", ["", ",", "9..3"])
    def test_invalid(self, text):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_T_list(text)


class TestApplication:
    """Test application initialization."""

    def test_initialize_with_missing_settings(self, tmp_path):
        """Test that a missing settings file falls back to defaults."""
        app = Application()

        app.initialize(str(tmp_path / "missing.yaml"), "ERROR")

        assert app.settings.workers == 4
        assert app.config_manager is not None

    def test_initialize_reads_settings(self, settings_file):
        app = Application()

        app.initialize(settings_file)

        assert app.settings.workers == 1
        assert app.settings.log_level == "WARNING"


class TestCount:
    """Tests for the count command."""

    def test_example_T5(self, settings_file, capsys):
        assert run(settings_file, "count", "--topology", "B* a+ B*", "--T", "5") == 0

        out = capsys.readouterr().out.splitlines()
        assert "total: 15" in out
        assert "count[B]: 40" in out
        assert "count[a]: 35" in out
        assert "dominant: B" in out

    def test_no_dominant_label(self, settings_file, capsys):
        assert run(settings_file, "count", "--topology", "B* a+ B*", "--T", "4") == 0

        assert "dominant: none" in capsys.readouterr().out.splitlines()

    def test_max_count_and_csv(self, settings_file, tmp_path, capsys):
        csv_path = tmp_path / "counts.csv"

        code = run(settings_file, "count", "--topology", "B* a+ b+ c+ B*", "--T", "100",
                   "--label", "B", "--csv", str(csv_path))

        assert code == 0
        assert "max_count[B]: 97" in capsys.readouterr().out.splitlines()
        assert csv_path.read_text().splitlines()[0] == "t,label,count"

    def test_empty_topology(self, settings_file, capsys):
        assert run(settings_file, "count", "--topology", "", "--T", "5") == CommandOutcome.EXIT_USAGE
        assert "error:" in capsys.readouterr().err

    def test_too_short(self, settings_file):
        assert run(settings_file, "count", "--topology", "a b c", "--T", "2") == CommandOutcome.EXIT_USAGE

    def test_non_positive_T(self, settings_file):
        assert run(settings_file, "count", "--topology", "a+", "--T", "0") == CommandOutcome.EXIT_USAGE


class TestVerify:
    """Tests for the verify command."""

    def test_lemma_suite(self, settings_file, capsys):
        assert run(settings_file, "verify", "--suite", "lemma", "--Tmax", "20") == 0

        out = capsys.readouterr().out.splitlines()
        assert out[0].startswith("== lemma")
        assert all(line.startswith("[PASS]") for line in out[1:-1])
        assert out[-1].endswith("checks passed")

    def test_ignores_unaccepted_arguments(self, settings_file):
        assert run(settings_file, "verify", "--suite", "theorem2", "--n", "4", "--Tmax", "7") == 0

    def test_unknown_suite(self, settings_file):
        assert run(settings_file, "verify", "--suite", "nope") == CommandOutcome.EXIT_USAGE


class TestTrain:
    """Tests for the train command."""

    def test_writes_artifacts(self, settings_file, tmp_path, capsys):
        config = tmp_path / "tiny.json"
        config.write_text(json.dumps({
            "name": "tiny",
            "topology": "B* a+ B*",
            "input": {"example_n": 1},
            "model": "ffnn",
            "train": {"max_steps": 5},
        }), encoding="utf-8")
        out_dir = tmp_path / "out"

        assert run(settings_file, "train", "--config", str(config), "--out", str(out_dir)) == 0

        assert (out_dir / "tiny_curve.csv").exists()
        assert (out_dir / "tiny_summary.csv").exists()
        assert (out_dir / "tiny_model.txt").exists()
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "== tiny"
        assert "steps: 5" in out

    def test_invalid_config(self, settings_file, tmp_path, capsys):
        config = tmp_path / "bad.json"
        config.write_text("{}", encoding="utf-8")

        assert run(settings_file, "train", "--config", str(config), "--out", str(tmp_path)) == 2
        assert "Invalid experiment definition" in capsys.readouterr().err

    @pytest.mark.parametrize("tolerance,peaky", [("1.0e-12", "True"), ("1.0", "False")])
    def test_settings_tie_tolerance(self, tmp_path, capsys, tolerance, peaky):
        settings = tmp_path / "settings.yaml"
        settings.write_text(f"log_level: WARNING\nscore_tie_tolerance: {tolerance}\n", encoding="utf-8")
        config = tmp_path / "bias.json"
        config.write_text(json.dumps({
            "name": "bias",
            "topology": "B* a+ B*",
            "input": {"blocks": [["B", 1], ["a", 3], ["B", 1]], "dim": 2, "hot_index": {"a": 0, "B": 1}},
            "model": "bias",
            "train": {"max_steps": 1},
        }), encoding="utf-8")

        assert run(str(settings), "train", "--config", str(config), "--out", str(tmp_path / "out")) == 0
        assert f"peaky: {peaky}" in capsys.readouterr().out.splitlines()


class TestLandscape:
    """Tests for the landscape command."""

    def test_ctc_sweep(self, settings_file, tmp_path, capsys):
        csv_path = tmp_path / "ctc.csv"
        svg_path = tmp_path / "ctc.svg"

        code = run(settings_file, "landscape", "--loss", "ctc", "--n", "4", "--grid=-1:1:0.5",
                   "--csv", str(csv_path), "--svg", str(svg_path))

        assert code == 0
        assert len(csv_path.read_text().splitlines()) == 1 + 25
        assert svg_path.exists()
        assert "terminal region: peaky" in capsys.readouterr().out.splitlines()

    def test_bad_grid(self, settings_file, tmp_path):
        code = run(settings_file, "landscape", "--loss", "ctc", "--grid", "1:0",
                   "--csv", str(tmp_path / "x.csv"))

        assert code == CommandOutcome.EXIT_USAGE


class TestRatio:
    """Tests for the ratio command."""

    def test_uniform_exact(self, settings_file, tmp_path, capsys):
        csv_path = tmp_path / "ratio.csv"

        code = run(settings_file, "ratio", "--T-list", "5,6", "--targets", "a", "--csv", str(csv_path))

        assert code == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "T\tmean_q_blank\tconvergence_step\tpeaky"
        assert out[1] == "5\t0.533333\t\t"
        assert len(csv_path.read_text().splitlines()) == 3

    def test_below_minimum_length(self, settings_file, tmp_path):
        code = run(settings_file, "ratio", "--T-list", "2", "--csv", str(tmp_path / "r.csv"))

        assert code == CommandOutcome.EXIT_USAGE


def test_help_exits_cleanly():
    assert main(["--help"]) == 0


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
