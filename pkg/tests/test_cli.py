"""
Tests for the voxconn command line.
"""

import json

import pytest

from src.main import build_config, build_parser, main
from src.models.results import NetworkResult

FAST_FIT = ["--n-basis", "4", "--max-iter", "40", "--se-mode", "marginal"]


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestCommandLine:
    """Test cases for the end-to-end commands."""

    def test_simulate_fit_report(self, tmp_path, capsys):
        """Test simulate, fit-network and report on a small scenario."""
        data = tmp_path / "data"
        code, out, _ = run(capsys, "--seed", "1", "simulate", "--preset", "paper-s4",
                           "--voxels", "3", "--timepoints", "12", "--output", str(data))
        assert code == 0
        summary = json.loads(out)
        assert summary["regions"] == ["R1", "R2", "R3"]
        assert (data / "manifest.json").is_file()

        networks = []
        for name in ("first.json", "second.json"):
            code, out, _ = run(capsys, "--workers", "1", "fit-network", "--dataset", str(data),
                               "--output", str(tmp_path / name), "--q", "0.05", *FAST_FIT)
            assert code == 0
            assert json.loads(out)["pairs"] == 3
            networks.append(NetworkResult.load(str(tmp_path / name)))
        first, second = networks
        assert (tmp_path / "first.json").read_text() == (tmp_path / "second.json").read_text()
        assert [p.rho_hat for p in first.pairs] == [p.rho_hat for p in second.pairs]
        assert [p.status for p in first.pairs] == [p.status for p in second.pairs]

        code, out, _ = run(capsys, "report", "--network", str(tmp_path / "first.json"),
                           "--q", "0.2", "--output", str(tmp_path / "report"))
        assert code == 0
        paths = json.loads(out)
        assert set(paths) == {"edges", "adjacency", "nodes", "estimates"}
        assert (tmp_path / "report" / "edges.csv").is_file()

    def test_fit_region(self, tmp_path, capsys):
        """Test the Stage-1 command writes a fit file."""
        data = tmp_path / "data"
        run(capsys, "simulate", "--preset", "null", "--voxels", "3", "--timepoints", "10",
            "--output", str(data))
        output = tmp_path / "fit.json"
        code, out, _ = run(capsys, "fit-region", "--dataset", str(data), "--region", "R2",
                           "--output", str(output), *FAST_FIT)
        assert code == 0
        assert json.loads(output.read_text())["label"] == "R2"
        assert json.loads(out)["command"] == "fit-region"

    def test_missing_dataset(self, tmp_path, capsys):
        """Test a command error is reported as JSON with exit code 1."""
        code, out, err = run(capsys, "fit-network", "--dataset", str(tmp_path / "nowhere"))
        assert code == 1
        assert out == ""
        payload = json.loads(err.strip().splitlines()[-1])
        assert payload["command"] == "fit-network"
        assert payload["error"] == "DatasetFormatError"

    def test_invalid_configuration(self, tmp_path, capsys):
        """Test an out-of-range option fails before any work with exit code 2."""
        code, _, err = run(capsys, "fit-network", "--dataset", str(tmp_path), "--q", "2")
        assert code == 2
        assert json.loads(err.strip().splitlines()[-1])["error"] == "ValidationError"

    def test_unknown_region(self, tmp_path, capsys):
        """Test an unknown region label."""
        data = tmp_path / "data"
        run(capsys, "simulate", "--preset", "null", "--voxels", "2", "--timepoints", "8",
            "--output", str(data))
        code, _, err = run(capsys, "fit-region", "--dataset", str(data), "--region", "R9")
        assert code == 1
        assert "R9" in json.loads(err.strip().splitlines()[-1])["message"]

    def test_parser_rejects_unknown_preset(self):
        """Test argparse choices."""
        with pytest.raises(SystemExit):
            build_parser().parse_args(["simulate", "--preset", "nope"])

    def test_fix_fixed_effects_flag(self):
        """Test --fix-fixed-effects reaches the Stage-1 configuration."""
        parser = build_parser()
        base = ["fit-region", "--dataset", "data", "--region", "R1"]
        assert build_config(parser.parse_args(base)).stage1.fix_fixed_effects is False
        config = build_config(parser.parse_args(base + ["--fix-fixed-effects"]))
        assert config.stage1.fix_fixed_effects is True

    def test_fit_region_with_fixed_effects_held(self, tmp_path, capsys):
        """Test fit-region runs with the spline coefficients held at OLS."""
        data = tmp_path / "data"
        run(capsys, "simulate", "--preset", "null", "--voxels", "3", "--timepoints", "10",
            "--output", str(data))
        code, out, _ = run(capsys, "fit-region", "--dataset", str(data), "--region", "R1",
                           "--output", str(tmp_path / "fit.json"), "--fix-fixed-effects", *FAST_FIT)
        assert code == 0
        assert json.loads(out)["command"] == "fit-region"

    def test_invalid_log_level(self, tmp_path, capsys):
        """Test an unknown log level is a usage error with exit code 2."""
        with pytest.raises(SystemExit) as excinfo:
            main(["--log-level", "chatty", "simulate", "--output", str(tmp_path / "data")])
        assert excinfo.value.code == 2
        assert "--log-level" in capsys.readouterr().err

    def test_log_level_case_insensitive(self):
        """Test log levels are accepted in any case."""
        args = build_parser().parse_args(["--log-level", "debug", "report", "--network", "n.json"])
        assert args.log_level == "DEBUG"


if __name__ == "__main__":
    pytest.main([__file__])
