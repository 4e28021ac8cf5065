"""
Tests for the heatbem command-line interface
Run with: python -m pytest tests/test_app.py --cov=heatbem --cov-report=html
"""

import csv
import json
from unittest.mock import patch

import numpy as np
import pytest

from heatbem.app import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, build_parser, fmt, main
from heatbem.errors import ContourError

SMALL_RUN = {
    "geometry": [[0, 0], [1, 0], [1, 1], [0, 1]],
    "h": 0.5,
    "k": 0.0625,
    "T": 1.0,
    "grid": {"x_min": -0.5, "x_max": 1.5, "y_min": -0.5, "y_max": 1.5, "nx": 5, "ny": 5},
}


@pytest.fixture()
def write_config(tmp_path):
    def _write(**overrides):
        body = dict(SMALL_RUN)
        body.update(overrides)
        path = tmp_path / "run.json"
        path.write_text(json.dumps(body))
        return str(path)
    return _write


def read_rows(path):
    with open(path, newline="") as handle:
        return list(csv.reader(handle))


class TestParser:
    """Argument parsing"""

    def test_commands(self):
        args = build_parser().parse_args(["solve", "--config", "run.json", "--workers", "2"])
        assert args.command == "solve"
        assert args.workers == 2
        assert args.dump_weights is False

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["plot", "--config", "run.json"])

    def test_format_round_trips(self):
        assert float(fmt(0.1)) == 0.1
        assert fmt(0.0625) == "0.0625"


class TestSolveCommand:
    """heatbem solve"""

    def test_summary_rows(self, write_config, tmp_path):
        out = tmp_path / "out"
        assert main(["solve", "--config", write_config(), "--out", str(out)]) == EXIT_OK
        rows = read_rows(out / "solve_summary.csv")
        assert rows[0] == ["step", "time", "lambda_hminushalf", "phi_hhalf"]
        assert len(rows) == 17
        assert rows[1][:2] == ["1", "0.0625"]
        assert rows[-1][1] == "1"
        log = json.loads((out / "run_log.json").read_text())
        assert log["command"] == "solve"
        assert log["counters"]["frequencies"] == 33

    def test_deterministic_outputs(self, write_config, tmp_path):
        config = write_config()
        for name in ("a", "b"):
            assert main(["solve", "--config", config, "--out", str(tmp_path / name)]) == EXIT_OK
        for name in ("solve_summary.csv", "run_log.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_parallel_frequencies_match_serial(self, write_config, tmp_path):
        config = write_config()
        assert main(["solve", "--config", config, "--out", str(tmp_path / "serial")]) == EXIT_OK
        assert main(["solve", "--config", config, "--out", str(tmp_path / "parallel"), "--workers", "3"]) == EXIT_OK
        assert read_rows(tmp_path / "serial" / "solve_summary.csv") == \
            read_rows(tmp_path / "parallel" / "solve_summary.csv")

    def test_dump_weights(self, write_config, tmp_path):
        out = tmp_path / "out"
        assert main(["solve", "--config", write_config(), "--out", str(out), "--dump-weights"]) == EXIT_OK
        assert len(read_rows(out / "weights.csv")) == 17


class TestConfigErrors:
    """Exit status 2 with a message naming the field"""

    def test_negative_kappa(self, write_config, tmp_path, capsys):
        code = main(["solve", "--config", write_config(kappa=-1.0), "--out", str(tmp_path / "out")])
        assert code == EXIT_CONFIG
        assert "kappa" in capsys.readouterr().err

    def test_missing_config(self, tmp_path, capsys):
        assert main(["solve", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG
        assert "error:" in capsys.readouterr().err

    def test_bad_workers(self, write_config, tmp_path):
        assert main(["solve", "--config", write_config(), "--out", str(tmp_path), "--workers", "0"]) == EXIT_CONFIG

    def test_contour_points_too_small(self, write_config, tmp_path, capsys):
        code = main(["solve", "--config", write_config(), "--out", str(tmp_path), "--contour-points", "8"])
        assert code == EXIT_CONFIG
        assert "contour_points" in capsys.readouterr().err

    def test_convergence_needs_three_levels(self, write_config, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["convergence", "--config", write_config(levels=2), "--out", str(out)]) == EXIT_CONFIG
        assert "levels" in capsys.readouterr().err
        assert (out / "run_log.json").exists()


class TestNumericalErrors:
    """Exit status 3 on solver failures"""

    @patch("heatbem.app.solve_transmission")
    def test_contour_failure(self, mock_solve, write_config, tmp_path, capsys):
        mock_solve.side_effect = ContourError("frequency 3 is not admissible", 3)
        assert main(["solve", "--config", write_config(), "--out", str(tmp_path)]) == EXIT_NUMERICAL
        assert "frequency 3" in capsys.readouterr().err

    @patch("heatbem.app.solve_transmission")
    def test_singular_system(self, mock_solve, write_config, tmp_path):
        mock_solve.side_effect = np.linalg.LinAlgError("Singular matrix")
        assert main(["solve", "--config", write_config(), "--out", str(tmp_path)]) == EXIT_NUMERICAL

    @patch("heatbem.app.solve_transmission")
    def test_plain_value_error_is_not_numerical(self, mock_solve, write_config, tmp_path):
        """Programming errors propagate instead of exiting with status 3"""
        mock_solve.side_effect = ValueError("history has 3 samples, scheme has 4 steps")
        with pytest.raises(ValueError, match="history has 3 samples"):
            main(["solve", "--config", write_config(), "--out", str(tmp_path)])
        assert (tmp_path / "run_log.json").exists()


class TestFieldsCommand:
    """heatbem fields"""

    def test_no_snapshot_times(self, write_config, tmp_path):
        out = tmp_path / "out"
        assert main(["fields", "--config", write_config(), "--out", str(out)]) == EXIT_OK
        assert not list(out.glob("fields_*.csv"))

    def test_manufactured_snapshots(self, write_config, tmp_path):
        out = tmp_path / "out"
        config = write_config(k=0.25, snapshot_times=[0.0, 0.5, 1.0])
        assert main(["fields", "--config", config, "--out", str(out)]) == EXIT_OK
        files = sorted(out.glob("fields_*.csv"))
        assert [f.name for f in files] == ["fields_00.csv", "fields_01.csv", "fields_02.csv"]
        rows = read_rows(files[0])
        assert rows[0] == ["x", "y", "region", "u_value"]
        # 25 grid points, 8 of them on the square's boundary
        assert len(rows) == 18
        assert {row[2] for row in rows[1:]} == {"-", "+"}
        log = json.loads((out / "run_log.json").read_text())
        assert len(log["excluded_points"]) == 8


class TestWeightsDump:
    """heatbem weights-dump"""

    def test_bdf_rows(self, write_config, tmp_path):
        out = tmp_path / "out"
        assert main(["weights-dump", "--config", write_config(k=0.25), "--out", str(out)]) == EXIT_OK
        rows = read_rows(out / "weights.csv")
        assert rows[0] == ["n", "stage_i", "stage_j", "re_omega", "im_omega"]
        assert len(rows) == 5

    def test_rk_rows(self, write_config, tmp_path):
        out = tmp_path / "out"
        config = write_config(k=0.25, scheme="radau:2")
        assert main(["weights-dump", "--config", config, "--out", str(out)]) == EXIT_OK
        assert len(read_rows(out / "weights.csv")) == 1 + 4 * 4
