"""
Tests for the command-line entry point and its exit codes.
"""
import json

import pandas as pd
import pytest

import main
from app.services import identification_service
from app.utils import artifacts
from app.utils.case_io import save_case
from app.utils.errors import ConfigError, RankDeficitError
from app.utils.workspace import OutputWorkspace
from tests.conftest import triangle_case


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    """One day of the 3-bus case written by the simulate command."""
    out = tmp_path_factory.mktemp("sim")
    code = main.main(["simulate", "--case", "builtin:case3", "--out", str(out),
                      "--intervals", "288", "--noise", "0.01", "--seed", "3"])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def identified(simulated, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main.main(["identify", "--lmp", str(simulated / artifacts.LMP_FILE), "--out", str(out)])
    assert code == 0
    return out


class TestHappyCases:
    """simulate -> identify -> evaluate -> report on the 3-bus case."""

    def test_simulate_outputs(self, simulated):
        lmp = pd.read_csv(simulated / artifacts.LMP_FILE)
        truth = pd.read_csv(simulated / artifacts.TRUTH_FILE)
        assert set(lmp.columns) == {"node", "timestamp", "mcc", "mlc", "mec"}
        assert len(lmp) == 3 * 288
        assert set(truth["line_id"]) == {1, 2, 3}

    def test_identify_outputs(self, identified):
        for name in (artifacts.BASIS_FILE, artifacts.CODES_FILE, artifacts.WORKING_FILE,
                     artifacts.ROUNDS_FILE, artifacts.working_round_file(1)):
            assert (identified / name).is_file(), name
        codes = artifacts.read_codes_csv(identified / artifacts.CODES_FILE)
        assert codes.k == 2
        rounds = artifacts.read_rounds_jsonl(identified / artifacts.ROUNDS_FILE)
        assert [r["harvested"] for r in rounds] == [2]
        assert not (identified / artifacts.TREE_FILE).exists()

    def test_identify_is_byte_identical(self, simulated, identified, tmp_path):
        code = main.main(["identify", "--lmp", str(simulated / artifacts.LMP_FILE), "--out", str(tmp_path)])
        assert code == 0
        for name in (artifacts.CODES_FILE, artifacts.BASIS_FILE, artifacts.ROUNDS_FILE):
            assert (tmp_path / name).read_bytes() == (identified / name).read_bytes()

    def test_identify_spp_layout(self, simulated, identified, tmp_path):
        spp = tmp_path / "spp.csv"
        pd.read_csv(simulated / artifacts.LMP_FILE).rename(columns={
            "node": "Settlement Location", "timestamp": "GMT Interval", "mcc": "MCC", "mlc": "MLC", "mec": "MEC",
        }).to_csv(spp, index=False)
        out = tmp_path / "run"
        assert main.main(["identify", "--lmp-layout", "spp", "--lmp", str(spp), "--out", str(out)]) == 0
        assert (out / artifacts.CODES_FILE).read_bytes() == (identified / artifacts.CODES_FILE).read_bytes()

    def test_evaluate_perfect_run(self, simulated, identified, capsys):
        code = main.main(["evaluate", "--out", str(identified), "--truth", str(simulated / artifacts.TRUTH_FILE),
                          "--case", "builtin:case3"])
        assert code == 0
        assert "total miscode: 0.0000%" in capsys.readouterr().out
        report = (identified / artifacts.REPORT_FILE).read_text(encoding="utf-8")
        assert report.startswith("total miscode: 0.000000%")
        frequency = pd.read_csv(identified / artifacts.FREQUENCY_FILE, dtype={"code": str})
        assert frequency["count"].sum() == len(artifacts.read_codes_csv(identified / artifacts.CODES_FILE).intervals)

    def test_report(self, identified, capsys):
        code = main.main(["report", "--out", str(identified)])
        assert code == 0
        blocks = pd.read_csv(identified / artifacts.BLOCKS_FILE)
        assert len(blocks) == 2
        assert (identified / artifacts.affinity_round_file(1)).is_file()
        assert not (identified / artifacts.affinity_round_file(2)).exists()

    def test_identify_replaces_outputs_of_an_earlier_run(self, simulated, tmp_path):
        """Round grids and the tree of a longer earlier run do not survive a new identify."""
        out = tmp_path / "run"
        out.mkdir()
        for name in (artifacts.working_round_file(2), artifacts.affinity_round_file(2),
                     artifacts.TREE_FILE, artifacts.REPORT_FILE):
            (out / name).write_text("stale\n", encoding="utf-8")
        assert main.main(["identify", "--lmp", str(simulated / artifacts.LMP_FILE), "--out", str(out)]) == 0
        assert main.main(["report", "--out", str(out)]) == 0
        assert (out / artifacts.affinity_round_file(1)).is_file()
        for name in (artifacts.working_round_file(2), artifacts.affinity_round_file(2),
                     artifacts.TREE_FILE, artifacts.REPORT_FILE):
            assert not (out / name).exists(), name
        assert (simulated / artifacts.LMP_FILE).is_file()

    def test_lossy_pipeline(self, tmp_path, capsys):
        sim, run = tmp_path / "sim", tmp_path / "run"
        assert main.main(["simulate", "--mode", "lossy", "--case", "builtin:case3", "--out", str(sim),
                          "--intervals", "288", "--noise", "0.01", "--seed", "5"]) == 0
        assert main.main(["identify", "--mode", "lossy", "--ref-node", "1",
                          "--lmp", str(sim / artifacts.LMP_FILE), "--out", str(run)]) == 0
        assert main.main(["evaluate", "--mode", "lossy", "--ref-node", "1", "--case", "builtin:case3",
                          "--truth", str(sim / artifacts.TRUTH_FILE), "--out", str(run)]) == 0
        assert "total miscode: 0.0000%" in capsys.readouterr().out


class TestConfiguration:
    """Defaults, config file and flags."""

    def test_flags_override_config_file(self, tmp_path):
        config_path = tmp_path / "run.json"
        config_path.write_text(json.dumps({"seed": 3, "intervals": 10, "eps_cutoff": 0.01}), encoding="utf-8")
        args = main.build_parser().parse_args(["simulate", "--config", str(config_path), "--intervals", "12"])
        config = main.load_config(args)
        assert (config.seed, config.intervals, config.eps_cutoff) == (3, 12, 0.01)
        assert config.noise == 0.03

    def test_invalid_value(self, tmp_path):
        args = main.build_parser().parse_args(["identify", "--eps-cutoff", "2"])
        with pytest.raises(ConfigError, match="eps_cutoff"):
            main.load_config(args)

    def test_invalid_value_exit_code(self, capsys):
        assert main.main(["identify", "--eps-cutoff", "2"]) == 1
        assert "eps_cutoff" in capsys.readouterr().err

    def test_unknown_service_option(self, tmp_path):
        config_path = tmp_path / "run.json"
        config_path.write_text(json.dumps({"services": {"bottom_up": {"restarts": 3}}}), encoding="utf-8")
        assert main.main(["report", "--config", str(config_path), "--out", str(tmp_path)]) == 1


class TestErrorCases:
    """Exit codes for failing runs."""

    def test_missing_lmp_option(self, capsys):
        assert main.main(["identify"]) == 1
        assert "--lmp" in capsys.readouterr().err

    def test_report_without_identify(self, tmp_path, capsys):
        assert main.main(["report", "--out", str(tmp_path)]) == 1
        assert "identify" in capsys.readouterr().err

    def test_infeasible_simulation(self, tmp_path, capsys):
        case_path = save_case(triangle_case(load3=500.0), tmp_path / "heavy.json")
        code = main.main(["simulate", "--case", str(case_path), "--out", str(tmp_path / "out"), "--intervals", "4"])
        assert code == 2
        assert "intervals feasible" in capsys.readouterr().err
        assert not (tmp_path / "out" / artifacts.LMP_FILE).exists()

    def test_no_congestion(self, tmp_path, capsys):
        lmp = tmp_path / "flat.csv"
        pd.DataFrame({
            "node": ["1", "2", "1", "2"],
            "timestamp": ["2020-01-01 00:00", "2020-01-01 00:00", "2020-01-01 00:05", "2020-01-01 00:05"],
            "mcc": [0.0, 0.0, 0.0, 0.0],
        }).to_csv(lmp, index=False)
        assert main.main(["identify", "--lmp", str(lmp), "--out", str(tmp_path / "out")]) == 4
        assert "no congestion observed" in capsys.readouterr().err

    def test_rank_deficit(self, simulated, tmp_path, monkeypatch, capsys):
        def deficient(*args, **kwargs):
            raise RankDeficitError(1, 7)

        monkeypatch.setattr(identification_service, "assemble_basis", deficient)
        code = main.main(["identify", "--lmp", str(simulated / artifacts.LMP_FILE), "--out", str(tmp_path)])
        assert code == 3
        assert "residual_columns=7" in capsys.readouterr().err
        assert not (tmp_path / artifacts.CODES_FILE).exists()


class TestWorkspace:
    """Staged outputs land only on success."""

    def test_commit_on_success(self, tmp_path):
        with OutputWorkspace(tmp_path / "out", "t1") as ws:
            ws.path("a.txt").write_text("x", encoding="utf-8")
        assert (tmp_path / "out" / "a.txt").read_text(encoding="utf-8") == "x"
        assert [p.name for p in tmp_path.iterdir()] == ["out"]

    def test_nothing_on_failure(self, tmp_path):
        with pytest.raises(RuntimeError):
            with OutputWorkspace(tmp_path / "out", "t2") as ws:
                ws.path("a.txt").write_text("x", encoding="utf-8")
                raise RuntimeError("boom")
        assert not (tmp_path / "out").exists()
        assert list(tmp_path.iterdir()) == []

    def test_discard_removes_matching_files_on_commit(self, tmp_path):
        out = tmp_path / "out"
        out.mkdir()
        for name in ("old_round1.csv", "old_round2.csv", "keep.csv"):
            (out / name).write_text("x", encoding="utf-8")
        with OutputWorkspace(out, "t3") as ws:
            ws.discard("old_round*.csv")
            ws.path("new.csv").write_text("y", encoding="utf-8")
        assert sorted(p.name for p in out.iterdir()) == ["keep.csv", "new.csv"]

    def test_discard_untouched_on_failure(self, tmp_path):
        out = tmp_path / "out"
        out.mkdir()
        (out / "old_round1.csv").write_text("x", encoding="utf-8")
        with pytest.raises(RuntimeError):
            with OutputWorkspace(out, "t4") as ws:
                ws.discard("old_round*.csv")
                raise RuntimeError("boom")
        assert (out / "old_round1.csv").is_file()
