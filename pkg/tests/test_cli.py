"""Command line interface: subcommands, config layering, exit codes."""

import json
import subprocess
import sys

import numpy as np
import pytest

from edgecache import load_report, load_trace
from edgecache.cli import (
    EXIT_BADDATA,
    EXIT_CONFIG,
    EXIT_MISSING,
    EXIT_OK,
    EXIT_USAGE,
    main,
)


@pytest.fixture(scope="module")
def trace_file(tmp_path_factory):
    """A small trace written once for the whole module."""
    path = tmp_path_factory.mktemp("traces") / "small.npz"
    code = main(["synth", "--slots", "40", "--arrival-rate", "1.5",
                 "--seed", "3", "--initial-files", "3",
                 "--out", str(path)])
    assert code == EXIT_OK
    return str(path)


class TestSynth:
    def test_writes_loadable_trace(self, trace_file):
        trace = load_trace(trace_file)
        assert trace.num_slots == 40

    def test_deterministic_given_seed(self, tmp_path):
        a, b = tmp_path / "a.npz", tmp_path / "b.npz"
        argv = ["synth", "--slots", "20", "--seed", "9"]
        assert main(argv + ["--out", str(a)]) == EXIT_OK
        assert main(argv + ["--out", str(b)]) == EXIT_OK
        assert load_trace(a) == load_trace(b)

    def test_bad_parameter_is_config_error(self, tmp_path, capsys):
        code = main(["synth", "--slots", "20", "--volume-shape", "0",
                     "--out", str(tmp_path / "x.npz")])
        assert code == EXIT_CONFIG
        assert "error: config:" in capsys.readouterr().err


class TestIngest:
    def test_csv_to_trace(self, tmp_path):
        events = tmp_path / "events.csv"
        events.write_text(
            "userId,movieId,rating,timestamp\n"
            "1,3,4.0,100\n1,3,5.0,109\n2,7,3.0,121\n")
        out = tmp_path / "ingested.npz"
        code = main(["ingest", "--events", str(events),
                     "--slot-duration", "10", "--out", str(out)])
        assert code == EXIT_OK
        trace = load_trace(out)
        assert trace.num_slots == 3
        assert trace.num_files == 2

    def test_missing_events_file(self, tmp_path, capsys):
        code = main(["ingest", "--events", str(tmp_path / "nope.csv"),
                     "--slot-duration", "10",
                     "--out", str(tmp_path / "o.npz")])
        assert code == EXIT_MISSING
        assert "error: missing-file:" in capsys.readouterr().err

    def test_malformed_events_are_bad_data(self, tmp_path, capsys):
        events = tmp_path / "events.csv"
        events.write_text("1,3,4.0,100\n1,oops,4.0,xyz\n")
        code = main(["ingest", "--events", str(events),
                     "--slot-duration", "10",
                     "--out", str(tmp_path / "o.npz")])
        assert code == EXIT_BADDATA
        assert "error: bad-data:" in capsys.readouterr().err

    def test_release_override_applied(self, tmp_path):
        events = tmp_path / "events.csv"
        events.write_text("1,3,4.0,100\n1,7,4.0,125\n")
        release = tmp_path / "release.csv"
        release.write_text("7,0\n")
        out = tmp_path / "o.npz"
        code = main(["ingest", "--events", str(events),
                     "--slot-duration", "10", "--release", str(release),
                     "--out", str(out)])
        assert code == EXIT_OK
        trace = load_trace(out)
        dense_of_7 = int(np.nonzero(trace.original_ids == 7)[0][0])
        assert trace.release_slot[dense_of_7] == 0


class TestRun:
    def test_produces_json_report(self, trace_file, tmp_path):
        out = tmp_path / "run.json"
        code = main(["run", "--trace", trace_file, "--policy", "lru",
                     "-M", "4", "--out", str(out)])
        assert code == EXIT_OK
        result = load_report(out)
        assert result.manifest["config"]["policy"] == "lru"
        assert result.manifest["config"]["capacity"] == 4

    def test_csv_format(self, trace_file, tmp_path):
        out = tmp_path / "run.csv"
        code = main(["run", "--trace", trace_file, "--policy", "lfuda",
                     "-M", "4", "--format", "csv", "--out", str(out)])
        assert code == EXIT_OK
        header = out.read_text().splitlines()[0]
        assert header == "policy,slot,hits,cost,reward,cum_reward,window_hit_ratio"

    def test_repeat_runs_byte_identical(self, trace_file, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        argv = ["run", "--trace", trace_file, "--policy", "rlma", "-M", "4",
                "--delta-t", "8", "--seed", "1"]
        assert main(argv + ["--out", str(a)]) == EXIT_OK
        assert main(argv + ["--out", str(b)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()

    def test_config_file_with_flag_override(self, trace_file, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(
            {"policy": "most_popular", "capacity": 3, "age_cap": 5}))
        out = tmp_path / "run.json"
        code = main(["run", "--trace", trace_file, "--config", str(cfg_path),
                     "-M", "6", "--out", str(out)])
        assert code == EXIT_OK
        config = load_report(out).manifest["config"]
        assert config["capacity"] == 6       # flag wins
        assert config["age_cap"] == 5        # file survives

    def test_lambda_shorthand(self, trace_file, tmp_path):
        out = tmp_path / "run.json"
        code = main(["run", "--trace", trace_file, "--policy", "optimal",
                     "-M", "4", "--lambda", "2.5", "--out", str(out)])
        assert code == EXIT_OK
        config = load_report(out).manifest["config"]
        assert config["lambda_r"] == 1.0
        assert config["lambda_c"] == 2.5

    def test_unknown_config_key_is_config_error(self, trace_file, tmp_path,
                                                capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"policy": "lru", "capaciti": 3}))
        code = main(["run", "--trace", trace_file, "--config", str(cfg_path),
                     "--out", str(tmp_path / "x.json")])
        assert code == EXIT_CONFIG
        assert "capaciti" in capsys.readouterr().err

    def test_invalid_json_config(self, trace_file, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text("{not json")
        code = main(["run", "--trace", trace_file, "--config", str(cfg_path),
                     "--out", str(tmp_path / "x.json")])
        assert code == EXIT_CONFIG

    def test_missing_trace_file(self, tmp_path, capsys):
        code = main(["run", "--trace", str(tmp_path / "ghost.npz"),
                     "--policy", "lru", "--out", str(tmp_path / "x.json")])
        assert code == EXIT_MISSING

    def test_unknown_policy_is_usage_error(self, trace_file, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--trace", trace_file, "--policy", "fifo",
                  "--out", str(tmp_path / "x.json")])
        assert exc.value.code == EXIT_USAGE

    def test_out_flag_required(self, trace_file):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--trace", trace_file, "--policy", "lru"])
        assert exc.value.code == EXIT_USAGE


class TestCompare:
    def test_selected_policies(self, trace_file, tmp_path, capsys):
        out = tmp_path / "cmp.json"
        code = main(["compare", "--trace", trace_file,
                     "--policies", "lru,lfuda,optimal", "-M", "4",
                     "--out", str(out)])
        assert code == EXIT_OK
        report = load_report(out)
        assert set(report.runs) == {"lru", "lfuda", "optimal"}
        stdout = capsys.readouterr().out
        assert "optimal:" in stdout

    def test_duplicate_policy_is_config_error(self, trace_file, tmp_path):
        code = main(["compare", "--trace", trace_file,
                     "--policies", "lru,lru", "-M", "4",
                     "--out", str(tmp_path / "x.json")])
        assert code == EXIT_CONFIG


class TestReport:
    def test_rerenders_summary_and_csv(self, trace_file, tmp_path, capsys):
        run_out = tmp_path / "run.json"
        main(["run", "--trace", trace_file, "--policy", "optimal", "-M", "4",
              "--out", str(run_out)])
        capsys.readouterr()
        csv_out = tmp_path / "render.csv"
        code = main(["report", "--in", str(run_out), "--out", str(csv_out)])
        assert code == EXIT_OK
        stdout = capsys.readouterr().out
        assert "policy,overall_hit_ratio,cumulative_reward" in stdout
        assert csv_out.exists()

    def test_comparison_report_prints_margins(self, trace_file, tmp_path,
                                              capsys):
        cmp_out = tmp_path / "cmp.json"
        main(["compare", "--trace", trace_file, "--policies", "lru,optimal",
              "-M", "4", "--out", str(cmp_out)])
        capsys.readouterr()
        code = main(["report", "--in", str(cmp_out)])
        assert code == EXIT_OK
        assert "margin optimal_vs_lru" in capsys.readouterr().out

    def test_missing_input(self, tmp_path):
        code = main(["report", "--in", str(tmp_path / "none.json")])
        assert code == EXIT_MISSING


class TestEntryPoint:
    def test_console_script_runs(self):
        proc = subprocess.run(
            [sys.executable, "-m", "edgecache.cli", "--help"],
            capture_output=True, text=True)
        assert proc.returncode == EXIT_OK
        assert "run" in proc.stdout and "compare" in proc.stdout

    def test_no_subcommand_is_usage_error(self):
        proc = subprocess.run(
            [sys.executable, "-m", "edgecache.cli"],
            capture_output=True, text=True)
        assert proc.returncode == EXIT_USAGE
