"""Run orchestration, accounting audit, windows, comparisons, reports."""

import dataclasses
import json

import numpy as np
import pytest

from edgecache import (
    POLICY_NAMES,
    AuditError,
    ComparisonReport,
    ConfigError,
    RunConfig,
    RunResult,
    SlotAccount,
    audit_run,
    compare,
    export_report,
    load_report,
    make_policy,
    run_policy,
    windowed_hit_ratio,
)
from edgecache.harness import _replay_lfuda, _replay_lru
from edgecache.policies import LfudaPolicy, LruPolicy


def cfg_for(policy, **kw):
    kw.setdefault("capacity", 4)
    kw.setdefault("age_cap", 6)
    kw.setdefault("delta_t", 8)
    return RunConfig(policy=policy, **kw)


class TestRunConfig:
    def test_round_trips_through_dict(self):
        cfg = cfg_for("rlma", gamma=0.5, rollouts=3)
        assert RunConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="velocity"):
            RunConfig.from_dict({"policy": "lru", "capacity": 4, "velocity": 9})

    def test_policy_and_capacity_required(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"policy": "lru"})
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"capacity": 4})

    def test_unknown_policy_rejected(self):
        with pytest.raises(ConfigError, match="fifo"):
            cfg_for("fifo").validate()

    def test_nested_knobs_validated(self):
        with pytest.raises(ConfigError):
            cfg_for("rlma", gamma=1.5).validate()
        with pytest.raises(ConfigError):
            cfg_for("most_popular", age_cap=0).validate()


class TestMakePolicy:
    def test_every_name_constructs(self):
        for name in POLICY_NAMES:
            policy = make_policy(cfg_for(name))
            assert policy.name == name

    def test_origin_ql_is_rollout_free(self):
        policy = make_policy(cfg_for("origin_ql", rollouts=7))
        assert policy.cfg.rollouts == 0

    def test_rlma_keeps_rollouts(self):
        policy = make_policy(cfg_for("rlma", rollouts=7))
        assert policy.cfg.rollouts == 7


class TestRunPolicy:
    @pytest.mark.parametrize("policy", POLICY_NAMES)
    def test_shapes_and_audit(self, small_trace, policy):
        result = run_policy(small_trace, cfg_for(policy))
        assert len(result.per_slot) == small_trace.num_slots
        assert len(result.cache_history) == small_trace.num_slots
        audit_run(small_trace, result)

    def test_summary_properties(self, small_trace):
        result = run_policy(small_trace, cfg_for("lru"))
        assert result.total_hits == sum(a.hits for a in result.per_slot)
        assert result.total_requests == small_trace.total_events
        assert result.overall_hit_ratio == pytest.approx(
            result.total_hits / result.total_requests)
        assert result.cumulative_reward == pytest.approx(
            float(result.reward_series().sum()))

    def test_manifest_reproduces_run(self, small_trace):
        cfg = cfg_for("most_popular")
        result = run_policy(small_trace, cfg)
        manifest = result.manifest
        assert manifest["config"] == cfg.to_dict()
        assert manifest["trace"]["fingerprint"] == small_trace.fingerprint()
        again = run_policy(small_trace, RunConfig.from_dict(manifest["config"]))
        assert again.per_slot == result.per_slot

    def test_identical_runs_identical_results(self, small_trace):
        cfg = cfg_for("rlma", rollouts=3)
        a = run_policy(small_trace, cfg)
        b = run_policy(small_trace, cfg)
        assert a.per_slot == b.per_slot
        for x, y in zip(a.cache_history, b.cache_history):
            np.testing.assert_array_equal(x, y)


class TestReplayInterpreters:
    def test_lru_replay_matches_policy(self, small_trace):
        policy = LruPolicy(capacity=3)
        for t, (hits, cost, cached) in enumerate(_replay_lru(small_trace, 3)):
            acct = policy.step(small_trace, t)
            assert (acct.hits, acct.cost) == (hits, cost)
            assert policy.cache_contents.tolist() == cached

    def test_lfuda_replay_matches_policy(self, small_trace):
        policy = LfudaPolicy(capacity=3)
        for t, (hits, cost, cached) in enumerate(_replay_lfuda(small_trace, 3)):
            acct = policy.step(small_trace, t)
            assert (acct.hits, acct.cost) == (hits, cost)
            assert policy.cache_contents.tolist() == cached


class TestAudit:
    def test_detects_tampered_hits(self, small_trace):
        result = run_policy(small_trace, cfg_for("most_popular"))
        acc = result.per_slot[10]
        result.per_slot[10] = SlotAccount(acc.hits + 1, acc.requests,
                                          acc.cost, acc.utility)
        with pytest.raises(AuditError, match="slot 10"):
            audit_run(small_trace, result)

    def test_detects_tampered_cost(self, small_trace):
        result = run_policy(small_trace, cfg_for("lru"))
        acc = result.per_slot[5]
        result.per_slot[5] = SlotAccount(acc.hits, acc.requests,
                                         acc.cost + 1, acc.utility)
        with pytest.raises(AuditError, match="slot 5"):
            audit_run(small_trace, result)

    def test_detects_tampered_utility(self, small_trace):
        result = run_policy(small_trace, cfg_for("optimal"))
        acc = result.per_slot[3]
        result.per_slot[3] = SlotAccount(acc.hits, acc.requests, acc.cost,
                                         acc.utility + 0.5)
        with pytest.raises(AuditError, match="slot 3"):
            audit_run(small_trace, result)

    def test_detects_tampered_cache_history(self, small_trace):
        result = run_policy(small_trace, cfg_for("rlma"))
        result.cache_history[20] = np.array([0], dtype=np.int64)
        with pytest.raises(AuditError):
            audit_run(small_trace, result)

    def test_detects_wrong_trace(self, small_trace):
        from edgecache import SynthConfig, generate_synthetic

        other = generate_synthetic(
            SynthConfig(num_slots=60, arrival_rate=1.5, seed=99))
        result = run_policy(small_trace, cfg_for("lru"))
        with pytest.raises(AuditError, match="different trace"):
            audit_run(other, result)


class TestWindowedHitRatio:
    def make_result(self, hits_requests):
        per_slot = [SlotAccount(h, n, 0, float(h)) for h, n in hits_requests]
        history = [np.array([], dtype=np.int64)] * len(per_slot)
        return RunResult(per_slot, history, {})

    def test_matches_brute_force(self):
        data = [(1, 2), (0, 1), (3, 3), (0, 0), (2, 4)]
        points = windowed_hit_ratio(self.make_result(data), window=2)
        assert [(p.start, p.end) for p in points] == [(0, 2), (2, 4), (4, 5)]
        assert points[0].ratio == pytest.approx(1 / 3)
        assert points[1].ratio == pytest.approx(3 / 3)
        assert points[2].ratio == pytest.approx(2 / 4)

    def test_empty_window_has_no_ratio(self):
        points = windowed_hit_ratio(self.make_result([(0, 0), (0, 0)]), 2)
        assert points[0].ratio is None

    def test_trailing_partial_window_flagged(self):
        points = windowed_hit_ratio(
            self.make_result([(1, 1)] * 5), window=2)
        assert [p.partial for p in points] == [False, False, True]

    def test_window_bounds_checked(self):
        result = self.make_result([(1, 1)] * 4)
        with pytest.raises(ConfigError):
            windowed_hit_ratio(result, 0)

    def test_window_longer_than_run_gives_one_partial_point(self):
        points = windowed_hit_ratio(self.make_result([(1, 1)] * 4), 9)
        assert len(points) == 1
        assert points[0].partial
        assert points[0].ratio == 1.0


class TestCompare:
    def test_runs_all_and_tabulates_margins(self, small_trace):
        report = compare(small_trace, [cfg_for("lru"), cfg_for("optimal")])
        assert set(report.runs) == {"lru", "optimal"}
        margin = report.margins["optimal_vs_lru"]["overall_hit_ratio"]
        lru, opt = report.runs["lru"], report.runs["optimal"]
        want = ((opt.overall_hit_ratio - lru.overall_hit_ratio)
                / abs(lru.overall_hit_ratio))
        assert margin == pytest.approx(want)

    def test_margin_none_when_baseline_zero(self, small_trace):
        # origin QL with zero initialization never caches, so its reward
        # is exactly zero and margins against it are undefined.
        report = compare(small_trace,
                         [cfg_for("origin_ql"), cfg_for("most_popular")])
        assert report.runs["origin_ql"].cumulative_reward == 0.0
        assert (report.margins["most_popular_vs_origin_ql"]
                ["cumulative_reward"] is None)

    def test_order_independent(self, small_trace):
        configs = [cfg_for("lru"), cfg_for("lfuda"), cfg_for("optimal")]
        a = compare(small_trace, configs)
        b = compare(small_trace, configs[::-1])
        assert a.margins == b.margins
        for name in a.runs:
            assert a.runs[name].per_slot == b.runs[name].per_slot

    def test_requires_two_configs(self, small_trace):
        with pytest.raises(ConfigError):
            compare(small_trace, [cfg_for("lru")])

    def test_requires_shared_conditions(self, small_trace):
        with pytest.raises(ConfigError, match="capacity"):
            compare(small_trace,
                    [cfg_for("lru", capacity=4), cfg_for("lfuda", capacity=5)])

    def test_rejects_duplicate_policies(self, small_trace):
        with pytest.raises(ConfigError, match="duplicate"):
            compare(small_trace, [cfg_for("lru"), cfg_for("lru")])


class TestReportFiles:
    def test_run_json_round_trip(self, small_trace, tmp_path):
        result = run_policy(small_trace, cfg_for("lfuda"))
        path = tmp_path / "run.json"
        export_report(result, "json", path)
        back = load_report(path)
        assert isinstance(back, RunResult)
        assert back.per_slot == result.per_slot
        assert back.manifest == result.manifest
        for x, y in zip(back.cache_history, result.cache_history):
            np.testing.assert_array_equal(x, y)

    def test_comparison_json_round_trip(self, small_trace, tmp_path):
        report = compare(small_trace, [cfg_for("lru"), cfg_for("optimal")])
        path = tmp_path / "cmp.json"
        export_report(report, "json", path)
        back = load_report(path)
        assert isinstance(back, ComparisonReport)
        assert back.margins == report.margins
        assert back.runs["lru"].per_slot == report.runs["lru"].per_slot

    def test_json_exports_are_byte_identical(self, small_trace, tmp_path):
        result = run_policy(small_trace, cfg_for("rlma"))
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        export_report(result, "json", a)
        export_report(run_policy(small_trace, cfg_for("rlma")), "json", b)
        assert a.read_bytes() == b.read_bytes()

    def test_csv_columns_and_rows(self, small_trace, tmp_path):
        result = run_policy(small_trace, cfg_for("lru", window=10))
        path = tmp_path / "run.csv"
        export_report(result, "csv", path)
        lines = path.read_text().splitlines()
        assert lines[0] == "policy,slot,hits,cost,reward,cum_reward,window_hit_ratio"
        assert len(lines) == 1 + small_trace.num_slots
        first = lines[1].split(",")
        assert first[0] == "lru"
        assert int(first[1]) == 0

    def test_comparison_csv_has_one_row_per_policy_slot(self, small_trace,
                                                        tmp_path):
        report = compare(small_trace, [cfg_for("lru"), cfg_for("lfuda")])
        path = tmp_path / "cmp.csv"
        export_report(report, "csv", path)
        lines = path.read_text().splitlines()
        assert len(lines) == 1 + 2 * small_trace.num_slots

    def test_csv_numbers_parse_back_exactly(self, small_trace, tmp_path):
        result = run_policy(small_trace, cfg_for("most_popular"))
        path = tmp_path / "run.csv"
        export_report(result, "csv", path)
        lines = path.read_text().splitlines()[1:]
        cum = 0.0
        for t, line in enumerate(lines):
            cells = line.split(",")
            acc = result.per_slot[t]
            assert int(cells[2]) == acc.hits
            assert int(cells[3]) == acc.cost
            assert float(cells[4]) == acc.utility
            cum += acc.utility
            assert float(cells[5]) == cum

    def test_unknown_format_rejected(self, small_trace, tmp_path):
        result = run_policy(small_trace, cfg_for("lru"))
        with pytest.raises(ConfigError):
            export_report(result, "xml", tmp_path / "x.xml")

    def test_missing_report_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_report(tmp_path / "absent.json")

    def test_schema_version_checked(self, tmp_path):
        path = tmp_path / "old.json"
        path.write_text(json.dumps({"schema_version": 999, "kind": "run"}))
        with pytest.raises(ConfigError, match="schema"):
            load_report(path)
