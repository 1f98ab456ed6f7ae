"""Drive policies over traces, account every slot, compare runs.

A run is fully described by its manifest (config echo, package version,
trace fingerprint); re-running from the manifest reproduces the report
byte for byte. The audit pass re-derives every slot's accounting from
raw data: slot-level policies from the recorded cache sets, request-
level policies from an independent replay of the event stream.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .cache import SlotAccount
from .glm import GroupedLinearModel
from .policies import (HindsightOptimalPolicy, LfudaPolicy, LruPolicy,
                       MostPopularPolicy)
from .rlma import RlAgent, RlConfig
from .trace import ConfigError, SlottedTrace

log = logging.getLogger("edgecache.harness")

SCHEMA_VERSION = 1
POLICY_NAMES = ("lru", "lfuda", "most_popular", "optimal", "origin_ql", "rlma")


@dataclass(frozen=True)
class RunConfig:
    """One policy run: what to run and every knob it may consult.

    Single-lambda accounting (r = H - lambda*C) is expressed as
    lambda_r=1, lambda_c=lambda. Knobs irrelevant to the chosen policy
    are carried unchanged into the manifest but never read.
    """

    policy: str
    capacity: int
    lambda_r: float = 1.0
    lambda_c: float = 1.0
    seed: int = 0
    window: int = 50
    age_cap: int = 60
    fit_steps: int = 5
    forgetting: float = 1.0
    newcomer_prior: float | None = None
    gamma: float = 0.9
    alpha0: float = 0.1
    beta0: float = 0.99
    rollouts: int = 5
    delta_t: int = 30
    q_init: float = 0.0
    action_rule: str = "argmax"
    full_replay: bool = False

    def validate(self):
        if self.policy not in POLICY_NAMES:
            raise ConfigError(f"unknown policy {self.policy!r}; "
                              f"choose from {', '.join(POLICY_NAMES)}")
        if self.capacity < 1:
            raise ConfigError("capacity must be >= 1")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.lambda_r < 0 or self.lambda_c < 0:
            raise ConfigError("lambda weights must be >= 0")
        if self.fit_steps < 0:
            raise ConfigError("fit_steps must be >= 0")
        # model and agent constructors validate their own knobs
        GroupedLinearModel(self.age_cap, forgetting=self.forgetting,
                           newcomer_prior=self.newcomer_prior)
        self._rl_config().validate()

    def _rl_config(self, rollouts: int | None = None) -> RlConfig:
        return RlConfig(
            capacity=self.capacity, gamma=self.gamma, alpha0=self.alpha0,
            beta0=self.beta0, delta_t=self.delta_t,
            rollouts=self.rollouts if rollouts is None else rollouts,
            lambda_r=self.lambda_r, lambda_c=self.lambda_c, seed=self.seed,
            q_init=self.q_init, action_rule=self.action_rule,
            full_replay=self.full_replay)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "policy" not in data or "capacity" not in data:
            raise ConfigError("config requires at least policy and capacity")
        cfg = cls(**data)
        cfg.validate()
        return cfg


def make_policy(cfg: RunConfig):
    """Instantiate the named policy with its knobs from the config."""
    cfg.validate()
    lam = dict(lambda_r=cfg.lambda_r, lambda_c=cfg.lambda_c)
    if cfg.policy == "lru":
        return LruPolicy(cfg.capacity, **lam)
    if cfg.policy == "lfuda":
        return LfudaPolicy(cfg.capacity, **lam)
    if cfg.policy == "optimal":
        return HindsightOptimalPolicy(cfg.capacity, **lam)
    model = GroupedLinearModel(cfg.age_cap, forgetting=cfg.forgetting,
                               newcomer_prior=cfg.newcomer_prior)
    if cfg.policy == "most_popular":
        return MostPopularPolicy(cfg.capacity, model, fit_steps=cfg.fit_steps,
                                 **lam)
    if cfg.policy == "rlma":
        return RlAgent(cfg._rl_config(), model, fit_steps=cfg.fit_steps,
                       name="rlma")
    # origin ablation: plain Q-learning, no imagined samples
    return RlAgent(cfg._rl_config(rollouts=0), model,
                   fit_steps=cfg.fit_steps, name="origin_ql")


@dataclass
class RunResult:
    """Per-slot accounting plus the manifest that reproduces it."""

    per_slot: list[SlotAccount]
    cache_history: list[np.ndarray]
    manifest: dict

    @property
    def cumulative_reward(self) -> float:
        return float(sum(acc.utility for acc in self.per_slot))

    @property
    def total_hits(self) -> int:
        return int(sum(acc.hits for acc in self.per_slot))

    @property
    def total_requests(self) -> int:
        return int(sum(acc.requests for acc in self.per_slot))

    @property
    def total_cost(self) -> int:
        return int(sum(acc.cost for acc in self.per_slot))

    @property
    def overall_hit_ratio(self) -> float:
        total = self.total_requests
        return self.total_hits / total if total else 0.0

    def reward_series(self) -> np.ndarray:
        return np.array([acc.utility for acc in self.per_slot])


def _manifest(trace: SlottedTrace, cfg: RunConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "config": cfg.to_dict(),
        "trace": {
            "fingerprint": trace.fingerprint(),
            "num_slots": trace.num_slots,
            "num_files": trace.num_files,
            "slot_duration": trace.slot_duration,
        },
    }


def run_policy(trace: SlottedTrace, cfg: RunConfig) -> RunResult:
    """Run one policy over every slot of a trace. Deterministic."""
    if trace.num_slots == 0:
        raise ConfigError("trace has no slots")
    policy = make_policy(cfg)
    per_slot = []
    cache_history = []
    for t in range(trace.num_slots):
        per_slot.append(policy.step(trace, t))
        cache_history.append(policy.cache_contents.copy())
    return RunResult(per_slot, cache_history, _manifest(trace, cfg))


class AuditError(AssertionError):
    """A recorded account disagrees with its re-derivation."""


def _replay_lru(trace, capacity):
    """Reference LRU interpreter for the audit (list-based, independent
    of the policy implementation)."""
    order: list[int] = []  # least recent first
    for t in range(trace.num_slots):
        hits = cost = 0
        for f in trace.requests_at(t).tolist():
            if f in order:
                hits += 1
                order.remove(f)
            else:
                if len(order) == capacity:
                    order.pop(0)
                cost += 1
            order.append(f)
        yield hits, cost, sorted(order)


def _replay_lfuda(trace, capacity):
    """Reference LFUDA interpreter for the audit."""
    entries: dict[int, list] = {}  # id -> [priority, last_use]
    age = 0.0
    clock = 0
    for t in range(trace.num_slots):
        hits = cost = 0
        for f in trace.requests_at(t).tolist():
            clock += 1
            if f in entries:
                entries[f][0] += 1.0
                entries[f][1] = clock
                hits += 1
            else:
                if len(entries) == capacity:
                    victim = min(entries, key=lambda i: tuple(entries[i]))
                    age = entries.pop(victim)[0]
                entries[f] = [age + 1.0, clock]
                cost += 1
        yield hits, cost, sorted(entries)


def audit_run(trace: SlottedTrace, result: RunResult) -> None:
    """Re-derive every slot's (H, C, r) from raw data; raise on mismatch.

    Slot-level policies are audited from the recorded cache sets and the
    trace demands. Request-level policies mutate the cache inside the
    slot, so they are audited by an independent replay of the ordered
    event stream.
    """
    cfg = RunConfig.from_dict(result.manifest["config"])
    if result.manifest["trace"]["fingerprint"] != trace.fingerprint():
        raise AuditError("result was produced on a different trace")
    if len(result.per_slot) != trace.num_slots:
        raise AuditError("per-slot record count does not match the trace")

    if cfg.policy in ("lru", "lfuda"):
        replay = _replay_lru if cfg.policy == "lru" else _replay_lfuda
        derived = replay(trace, cfg.capacity)
        for t, (hits, cost, cached) in enumerate(derived):
            _check_slot(result, t, trace, hits, cost, cached, cfg)
    else:
        prev: set = set()
        for t in range(trace.num_slots):
            cached = set(result.cache_history[t].tolist())
            demands = trace.demands_at(t)
            hits = int(sum(demands[f] for f in cached))
            cost = len(cached - prev)
            _check_slot(result, t, trace, hits, cost, sorted(cached), cfg)
            prev = cached


def _check_slot(result, t, trace, hits, cost, cached, cfg):
    acc = result.per_slot[t]
    recorded_cache = result.cache_history[t].tolist()
    if recorded_cache != list(cached):
        raise AuditError(f"slot {t}: cache contents diverge")
    if len(cached) > cfg.capacity:
        raise AuditError(f"slot {t}: cache over capacity")
    if acc.hits != hits:
        raise AuditError(f"slot {t}: recorded hits {acc.hits}, derived {hits}")
    if acc.cost != cost:
        raise AuditError(f"slot {t}: recorded cost {acc.cost}, derived {cost}")
    if acc.requests != trace.total_requests_at(t):
        raise AuditError(f"slot {t}: recorded requests {acc.requests} "
                         f"!= trace {trace.total_requests_at(t)}")
    expected = cfg.lambda_r * hits - cfg.lambda_c * cost
    if acc.utility != expected:
        raise AuditError(f"slot {t}: recorded utility {acc.utility}, "
                         f"derived {expected}")


@dataclass(frozen=True)
class WindowPoint:
    """Aggregated hit ratio over [start, end); ratio is None when the
    window saw no requests; partial marks a trailing short window."""

    start: int
    end: int
    ratio: float | None
    partial: bool


def windowed_hit_ratio(result: RunResult, window: int) -> list[WindowPoint]:
    """Non-overlapping window averages of the hit ratio.

    A window longer than the run yields a single partial point.
    """
    T = len(result.per_slot)
    if window < 1:
        raise ConfigError("window must be >= 1")
    points = []
    for start in range(0, T, window):
        end = min(start + window, T)
        hits = sum(result.per_slot[t].hits for t in range(start, end))
        reqs = sum(result.per_slot[t].requests for t in range(start, end))
        points.append(WindowPoint(start, end,
                                  hits / reqs if reqs else None,
                                  end - start < window))
    return points


@dataclass
class ComparisonReport:
    """Several policies over one trace under identical conditions."""

    runs: dict[str, RunResult]
    margins: dict[str, dict[str, float | None]]
    manifest: dict


def _margin(a: float, b: float) -> float | None:
    return (a - b) / abs(b) if b != 0 else None


def compare(trace: SlottedTrace, configs: list[RunConfig]) -> ComparisonReport:
    """Run every config on the same trace and tabulate margins.

    All configs must share capacity and reward weights (like-for-like),
    and policy names must be unique. Results are independent of the
    config order.
    """
    if len(configs) < 2:
        raise ConfigError("compare needs at least two configs")
    head = configs[0]
    for cfg in configs[1:]:
        if (cfg.capacity, cfg.lambda_r, cfg.lambda_c) != (
                head.capacity, head.lambda_r, head.lambda_c):
            raise ConfigError("compare requires identical capacity and "
                              "lambda weights across configs")
    names = [cfg.policy for cfg in configs]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate policy in compare")

    runs = {cfg.policy: run_policy(trace, cfg) for cfg in configs}
    margins: dict[str, dict[str, float | None]] = {}
    for a in sorted(runs):
        for b in sorted(runs):
            if a == b:
                continue
            margins[f"{a}_vs_{b}"] = {
                "overall_hit_ratio": _margin(runs[a].overall_hit_ratio,
                                             runs[b].overall_hit_ratio),
                "cumulative_reward": _margin(runs[a].cumulative_reward,
                                             runs[b].cumulative_reward),
            }
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "shared": {"capacity": head.capacity, "lambda_r": head.lambda_r,
                   "lambda_c": head.lambda_c},
        "trace": _manifest(trace, head)["trace"],
    }
    return ComparisonReport(runs, margins, manifest)


# -- report serialization --------------------------------------------------

def _run_to_dict(result: RunResult) -> dict:
    return {
        "manifest": result.manifest,
        "summary": {
            "cumulative_reward": result.cumulative_reward,
            "overall_hit_ratio": result.overall_hit_ratio,
            "total_hits": result.total_hits,
            "total_cost": result.total_cost,
            "total_requests": result.total_requests,
        },
        "per_slot": {
            "hits": [acc.hits for acc in result.per_slot],
            "requests": [acc.requests for acc in result.per_slot],
            "cost": [acc.cost for acc in result.per_slot],
            "reward": [acc.utility for acc in result.per_slot],
        },
        "cache_history": [ids.tolist() for ids in result.cache_history],
    }


def _run_from_dict(data: dict) -> RunResult:
    slots = data["per_slot"]
    per_slot = [SlotAccount(h, n, c, r) for h, n, c, r in
                zip(slots["hits"], slots["requests"], slots["cost"],
                    slots["reward"])]
    history = [np.array(ids, dtype=np.int64) for ids in data["cache_history"]]
    return RunResult(per_slot, history, data["manifest"])


def report_to_dict(report) -> dict:
    """JSON-ready dict for a RunResult or ComparisonReport."""
    if isinstance(report, RunResult):
        return {"schema_version": SCHEMA_VERSION, "kind": "run",
                **_run_to_dict(report)}
    if isinstance(report, ComparisonReport):
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "comparison",
            "manifest": report.manifest,
            "runs": {name: _run_to_dict(r) for name, r in
                     sorted(report.runs.items())},
            "margins": report.margins,
        }
    raise TypeError(f"cannot export {type(report).__name__}")


def _csv_rows(name: str, result: RunResult, window: int):
    ratios = {}
    for point in windowed_hit_ratio(result, window):
        for t in range(point.start, point.end):
            ratios[t] = point.ratio
    cum = 0.0
    for t, acc in enumerate(result.per_slot):
        cum += acc.utility
        yield [name, t, acc.hits, acc.cost, repr(acc.utility), repr(cum),
               "" if ratios[t] is None else repr(ratios[t])]


def export_report(report, fmt: str, path) -> None:
    """Write a report as version-tagged JSON or a flat per-slot CSV."""
    path = Path(path)
    if fmt == "json":
        payload = report_to_dict(report)
        with open(path, "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
        return
    if fmt != "csv":
        raise ConfigError(f"unknown report format {fmt!r}")
    if isinstance(report, RunResult):
        named = {report.manifest["config"]["policy"]: report}
    else:
        named = report.runs
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "slot", "hits", "cost", "reward",
                         "cum_reward", "window_hit_ratio"])
        for name in sorted(named):
            result = named[name]
            window = result.manifest["config"]["window"]
            writer.writerows(_csv_rows(name, result, window))


def load_report(path):
    """Read a JSON report back into RunResult / ComparisonReport."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"report file not found: {path}")
    with open(path) as fh:
        data = json.load(fh)
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported report schema "
                          f"{data.get('schema_version')!r}")
    if data["kind"] == "run":
        return _run_from_dict(data)
    if data["kind"] == "comparison":
        return ComparisonReport(
            {name: _run_from_dict(r) for name, r in data["runs"].items()},
            data["margins"], data["manifest"])
    raise ConfigError(f"unknown report kind {data['kind']!r}")
