"""Trace-driven simulation of content caching at a single edge node.

Demand forecasting by a grouped linear model over per-file request
histories, cache replacement by a small tabular Q-learner accelerated
with imagined rollouts, and classical baselines (LRU, LFUDA, predicted
most-popular, hindsight optimal) evaluated under identical per-slot
accounting.
"""

__version__ = "0.1.0"

from .trace import (
    ConfigError,
    RequestEvent,
    SlottedTrace,
    SynthConfig,
    TraceError,
    demo_config,
    demo_trace,
    generate_synthetic,
    ingest_events,
    load_bundled_demo,
    load_trace,
    read_ratings_csv,
    read_release_csv,
    save_trace,
)
from .cache import (
    Cache,
    InvalidReplacementError,
    SlotAccount,
    account_slot,
    apply_replacement,
    rank_files,
    replacement_cost,
    select_top,
    slot_hits,
    utility,
)
from .glm import GroupedLinearModel, project_monotone_nonneg
from .policies import (
    HindsightOptimalPolicy,
    LfudaPolicy,
    LruPolicy,
    MostPopularPolicy,
)
from .rlma import (
    QTable,
    RlAgent,
    RlConfig,
    TransitionSample,
    action_to_replacement,
    compute_state,
    learning_rate,
    select_action,
)
from .harness import (
    POLICY_NAMES,
    AuditError,
    ComparisonReport,
    RunConfig,
    RunResult,
    WindowPoint,
    audit_run,
    compare,
    export_report,
    load_report,
    make_policy,
    run_policy,
    windowed_hit_ratio,
)

__all__ = [
    "__version__",
    "AuditError",
    "Cache",
    "ComparisonReport",
    "ConfigError",
    "GroupedLinearModel",
    "HindsightOptimalPolicy",
    "InvalidReplacementError",
    "LfudaPolicy",
    "LruPolicy",
    "MostPopularPolicy",
    "POLICY_NAMES",
    "QTable",
    "RequestEvent",
    "RlAgent",
    "RlConfig",
    "RunConfig",
    "RunResult",
    "SlotAccount",
    "SlottedTrace",
    "SynthConfig",
    "TraceError",
    "TransitionSample",
    "WindowPoint",
    "account_slot",
    "action_to_replacement",
    "apply_replacement",
    "audit_run",
    "compare",
    "compute_state",
    "demo_config",
    "demo_trace",
    "export_report",
    "generate_synthetic",
    "ingest_events",
    "learning_rate",
    "load_bundled_demo",
    "load_report",
    "load_trace",
    "make_policy",
    "rank_files",
    "read_ratings_csv",
    "read_release_csv",
    "replacement_cost",
    "run_policy",
    "save_trace",
    "select_action",
    "select_top",
    "slot_hits",
    "utility",
    "windowed_hit_ratio",
]
