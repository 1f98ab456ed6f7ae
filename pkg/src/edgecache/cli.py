"""Command-line front door.

Subcommands: ingest (timestamped CSV -> slotted trace), synth (generate
a trace), run (one policy -> report), compare (several policies -> one
report), report (re-render summaries from a prior JSON export).

Exit codes: 0 success, 2 usage, 3 bad configuration, 4 missing file,
5 bad input data. Errors print one line: `error: <kind>: <message>`.
Set EDGECACHE_LOG=DEBUG|INFO|WARNING to adjust logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields

from .harness import (POLICY_NAMES, RunConfig, compare, export_report,
                      load_report, report_to_dict, run_policy, windowed_hit_ratio)
from .trace import (ConfigError, SynthConfig, TraceError, generate_synthetic,
                    ingest_events, load_bundled_demo, load_trace,
                    read_ratings_csv, read_release_csv, save_trace)

log = logging.getLogger("edgecache.cli")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_BADDATA = 5


def _add_run_flags(parser, with_policy: bool):
    parser.add_argument("--trace", help="trace .npz (default: bundled demo)")
    parser.add_argument("--config", help="JSON config file; flags override it")
    if with_policy:
        parser.add_argument("--policy", choices=POLICY_NAMES,
                            help="replacement policy (default most_popular)")
    else:
        parser.add_argument("--policies",
                            help="comma-separated policy list "
                                 "(default: all six)")
    parser.add_argument("-M", "--capacity", type=int,
                        help="cache capacity in files (default 10)")
    parser.add_argument("--lambda", dest="lam", type=float, metavar="LAMBDA",
                        help="single cost weight: reward = hits - LAMBDA*cost")
    parser.add_argument("--lambda-r", type=float, help="hit weight (default 1)")
    parser.add_argument("--lambda-c", type=float, help="cost weight (default 1)")
    parser.add_argument("--gamma", type=float, help="discount (default 0.9)")
    parser.add_argument("--alpha0", type=float,
                        help="base learning rate (default 0.1)")
    parser.add_argument("--beta0", type=float,
                        help="learning-rate decay per slot of sample age "
                             "(default 0.99)")
    parser.add_argument("-K", "--rollouts", type=int,
                        help="imagined rollouts per slot (default 5)")
    parser.add_argument("--delta-t", type=int,
                        help="rollout window length in slots (default 30)")
    parser.add_argument("--age-cap", type=int,
                        help="oldest distinct prediction age group (default 60)")
    parser.add_argument("--fit-steps", type=int,
                        help="model fit iterations per slot (default 5)")
    parser.add_argument("--seed", type=int, help="run seed (default 0)")
    parser.add_argument("--window", type=int,
                        help="hit-ratio window in slots (default 50)")
    parser.add_argument("--out", required=True, help="report output path")
    parser.add_argument("--format", choices=("json", "csv"), default="json",
                        help="report format (default json)")


_FLAG_TO_KEY = {
    "capacity": "capacity", "lambda_r": "lambda_r", "lambda_c": "lambda_c",
    "gamma": "gamma", "alpha0": "alpha0", "beta0": "beta0",
    "rollouts": "rollouts", "delta_t": "delta_t", "age_cap": "age_cap",
    "fit_steps": "fit_steps", "seed": "seed", "window": "window",
    "policy": "policy",
}


def _build_config(args, policy: str | None = None) -> RunConfig:
    """Defaults, then config file, then flags; every override is logged."""
    data = {"policy": "most_popular", "capacity": 10}
    if args.config:
        if not os.path.exists(args.config):
            raise FileNotFoundError(f"config file not found: {args.config}")
        with open(args.config) as fh:
            try:
                loaded = json.load(fh)
            except json.JSONDecodeError as err:
                raise ConfigError(f"config is not valid JSON: {err}") from err
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        data.update(loaded)
    for flag, key in _FLAG_TO_KEY.items():
        value = getattr(args, flag, None)
        if value is not None:
            if key in data and data[key] != value:
                log.info("flag --%s=%r overrides config value %r",
                         flag.replace("_", "-"), value, data.get(key))
            data[key] = value
    if args.lam is not None:
        log.info("--lambda %s sets lambda_r=1, lambda_c=%s", args.lam, args.lam)
        data["lambda_r"] = 1.0
        data["lambda_c"] = args.lam
    if policy is not None:
        data["policy"] = policy
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return RunConfig.from_dict(data)


def _load_run_trace(args):
    if args.trace:
        return load_trace(args.trace)
    log.info("no --trace given; using the bundled demo trace")
    return load_bundled_demo()


def _cmd_ingest(args) -> int:
    if not os.path.exists(args.events):
        raise FileNotFoundError(f"events file not found: {args.events}")
    events = read_ratings_csv(args.events, delimiter=args.delimiter)
    release = None
    if args.release:
        if not os.path.exists(args.release):
            raise FileNotFoundError(f"release file not found: {args.release}")
        release = read_release_csv(args.release, delimiter=args.delimiter)
    trace = ingest_events(events, args.slot_duration, origin=args.origin,
                          release_slots=release)
    save_trace(trace, args.out)
    print(f"wrote {args.out}: {trace.num_slots} slots, {trace.num_files} "
          f"files, {trace.total_events} requests")
    return EXIT_OK


def _cmd_synth(args) -> int:
    config = SynthConfig(
        num_slots=args.slots, arrival_rate=args.arrival_rate,
        volume_shape=args.volume_shape, volume_scale=args.volume_scale,
        lifetime_mean=args.lifetime_mean, lifetime_sigma=args.lifetime_sigma,
        noise_level=args.noise, seed=args.seed,
        initial_files=args.initial_files, decay=args.decay,
        half_life_fraction=args.half_life_fraction,
        power_exponent=args.power_exponent)
    trace = generate_synthetic(config)
    save_trace(trace, args.out)
    print(f"wrote {args.out}: {trace.num_slots} slots, {trace.num_files} "
          f"files, {trace.total_events} requests")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = _build_config(args, policy=args.policy)
    trace = _load_run_trace(args)
    result = run_policy(trace, cfg)
    export_report(result, args.format, args.out)
    print(f"{cfg.policy}: hit_ratio={result.overall_hit_ratio:.4f} "
          f"cum_reward={result.cumulative_reward:.1f} -> {args.out}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    names = (args.policies.split(",") if args.policies
             else list(POLICY_NAMES))
    names = [n.strip() for n in names if n.strip()]
    configs = [_build_config(args, policy=name) for name in names]
    trace = _load_run_trace(args)
    report = compare(trace, configs)
    export_report(report, args.format, args.out)
    for name in sorted(report.runs):
        run = report.runs[name]
        print(f"{name}: hit_ratio={run.overall_hit_ratio:.4f} "
              f"cum_reward={run.cumulative_reward:.1f}")
    print(f"-> {args.out}")
    return EXIT_OK


def _cmd_report(args) -> int:
    report = load_report(getattr(args, "in"))
    if args.out:
        export_report(report, "csv", args.out)
    data = report_to_dict(report)
    if data["kind"] == "run":
        runs = {data["manifest"]["config"]["policy"]: data}
    else:
        runs = data["runs"]
    print("policy,overall_hit_ratio,cumulative_reward")
    for name in sorted(runs):
        summary = runs[name]["summary"]
        print(f"{name},{summary['overall_hit_ratio']:.6f},"
              f"{summary['cumulative_reward']:.3f}")
    if data["kind"] == "comparison":
        for pair in sorted(data["margins"]):
            reward_margin = data["margins"][pair]["cumulative_reward"]
            shown = "n/a" if reward_margin is None else f"{reward_margin:+.2%}"
            print(f"margin {pair}: reward {shown}")
    if args.out:
        print(f"-> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgecache",
        description="Trace-driven edge cache simulation: demand prediction "
                    "plus learned replacement, with classical baselines.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="slot a timestamped request CSV")
    p.add_argument("--events", required=True,
                   help="CSV of user_id,file_id,rating,timestamp rows")
    p.add_argument("--slot-duration", type=int, required=True,
                   help="seconds per slot (86400 for daily slots)")
    p.add_argument("--origin", type=int,
                   help="timestamp of slot 0 (default: earliest event)")
    p.add_argument("--release",
                   help="optional CSV of file_id,release_slot overrides")
    p.add_argument("--delimiter", default=",", help="CSV delimiter")
    p.add_argument("--out", required=True, help="output trace .npz")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic trace")
    p.add_argument("--slots", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--arrival-rate", type=float, default=2.0,
                   help="mean new files per slot (default 2.0)")
    p.add_argument("--volume-shape", type=float, default=1.8,
                   help="Pareto shape of per-file total demand (default 1.8)")
    p.add_argument("--volume-scale", type=float, default=40.0,
                   help="Pareto scale of per-file total demand (default 40)")
    p.add_argument("--lifetime-mean", type=float, default=30.0,
                   help="median popularity lifetime in slots (default 30)")
    p.add_argument("--lifetime-sigma", type=float, default=0.6,
                   help="lognormal sigma of lifetimes (default 0.6)")
    p.add_argument("--noise", type=float, default=0.4,
                   help="demand noise level (default 0.4)")
    p.add_argument("--initial-files", type=int, default=0,
                   help="extra files released at slot 0 (default 0)")
    p.add_argument("--decay", choices=("exp", "power"), default="exp",
                   help="popularity decay shape (default exp)")
    p.add_argument("--half-life-fraction", type=float, default=0.25,
                   help="half life as a fraction of lifetime (default 0.25)")
    p.add_argument("--power-exponent", type=float, default=1.5,
                   help="power-law decay exponent (default 1.5)")
    p.add_argument("--out", required=True, help="output trace .npz")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("run", help="run one policy over a trace")
    _add_run_flags(p, with_policy=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="run several policies on one trace")
    _add_run_flags(p, with_policy=False)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("report", help="re-render summaries from a JSON report")
    p.add_argument("--in", required=True, help="prior JSON report")
    p.add_argument("--out", help="optional CSV re-render path")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("EDGECACHE_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: config: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as err:
        print(f"error: missing-file: {err}", file=sys.stderr)
        return EXIT_MISSING
    except TraceError as err:
        print(f"error: bad-data: {err}", file=sys.stderr)
        return EXIT_BADDATA


if __name__ == "__main__":
    sys.exit(main())
