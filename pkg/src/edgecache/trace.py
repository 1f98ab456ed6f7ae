"""Request traces sliced into discrete time slots.

A trace is the ground truth every policy runs against: per-slot request
counts for a growing content library, plus the ordered request stream
inside each slot (request-level policies such as LRU consume events one
by one, slot-level policies consume the aggregated counts).

File ids are remapped to dense integers at construction, ordered by
(release slot, original id). This gives the useful prefix property that
the files released by slot t are exactly the dense ids [0, F_t).
"""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger("edgecache.trace")

TRACE_FORMAT_VERSION = 1


class TraceError(ValueError):
    """Rejected trace input (empty event list, bad timestamps, ...)."""


class ConfigError(ValueError):
    """Invalid configuration value."""


@dataclass(frozen=True)
class RequestEvent:
    """One content request: a file id and a timestamp in seconds."""

    file_id: int
    timestamp: int


class SlottedTrace:
    """Immutable per-slot request counts for a dynamically growing library.

    Attributes:
        slot_duration: seconds per slot (1 for synthetic traces).
        num_slots: number of slots T; valid slot indices are [0, T).
        release_slot: int array, release_slot[f] = slot in which dense
            file f entered the library (non-decreasing in f).
        original_ids: int array mapping dense file id -> original id.
        slot_requests: list of int arrays, the ordered request stream of
            each slot (dense file ids, within-slot order preserved).
    """

    def __init__(self, slot_duration, num_slots, release_slot, original_ids,
                 slot_requests):
        self.slot_duration = int(slot_duration)
        self.num_slots = int(num_slots)
        self.release_slot = np.asarray(release_slot, dtype=np.int64)
        self.original_ids = np.asarray(original_ids, dtype=np.int64)
        self.slot_requests = [np.asarray(s, dtype=np.int64) for s in slot_requests]
        self._validate()
        # cumulative library size per slot: F_t = #{f : release_slot[f] <= t}
        self._library_size = np.searchsorted(
            self.release_slot, np.arange(self.num_slots), side="right")
        self._demand_matrix = None

    def _validate(self):
        if self.slot_duration <= 0:
            raise TraceError("slot_duration must be positive")
        if self.num_slots <= 0:
            raise TraceError("num_slots must be positive")
        if len(self.slot_requests) != self.num_slots:
            raise TraceError("slot_requests length must equal num_slots")
        if len(self.release_slot) != len(self.original_ids):
            raise TraceError("release_slot and original_ids must align")
        if np.any(np.diff(self.release_slot) < 0):
            raise TraceError("dense ids must be ordered by release slot")
        for t, reqs in enumerate(self.slot_requests):
            if reqs.size == 0:
                continue
            bad = reqs[(reqs < 0) | (reqs >= self.num_files)]
            if bad.size:
                raise TraceError(f"slot {t} requests unknown file {bad[0]}")
            early = reqs[self.release_slot[reqs] > t]
            if early.size:
                raise TraceError(
                    f"file {early[0]} requested at slot {t} before its release")

    @property
    def num_files(self) -> int:
        """Total library size F_{T-1}."""
        return len(self.release_slot)

    @property
    def total_events(self) -> int:
        return int(sum(len(s) for s in self.slot_requests))

    def library_size_at(self, t: int) -> int:
        self._check_slot(t)
        return int(self._library_size[t])

    def _check_slot(self, t):
        if not 0 <= t < self.num_slots:
            raise IndexError(f"slot {t} out of range [0, {self.num_slots})")

    def requests_at(self, t: int) -> np.ndarray:
        """Ordered request stream of slot t (dense file ids)."""
        self._check_slot(t)
        return self.slot_requests[t]

    def demands_at(self, t: int) -> np.ndarray:
        """Request counts d_t over the files released by slot t.

        Entry f is the number of requests for dense file f in slot t;
        files released later than t are not part of the vector.
        """
        self._check_slot(t)
        size = self.library_size_at(t)
        return np.bincount(self.slot_requests[t], minlength=size)[:size]

    def total_requests_at(self, t: int) -> int:
        self._check_slot(t)
        return int(len(self.slot_requests[t]))

    def demand_matrix(self) -> np.ndarray:
        """Dense (num_slots x num_files) count matrix, built lazily."""
        if self._demand_matrix is None:
            mat = np.zeros((self.num_slots, self.num_files), dtype=np.int64)
            for t, reqs in enumerate(self.slot_requests):
                if reqs.size:
                    np.add.at(mat[t], reqs, 1)
            self._demand_matrix = mat
        return self._demand_matrix

    def demand_history(self, f: int, t: int, cap: int | None = None) -> np.ndarray:
        """Demands of file f before slot t, most recent first.

        Returns (d_{t-1,f}, d_{t-2,f}, ..., d_{tau_f,f}), truncated to the
        most recent `cap` slots when a cap is given. Slot t may equal
        num_slots (history for a one-step-ahead prediction).
        """
        tau = int(self.release_slot[f])
        if tau >= t:
            raise TraceError(f"file {f} has no history before slot {t}")
        lo = tau if cap is None else max(tau, t - cap)
        col = self.demand_matrix()[lo:t, f]
        return col[::-1].astype(np.float64)

    def fingerprint(self) -> str:
        """Content hash covering everything a policy run can observe."""
        h = hashlib.sha256()
        h.update(f"v{TRACE_FORMAT_VERSION};{self.slot_duration};{self.num_slots};".encode())
        h.update(self.release_slot.tobytes())
        h.update(self.original_ids.tobytes())
        for reqs in self.slot_requests:
            h.update(reqs.tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, SlottedTrace):
            return NotImplemented
        return (self.slot_duration == other.slot_duration
                and self.num_slots == other.num_slots
                and np.array_equal(self.release_slot, other.release_slot)
                and np.array_equal(self.original_ids, other.original_ids)
                and all(np.array_equal(a, b) for a, b in
                        zip(self.slot_requests, other.slot_requests)))


def ingest_events(events, slot_duration: int, origin: int | None = None,
                  release_slots: dict | None = None) -> SlottedTrace:
    """Slot a sequence of timestamped requests.

    An event is a RequestEvent or a (file_id, timestamp) pair. The slot of
    an event is floor((timestamp - origin) / slot_duration); origin
    defaults to the earliest timestamp. Within-slot order follows
    timestamps, ties broken by input order.

    release_slots optionally overrides the release slot of selected
    original file ids (default: first observed request slot). An override
    later than a file's first request is rejected; override-only ids are
    admitted to the library with zero demand.
    """
    if slot_duration <= 0:
        raise TraceError("slot_duration must be positive")
    pairs = [(e.file_id, e.timestamp) if isinstance(e, RequestEvent) else (e[0], e[1])
             for e in events]
    if not pairs:
        raise TraceError("event list is empty")
    ids = np.array([p[0] for p in pairs], dtype=np.int64)
    ts = np.array([p[1] for p in pairs], dtype=np.int64)
    if np.any(ids < 0):
        bad = int(ids[ids < 0][0])
        raise TraceError(f"negative file id {bad}")
    if origin is None:
        origin = int(ts.min())
    below = np.nonzero(ts < origin)[0]
    if below.size:
        i = int(below[0])
        raise TraceError(
            f"event (file {int(ids[i])}, ts {int(ts[i])}) precedes origin {origin}")

    slots = (ts - origin) // slot_duration
    num_slots = int(slots.max()) + 1
    order = np.argsort(ts, kind="stable")
    ids, slots = ids[order], slots[order]

    # first observed request slot per original id
    first_slot: dict[int, int] = {}
    for fid, t in zip(ids.tolist(), slots.tolist()):
        if fid not in first_slot:
            first_slot[fid] = t

    release: dict[int, int] = dict(first_slot)
    if release_slots:
        for fid, tau in release_slots.items():
            fid, tau = int(fid), int(tau)
            if tau < 0 or tau >= num_slots:
                raise TraceError(f"release slot {tau} for file {fid} out of range")
            if fid in first_slot and tau > first_slot[fid]:
                raise TraceError(
                    f"file {fid} first requested at slot {first_slot[fid]} "
                    f"but release metadata says slot {tau}")
            release[fid] = tau

    orig_sorted = sorted(release, key=lambda fid: (release[fid], fid))
    dense = {fid: i for i, fid in enumerate(orig_sorted)}
    release_arr = np.array([release[fid] for fid in orig_sorted], dtype=np.int64)
    original = np.array(orig_sorted, dtype=np.int64)

    dense_ids = np.array([dense[fid] for fid in ids.tolist()], dtype=np.int64)
    slot_requests = [dense_ids[slots == t] for t in range(num_slots)]
    return SlottedTrace(slot_duration, num_slots, release_arr, original, slot_requests)


def read_ratings_csv(path, delimiter: str = ",") -> list[RequestEvent]:
    """Read a ratings log (user_id, file_id, rating, timestamp) as requests.

    Each row is one request; user and rating columns are ignored. A header
    row is skipped when the timestamp column is not numeric.
    """
    events = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        for row in reader:
            if len(row) < 4:
                raise TraceError(f"{path}: expected 4 columns, got {len(row)}")
            try:
                fid, ts = int(row[1]), int(float(row[3]))
            except ValueError:
                if not events:
                    continue  # header row
                raise TraceError(f"{path}: malformed row {row!r}")
            events.append(RequestEvent(fid, ts))
    if not events:
        raise TraceError(f"{path}: no request rows")
    return events


def read_release_csv(path, delimiter: str = ",") -> dict[int, int]:
    """Read a (file_id, release_slot) table for release overrides."""
    table = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh, delimiter=delimiter):
            if len(row) < 2:
                raise TraceError(f"{path}: expected 2 columns, got {len(row)}")
            try:
                table[int(row[0])] = int(row[1])
            except ValueError:
                if table:
                    raise TraceError(f"{path}: malformed row {row!r}")
                continue
    return table


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic non-stationary demand generator.

    New files arrive per slot at a Poisson rate. Each file draws a total
    demand volume from a heavy-tailed Pareto law and a popularity
    lifetime; its per-slot demand is a Poisson count whose mean follows a
    decaying weight over the file's age, perturbed by mean-preserving
    lognormal noise. Identical configs (seed included) generate identical
    traces.
    """

    num_slots: int
    arrival_rate: float
    volume_shape: float = 1.8
    volume_scale: float = 40.0
    lifetime_mean: float = 30.0
    lifetime_sigma: float = 0.6
    noise_level: float = 0.4
    seed: int = 0
    initial_files: int = 0
    decay: str = "exp"              # "exp" or "power"
    half_life_fraction: float = 0.25
    power_exponent: float = 1.5

    def validate(self):
        if self.num_slots <= 0:
            raise ConfigError("num_slots must be positive")
        if self.arrival_rate < 0:
            raise ConfigError("arrival_rate must be >= 0")
        for name in ("volume_shape", "volume_scale", "lifetime_mean",
                     "lifetime_sigma", "half_life_fraction", "power_exponent"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be strictly positive")
        if self.noise_level < 0:
            raise ConfigError("noise_level must be >= 0")
        if self.initial_files < 0:
            raise ConfigError("initial_files must be >= 0")
        if self.decay not in ("exp", "power"):
            raise ConfigError(f"unknown decay shape {self.decay!r}")


def generate_synthetic(config: SynthConfig) -> SlottedTrace:
    """Generate a demand trace per SynthConfig; pure function of the config."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    T = config.num_slots

    release = []
    per_file_counts = []  # per file: counts over ages 0..horizon-1
    for t in range(T):
        n_new = int(rng.poisson(config.arrival_rate))
        if t == 0:
            n_new += config.initial_files
        for _ in range(n_new):
            volume = (rng.pareto(config.volume_shape) + 1.0) * config.volume_scale
            lifetime = max(2, int(round(rng.lognormal(
                np.log(config.lifetime_mean), config.lifetime_sigma))))
            ages = np.arange(lifetime + 1, dtype=np.float64)
            if config.decay == "exp":
                half_life = max(config.half_life_fraction * lifetime, 0.5)
                weights = np.exp2(-ages / half_life)
            else:
                weights = (ages + 1.0) ** (-config.power_exponent)
            means = volume * weights / weights.sum()
            horizon = min(lifetime + 1, T - t)
            rates = means[:horizon]
            if config.noise_level > 0:
                sigma = config.noise_level
                rates = rates * rng.lognormal(-0.5 * sigma * sigma, sigma, size=horizon)
            counts = rng.poisson(rates)
            release.append(t)
            per_file_counts.append(counts)

    release_arr = np.array(release, dtype=np.int64)
    original = np.arange(len(release), dtype=np.int64)
    slot_ids = [[] for _ in range(T)]
    slot_counts = [[] for _ in range(T)]
    for f, (tau, counts) in enumerate(zip(release, per_file_counts)):
        for age, c in enumerate(counts):
            if c > 0:
                slot_ids[tau + age].append(f)
                slot_counts[tau + age].append(int(c))
    slot_requests = []
    for t in range(T):
        if slot_ids[t]:
            reqs = np.repeat(np.array(slot_ids[t], dtype=np.int64),
                             np.array(slot_counts[t], dtype=np.int64))
            rng.shuffle(reqs)
        else:
            reqs = np.empty(0, dtype=np.int64)
        slot_requests.append(reqs)
    return SlottedTrace(1, T, release_arr, original, slot_requests)


def save_trace(trace: SlottedTrace, path) -> None:
    """Write a trace as a columnar .npz file.

    Columns req_slot/req_file/req_count hold the within-slot request
    stream run-length encoded in order (consecutive repeats of a file
    collapse into one row), so the ordered stream round-trips exactly.
    release_slot and original_id form the release table.
    """
    rs, rf, rc = [], [], []
    for t, reqs in enumerate(trace.slot_requests):
        if reqs.size == 0:
            continue
        breaks = np.nonzero(np.diff(reqs))[0] + 1
        starts = np.concatenate(([0], breaks))
        ends = np.concatenate((breaks, [len(reqs)]))
        rs.append(np.full(len(starts), t, dtype=np.int64))
        rf.append(reqs[starts])
        rc.append(ends - starts)
    cat = (lambda xs: np.concatenate(xs) if xs else np.empty(0, dtype=np.int64))
    np.savez_compressed(
        path,
        version=np.int64(TRACE_FORMAT_VERSION),
        slot_duration=np.int64(trace.slot_duration),
        num_slots=np.int64(trace.num_slots),
        req_slot=cat(rs), req_file=cat(rf), req_count=cat(rc),
        release_slot=trace.release_slot,
        original_id=trace.original_ids,
    )


def load_trace(path) -> SlottedTrace:
    """Read a trace written by save_trace."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"trace file not found: {path}")
    with np.load(p) as data:
        if int(data["version"]) != TRACE_FORMAT_VERSION:
            raise TraceError(f"unsupported trace format version {int(data['version'])}")
        num_slots = int(data["num_slots"])
        slot_requests = [[] for _ in range(num_slots)]
        for t, f, c in zip(data["req_slot"], data["req_file"], data["req_count"]):
            slot_requests[int(t)].append(np.full(int(c), f, dtype=np.int64))
        slot_requests = [
            np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
            for parts in slot_requests]
        return SlottedTrace(int(data["slot_duration"]), num_slots,
                            data["release_slot"], data["original_id"],
                            slot_requests)


# Frozen generator config behind the bundled demo trace. The committed
# data file must stay identical to generate_synthetic(demo_config(seed)).
DEMO_SEED = 7
_DEMO_BASE = dict(
    num_slots=1000, arrival_rate=6.0, volume_shape=1.5, volume_scale=8.0,
    lifetime_mean=30.0, lifetime_sigma=0.6, noise_level=0.6,
    initial_files=4, decay="exp", half_life_fraction=0.25,
)


def demo_config(seed: int = DEMO_SEED) -> SynthConfig:
    """Config of the bundled demo trace (seed varies, dynamics fixed)."""
    return SynthConfig(seed=seed, **_DEMO_BASE)


def demo_trace(seed: int = DEMO_SEED) -> SlottedTrace:
    """Regenerate the bundled non-stationary demo trace."""
    return generate_synthetic(demo_config(seed))


def load_bundled_demo() -> SlottedTrace:
    """Load the demo trace shipped with the package."""
    bundled = Path(__file__).parent / "data" / "demo.npz"
    return load_trace(bundled)
