"""Cache bookkeeping: ranking, replacement, and slot accounting.

All slot-level policies share the same primitives. A slot is accounted
as: hits H_t = total demand of cached files, replacement cost C_t =
number of files newly inserted this slot, utility lambda_r * H_t -
lambda_c * C_t.

Ranking tie-break (used everywhere a "best" or "worst" file is picked):
higher value first; on equal value the earlier-released file wins, then
the lower original id. Dense trace ids are already ordered that way, so
a stable descending sort on values implements the rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trace import ConfigError


def rank_files(values) -> np.ndarray:
    """File ids best-first under the global tie-break rule."""
    values = np.asarray(values, dtype=np.float64)
    return np.argsort(-values, kind="stable")


def select_top(values, k: int) -> np.ndarray:
    """Ids of the k most valuable files (fewer when the catalog is small)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return rank_files(values)[:k]


def slot_hits(cached, demands) -> int:
    """Total demand that the cached set serves this slot."""
    cached = np.asarray(cached, dtype=np.int64)
    if cached.size == 0:
        return 0
    return int(np.asarray(demands)[cached].sum())


def replacement_cost(new_cached, old_cached) -> int:
    """Number of files in the new set that were not already cached."""
    return int(np.setdiff1d(new_cached, old_cached, assume_unique=True).size)


def utility(hits: float, cost: float, lambda_r: float = 1.0,
            lambda_c: float = 1.0) -> float:
    return lambda_r * hits - lambda_c * cost


@dataclass(frozen=True)
class SlotAccount:
    """Accounting of one slot under one policy."""

    hits: int
    requests: int
    cost: int
    utility: float

    @property
    def instant_hit_ratio(self) -> float:
        """Hits over requests within the slot; 0 for an empty slot."""
        return self.hits / self.requests if self.requests else 0.0


def account_slot(cached, prev_cached, demands, lambda_r: float,
                 lambda_c: float) -> SlotAccount:
    hits = slot_hits(cached, demands)
    cost = replacement_cost(cached, prev_cached)
    requests = int(np.asarray(demands).sum())
    return SlotAccount(hits, requests, cost, utility(hits, cost, lambda_r, lambda_c))


class Cache:
    """A capacity-bounded set of file ids with replacement accounting.

    Contents are kept as a sorted id array. replace() swaps in a whole
    new set and returns how many insertions that took.
    """

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ConfigError("cache capacity must be positive")
        self.capacity = int(capacity)
        self._ids = np.empty(0, dtype=np.int64)

    @property
    def contents(self) -> np.ndarray:
        return self._ids

    def __len__(self):
        return len(self._ids)

    def __contains__(self, f):
        i = np.searchsorted(self._ids, f)
        return i < len(self._ids) and self._ids[i] == f

    def replace(self, new_ids) -> int:
        new_ids = np.unique(np.asarray(new_ids, dtype=np.int64))
        if new_ids.size and new_ids[0] < 0:
            raise ValueError("negative file id")
        if new_ids.size > self.capacity:
            raise ValueError(
                f"{new_ids.size} files exceed capacity {self.capacity}")
        cost = replacement_cost(new_ids, self._ids)
        self._ids = new_ids
        return cost


class InvalidReplacementError(ValueError):
    """Eviction of an uncached file, duplicate insertion, or overflow."""


def apply_replacement(cached, evict, insert, capacity: int) -> np.ndarray:
    """Cache contents after evicting `evict` and inserting `insert`.

    Evicted files must currently be cached, inserted files must not be,
    and the result must fit the capacity; violations raise
    InvalidReplacementError naming the offending file.
    """
    if capacity <= 0:
        raise ConfigError("cache capacity must be positive")
    original = set(int(f) for f in np.asarray(cached, dtype=np.int64))
    cached_set = set(original)
    for f in evict:
        f = int(f)
        if f not in cached_set:
            raise InvalidReplacementError(f"cannot evict uncached file {f}")
        cached_set.remove(f)
    for f in insert:
        f = int(f)
        if f in original or f in cached_set:
            raise InvalidReplacementError(f"file {f} is already cached")
        cached_set.add(f)
    if len(cached_set) > capacity:
        raise InvalidReplacementError(
            f"replacement yields {len(cached_set)} files over capacity {capacity}")
    return np.fromiter(sorted(cached_set), dtype=np.int64, count=len(cached_set))
