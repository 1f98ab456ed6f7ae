"""Baseline replacement policies.

Two families share one step-per-slot interface:

* request-level (LRU, LFUDA): react to each request in the slot's
  ordered stream; every miss-insertion costs 1.
* slot-level (predicted most-popular, hindsight optimal): pick a whole
  cache at the slot boundary, before the slot's demand is revealed
  (the hindsight oracle peeks at it, that is its definition).

Every step returns a SlotAccount; the cache_contents property exposes
the end-of-slot cache for auditing.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .cache import Cache, SlotAccount, account_slot, select_top, utility
from .glm import GroupedLinearModel
from .trace import ConfigError, SlottedTrace


class LruPolicy:
    """Evict the least recently requested file on a miss."""

    name = "lru"
    request_level = True

    def __init__(self, capacity: int, lambda_r: float = 1.0,
                 lambda_c: float = 1.0):
        if capacity <= 0:
            raise ConfigError("cache capacity must be positive")
        self.capacity = int(capacity)
        self.lambda_r = float(lambda_r)
        self.lambda_c = float(lambda_c)
        self._recency: OrderedDict[int, None] = OrderedDict()

    def process_slot(self, requests) -> SlotAccount:
        hits = 0
        insertions = 0
        recency = self._recency
        for f in requests:
            f = int(f)
            if f in recency:
                hits += 1
                recency.move_to_end(f)
            else:
                if len(recency) == self.capacity:
                    recency.popitem(last=False)
                recency[f] = None
                insertions += 1
        return SlotAccount(hits, len(requests), insertions,
                           utility(hits, insertions, self.lambda_r, self.lambda_c))

    def step(self, trace: SlottedTrace, t: int) -> SlotAccount:
        return self.process_slot(trace.requests_at(t))

    @property
    def cache_contents(self) -> np.ndarray:
        return np.fromiter(sorted(self._recency), dtype=np.int64,
                           count=len(self._recency))


class LfudaPolicy:
    """Frequency-based eviction with dynamic aging.

    Each cached file carries a priority: the global age L at insertion
    plus one per request since. A miss on a full cache evicts the
    minimum-priority file (ties: least recently requested) and raises L
    to the evicted priority, so long-stale popularity cannot hold the
    cache forever.
    """

    name = "lfuda"
    request_level = True

    def __init__(self, capacity: int, lambda_r: float = 1.0,
                 lambda_c: float = 1.0):
        if capacity <= 0:
            raise ConfigError("cache capacity must be positive")
        self.capacity = int(capacity)
        self.lambda_r = float(lambda_r)
        self.lambda_c = float(lambda_c)
        self._priority: dict[int, float] = {}
        self._last_use: dict[int, int] = {}
        self._age = 0.0
        self._clock = 0

    @property
    def cache_age(self) -> float:
        return self._age

    def process_slot(self, requests) -> SlotAccount:
        hits = 0
        insertions = 0
        for f in requests:
            f = int(f)
            self._clock += 1
            if f in self._priority:
                self._priority[f] += 1.0
                self._last_use[f] = self._clock
                hits += 1
                continue
            if len(self._priority) == self.capacity:
                victim = min(self._priority,
                             key=lambda i: (self._priority[i], self._last_use[i]))
                self._age = self._priority.pop(victim)
                del self._last_use[victim]
            self._priority[f] = self._age + 1.0
            self._last_use[f] = self._clock
            insertions += 1
        return SlotAccount(hits, len(requests), insertions,
                           utility(hits, insertions, self.lambda_r, self.lambda_c))

    def step(self, trace: SlottedTrace, t: int) -> SlotAccount:
        return self.process_slot(trace.requests_at(t))

    @property
    def cache_contents(self) -> np.ndarray:
        return np.fromiter(sorted(self._priority), dtype=np.int64,
                           count=len(self._priority))


class MostPopularPolicy:
    """Cache the predicted top-capacity files each slot.

    Runs its own demand model: predict, swap the cache to the predicted
    top set, observe the slot, then update and refit the model. While
    the library is smaller than the capacity the whole library is
    cached.
    """

    name = "most_popular"
    request_level = False

    def __init__(self, capacity: int, model: GroupedLinearModel,
                 lambda_r: float = 1.0, lambda_c: float = 1.0,
                 fit_steps: int = 5):
        self.cache = Cache(capacity)
        self.model = model
        self.lambda_r = float(lambda_r)
        self.lambda_c = float(lambda_c)
        self.fit_steps = int(fit_steps)

    def step(self, trace: SlottedTrace, t: int) -> SlotAccount:
        predictions = self.model.predict_all(trace, t)
        target = select_top(predictions, self.cache.capacity)
        prev = self.cache.contents
        self.cache.replace(target)
        demands = trace.demands_at(t)
        account = account_slot(self.cache.contents, prev, demands,
                               self.lambda_r, self.lambda_c)
        self.model.observe_slot(trace, t)
        self.model.fit_step(self.fit_steps)
        return account

    @property
    def cache_contents(self) -> np.ndarray:
        return self.cache.contents


class HindsightOptimalPolicy:
    """Oracle that caches each slot's true top files (upper bound)."""

    name = "optimal"
    request_level = False

    def __init__(self, capacity: int, lambda_r: float = 1.0,
                 lambda_c: float = 1.0):
        self.cache = Cache(capacity)
        self.lambda_r = float(lambda_r)
        self.lambda_c = float(lambda_c)

    def step(self, trace: SlottedTrace, t: int) -> SlotAccount:
        demands = trace.demands_at(t)
        target = select_top(demands, self.cache.capacity)
        prev = self.cache.contents
        self.cache.replace(target)
        return account_slot(self.cache.contents, prev, demands,
                            self.lambda_r, self.lambda_c)

    @property
    def cache_contents(self) -> np.ndarray:
        return self.cache.contents
