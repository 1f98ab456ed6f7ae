"""Q-learning cache replacement accelerated by imagined experience.

The agent never looks at file identities. Its state is how far the
current cache has drifted from the predicted top set (s = number of
predicted-top files not cached), its action is how many of the worst
cached files to swap for the best uncached ones (a <= s), and its
reward is the slot utility. That keeps the Q table O(capacity^2) no
matter how large the library grows.

Acceleration: after every real slot, the agent replays the recent
window of history from the real cache snapshot at the window start,
taking uniformly random actions against the stored predictions and the
now-known demands. Each replayed transition updates the Q table with a
learning rate that decays exponentially in the sample's age, so stale
synthetic experience cannot dominate fresh real experience.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from .cache import (Cache, SlotAccount, apply_replacement, rank_files,
                    slot_hits, utility)
from .glm import GroupedLinearModel
from .trace import ConfigError, SlottedTrace

log = logging.getLogger("edgecache.rlma")


@dataclass(frozen=True)
class RlConfig:
    """Agent knobs; everything lands in the run manifest."""

    capacity: int
    gamma: float = 0.9
    alpha0: float = 0.1
    beta0: float = 0.99
    delta_t: int = 30
    rollouts: int = 5
    lambda_r: float = 1.0
    lambda_c: float = 1.0
    seed: int = 0
    q_init: float = 0.0
    action_rule: str = "argmax"
    full_replay: bool = False

    def validate(self):
        if self.capacity < 1:
            raise ConfigError("capacity must be >= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if not 0.0 < self.alpha0 < 1.0:
            raise ConfigError("alpha0 must lie in (0, 1)")
        if not 0.0 < self.beta0 < 1.0:
            raise ConfigError("beta0 must lie in (0, 1)")
        if self.delta_t < 1:
            raise ConfigError("delta_t must be >= 1")
        if self.rollouts < 0:
            raise ConfigError("rollouts must be >= 0")
        if self.lambda_r < 0 or self.lambda_c < 0:
            raise ConfigError("reward weights must be >= 0")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.action_rule not in ("argmax", "argmin"):
            raise ConfigError(f"unknown action rule {self.action_rule!r}")


@dataclass(frozen=True)
class TransitionSample:
    """One transition: state, action, reward, next state, birth slot."""

    s: int
    a: int
    r: float
    s_next: int
    t: int


class QTable:
    """Triangular action values Q(s, a) for s in [0..M], a in [0..s]."""

    def __init__(self, capacity: int, q_init: float = 0.0):
        if capacity < 1:
            raise ConfigError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.values = np.full((capacity + 1, capacity + 1), float(q_init))

    def _check(self, s: int, a: int = 0):
        if not 0 <= s <= self.capacity:
            raise IndexError(f"state {s} outside [0, {self.capacity}]")
        if not 0 <= a <= s:
            raise IndexError(f"action {a} invalid in state {s}")

    def max_value(self, s: int) -> float:
        self._check(s)
        return float(self.values[s, :s + 1].max())

    def best_action(self, s: int, rule: str = "argmax") -> int:
        """Greedy action; ties go to the smallest a (cheapest swap)."""
        self._check(s)
        row = self.values[s, :s + 1]
        return int(np.argmax(row) if rule == "argmax" else np.argmin(row))

    def update(self, sample: TransitionSample, alpha: float,
               gamma: float) -> float:
        """Relax Q(s, a) toward r + gamma * max Q(s', .); returns it."""
        self._check(sample.s, sample.a)
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"learning rate {alpha} outside (0, 1]")
        target = sample.r + gamma * self.max_value(sample.s_next)
        new = (1.0 - alpha) * self.values[sample.s, sample.a] + alpha * target
        self.values[sample.s, sample.a] = new
        return new


def learning_rate(cfg: RlConfig, t: int, t_produced: int) -> float:
    """alpha0 * beta0^(sample age); maximal for a fresh sample."""
    if t < t_produced:
        raise ValueError(f"sample from slot {t_produced} used at earlier slot {t}")
    return cfg.alpha0 * cfg.beta0 ** (t - t_produced)


def compute_state(anticipated, prev_cached) -> int:
    """Number of anticipated-top files missing from the cache."""
    if not isinstance(anticipated, (set, frozenset)):
        anticipated = set(int(f) for f in anticipated)
    if not isinstance(prev_cached, (set, frozenset)):
        prev_cached = set(int(f) for f in prev_cached)
    return len(anticipated - prev_cached)


def select_action(q: QTable, s: int, rule: str = "argmax") -> int:
    """Pure exploitation over [0..s]; exploration lives in the rollouts."""
    return q.best_action(s, rule)


def _inverse_permutation(ranking: np.ndarray) -> np.ndarray:
    pos = np.empty(len(ranking), dtype=np.int64)
    pos[ranking] = np.arange(len(ranking))
    return pos


def _swap(cached_set: set, ranking: np.ndarray, pos: np.ndarray,
          action: int, capacity: int):
    """Pick (evictions, insertions) for `action` swaps against a ranking.

    Insertions are the best-ranked uncached files; evictions are the
    worst-ranked cached files, and only as many as capacity forces out
    (none while the cache is still filling). Scanning action + |cache|
    ranking entries is always enough to find the insertions.
    """
    insert = []
    for f in ranking[:action + len(cached_set)].tolist():
        if len(insert) == action:
            break
        if f not in cached_set:
            insert.append(f)
    overflow = len(cached_set) + len(insert) - capacity
    if overflow > 0:
        evict = sorted(cached_set, key=pos.__getitem__, reverse=True)[:overflow]
    else:
        evict = []
    return evict, insert


def action_to_replacement(cached, predictions, action: int, capacity: int,
                          *, ranking=None, pos=None):
    """Translate an action count into concrete (evict, insert) id sets.

    With a full cache this swaps the `action` least valued cached files
    for the `action` most valued uncached ones; while filling, it only
    inserts. A shortage of uncached candidates clamps the action (and is
    logged); precomputed ranking/pos arrays for the same predictions can
    be passed to skip the sort.
    """
    if action < 0:
        raise ValueError("action must be >= 0")
    if action > capacity:
        log.warning("action %d clamped to capacity %d", action, capacity)
        action = capacity
    if ranking is None:
        ranking = rank_files(predictions)
    if pos is None:
        pos = _inverse_permutation(ranking)
    cached_set = set(int(f) for f in cached)
    evict, insert = _swap(cached_set, ranking, pos, action, capacity)
    if len(insert) < action:
        log.warning("action %d clamped to %d uncached candidates",
                    action, len(insert))
    return (np.array(sorted(evict), dtype=np.int64),
            np.array(sorted(insert), dtype=np.int64))


@dataclass
class _SlotRecord:
    """Everything a rollout needs to replay one historical slot."""

    top: frozenset
    ranking: np.ndarray
    pos: np.ndarray
    demands: np.ndarray
    cache_after: np.ndarray


class RlAgent:
    """Tabular agent driving one cache over one trace, slot by slot.

    With rollouts > 0 this is the accelerated agent; with rollouts == 0
    it degenerates exactly to plain Q-learning on experienced samples
    (the origin ablation).
    """

    request_level = False

    def __init__(self, cfg: RlConfig, model: GroupedLinearModel,
                 fit_steps: int = 5, name: str = "rlma"):
        cfg.validate()
        self.cfg = cfg
        self.model = model
        self.fit_steps = int(fit_steps)
        self.name = name
        self.q = QTable(cfg.capacity, cfg.q_init)
        self.cache = Cache(cfg.capacity)
        self.buffer: list[TransitionSample] = []
        self._hist: dict[int, _SlotRecord] = {}
        self._t = 0
        self._staged = None
        self._shrink_logged = False

    @property
    def cache_contents(self) -> np.ndarray:
        return self.cache.contents

    def _stage(self, trace: SlottedTrace, t: int):
        """Predict slot t, rank it, and compute the state it induces."""
        pred = self.model.predict_all(trace, t)
        ranking = rank_files(pred)
        pos = _inverse_permutation(ranking)
        top = frozenset(ranking[:self.cfg.capacity].tolist())
        state = compute_state(top, set(self.cache.contents.tolist()))
        self._staged = (pred, ranking, pos, top, state)

    def step(self, trace: SlottedTrace, t: int) -> SlotAccount:
        if t != self._t:
            raise RuntimeError(f"expected slot {self._t}, got {t}")
        if self._staged is None:
            self._stage(trace, 0)
        pred, ranking, pos, top, s = self._staged

        a = select_action(self.q, s, self.cfg.action_rule)
        evict, insert = action_to_replacement(
            self.cache.contents, pred, a, self.cfg.capacity,
            ranking=ranking, pos=pos)
        new_contents = apply_replacement(self.cache.contents, evict, insert,
                                         self.cfg.capacity)
        cost = self.cache.replace(new_contents)
        a_real = len(insert)

        demands = trace.demands_at(t)
        hits = slot_hits(self.cache.contents, demands)
        reward = utility(hits, cost, self.cfg.lambda_r, self.cfg.lambda_c)
        account = SlotAccount(hits, int(demands.sum()), cost, reward)

        self.model.observe_slot(trace, t)
        self.model.fit_step(self.fit_steps)
        self._hist[t] = _SlotRecord(top, ranking, pos, demands,
                                    self.cache.contents)
        self._stage(trace, t + 1)
        s_next = self._staged[4]
        sample = TransitionSample(s, a_real, reward, s_next, t)
        self.buffer.append(sample)

        imagined = self.imagine_rollouts(t) if self.cfg.rollouts else []
        if self.cfg.full_replay:
            for smp in self.buffer:
                lr = learning_rate(self.cfg, t, smp.t)
                if lr > 0.0:  # decayed rates can underflow on ancient samples
                    self.q.update(smp, lr, self.cfg.gamma)
        else:
            self.q.update(sample, self.cfg.alpha0, self.cfg.gamma)
        for smp in imagined:
            self.q.update(smp, learning_rate(self.cfg, t, smp.t),
                          self.cfg.gamma)

        horizon = t + 1 - self.cfg.delta_t
        for old in [tau for tau in self._hist if tau < horizon]:
            del self._hist[old]
        self._t += 1
        return account

    def imagine_rollouts(self, t: int) -> list[TransitionSample]:
        """Synthesize transitions by replaying the recent window.

        Each of the configured rollouts restarts from the real cache at
        the window start and walks forward taking uniformly random
        actions against the stored per-slot rankings, rewarded by the
        actual demands. Reads history only: neither the demand model nor
        the real cache is touched. Rollout k at slot t draws from its
        own (seed, t, k) stream, so the rollout count never perturbs
        other draws.
        """
        cfg = self.cfg
        start = max(0, t - cfg.delta_t)
        if start == t:
            return []
        if start > t - cfg.delta_t and not self._shrink_logged:
            log.info("rollout window shrunk to %d slots at t=%d", t - start, t)
            self._shrink_logged = True
        final_top = self._staged[3]
        samples = []
        for k in range(1, cfg.rollouts + 1):
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, t, k]))
            cache_set = set(self._hist[start].cache_after.tolist())
            for tau in range(start + 1, t + 1):
                rec = self._hist[tau]
                s_star = len(rec.top - cache_set)
                a_star = int(rng.integers(0, s_star + 1))
                evict, insert = _swap(cache_set, rec.ranking, rec.pos,
                                      a_star, cfg.capacity)
                cache_set.difference_update(evict)
                cache_set.update(insert)
                hits = int(sum(rec.demands[f] for f in cache_set))
                reward = utility(hits, len(insert), cfg.lambda_r, cfg.lambda_c)
                next_top = self._hist[tau + 1].top if tau < t else final_top
                s_next = len(next_top - cache_set)
                samples.append(
                    TransitionSample(s_star, a_star, reward, s_next, tau))
        return samples

    # -- checkpointing ----------------------------------------------------

    def save(self, path) -> None:
        """Write a full-fidelity snapshot; a loaded agent continues a run
        exactly as the original would have."""
        meta = {
            "rl": asdict(self.cfg),
            "fit_steps": self.fit_steps,
            "name": self.name,
            "glm": {
                "max_group": self.model.max_group,
                "tol": self.model.tol,
                "forgetting": self.model.forgetting,
                "newcomer_prior": self.model.prior_override,
            },
            "t": self._t,
            "shrink_logged": self._shrink_logged,
            "has_staged": self._staged is not None,
            "hist_slots": sorted(self._hist),
        }
        arrays = {
            "meta": np.array(json.dumps(meta, sort_keys=True)),
            "q": self.q.values,
            "cache": self.cache.contents,
            "buffer_int": np.array(
                [(p.s, p.a, p.s_next, p.t) for p in self.buffer],
                dtype=np.int64).reshape(len(self.buffer), 4),
            "buffer_r": np.array([p.r for p in self.buffer]),
        }
        if self._staged is not None:
            arrays["staged_pred"] = self._staged[0]
        for tau, rec in self._hist.items():
            arrays[f"hist_ranking_{tau}"] = rec.ranking
            arrays[f"hist_demands_{tau}"] = rec.demands
            arrays[f"hist_cache_{tau}"] = rec.cache_after
        for key, val in self.model.state_dict().items():
            arrays[f"glm_{key}"] = val
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path) -> "RlAgent":
        with np.load(path) as data:
            meta = json.loads(str(data["meta"]))
            glm_cfg = meta["glm"]
            model = GroupedLinearModel(
                max_group=glm_cfg["max_group"], tol=glm_cfg["tol"],
                forgetting=glm_cfg["forgetting"],
                newcomer_prior=glm_cfg["newcomer_prior"])
            model.load_state_dict(
                {k[4:]: data[k] for k in data.files if k.startswith("glm_")})
            agent = cls(RlConfig(**meta["rl"]), model,
                        fit_steps=meta["fit_steps"], name=meta["name"])
            agent.q.values = data["q"].copy()
            if len(data["cache"]):
                agent.cache.replace(data["cache"])
            ints, rs = data["buffer_int"], data["buffer_r"]
            agent.buffer = [
                TransitionSample(int(s), int(a), float(r), int(sn), int(tt))
                for (s, a, sn, tt), r in zip(ints, rs)]
            agent._t = meta["t"]
            agent._shrink_logged = meta["shrink_logged"]
            for tau in meta["hist_slots"]:
                ranking = data[f"hist_ranking_{tau}"].copy()
                pos = _inverse_permutation(ranking)
                agent._hist[tau] = _SlotRecord(
                    frozenset(ranking[:agent.cfg.capacity].tolist()),
                    ranking, pos,
                    data[f"hist_demands_{tau}"].copy(),
                    data[f"hist_cache_{tau}"].copy())
            if meta["has_staged"]:
                pred = data["staged_pred"].copy()
                ranking = rank_files(pred)
                pos = _inverse_permutation(ranking)
                top = frozenset(ranking[:agent.cfg.capacity].tolist())
                state = compute_state(top, set(agent.cache.contents.tolist()))
                agent._staged = (pred, ranking, pos, top, state)
        return agent
