"""Grouped linear demand prediction.

Files are grouped by age (slots since release, capped). Each group b
owns a weight vector theta_b over the b most recent demands, newest
first, and predicts next-slot demand as the inner product. Weights are
constrained to be non-increasing in lag and non-negative, which encodes
that older demands never matter more than newer ones.

Fitting is least squares over all (file, slot) samples seen so far,
kept as per-group sufficient statistics (Gram matrix, cross vector,
count, target energy) so a fit pass costs the same no matter how much
data has streamed by. The constrained solve is projected gradient
descent with a backtracking step, warm-started from the current
weights.
"""

from __future__ import annotations

import numpy as np

from .trace import ConfigError, SlottedTrace


def project_monotone_nonneg(v) -> np.ndarray:
    """Euclidean projection onto {x : x_1 >= x_2 >= ... >= x_d >= 0}.

    Pool-adjacent-violators enforces the non-increasing order; clipping
    at zero afterwards is exact for isotonic problems with bounds.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("expected a 1-d vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite entries cannot be projected")
    if v.size == 0:
        return v.copy()
    means: list[float] = []
    counts: list[int] = []
    for x in v:
        means.append(float(x))
        counts.append(1)
        while len(means) > 1 and means[-2] < means[-1]:
            m2, c2 = means.pop(), counts.pop()
            m1, c1 = means.pop(), counts.pop()
            means.append((m1 * c1 + m2 * c2) / (c1 + c2))
            counts.append(c1 + c2)
    out = np.repeat(np.asarray(means), np.asarray(counts))
    return np.maximum(out, 0.0)


def _descend(gram, cross, theta, steps, tol):
    """Run `steps` projected-gradient iterations on one group.

    Objective: theta'G theta - 2 c'theta (squared error up to a
    constant). The step starts at the inverse mean diagonal scale and
    halves until the objective stops increasing, so the objective is
    non-increasing across iterations. Returns (theta, iterations run).
    """
    dim = len(cross)
    base_step = 1.0 / (np.trace(gram) / dim + 1e-12)

    def objective(th):
        return float(th @ gram @ th - 2.0 * cross @ th)

    f_cur = objective(theta)
    done = 0
    for done in range(1, steps + 1):
        grad = 2.0 * (gram @ theta - cross)
        step = base_step
        cand = project_monotone_nonneg(theta - step * grad)
        f_new = objective(cand)
        while f_new > f_cur + 1e-12 and step > 1e-18:
            step *= 0.5
            cand = project_monotone_nonneg(theta - step * grad)
            f_new = objective(cand)
        delta = float(np.max(np.abs(cand - theta)))
        theta, f_cur = cand, f_new
        if delta <= tol:
            break
    return theta, done


class GroupedLinearModel:
    """Per-age-group constrained linear predictor of next-slot demand.

    max_group caps both the number of groups and the feature length:
    files older than max_group slots share group max_group and use only
    their max_group most recent demands. Brand new files (no history)
    are predicted by a running mean of first-slot demands seen so far,
    or by a fixed prior when one is configured.

    forgetting < 1 decays the accumulated statistics once per observed
    slot, trading the exact all-history objective for faster tracking.
    """

    def __init__(self, max_group: int = 60, tol: float = 1e-10,
                 forgetting: float = 1.0,
                 newcomer_prior: float | None = None):
        if max_group < 1:
            raise ConfigError("max_group must be >= 1")
        if not 0.0 < forgetting <= 1.0:
            raise ConfigError("forgetting must be in (0, 1]")
        if newcomer_prior is not None and newcomer_prior < 0:
            raise ConfigError("newcomer_prior must be >= 0")
        self.max_group = int(max_group)
        self.tol = float(tol)
        self.forgetting = float(forgetting)
        self.prior_override = newcomer_prior
        self.theta = [np.zeros(b) for b in range(1, self.max_group + 1)]
        self._gram = [np.zeros((b, b)) for b in range(1, self.max_group + 1)]
        self._cross = [np.zeros(b) for b in range(1, self.max_group + 1)]
        self._count = np.zeros(self.max_group, dtype=np.int64)
        self._yy = np.zeros(self.max_group)
        self._newcomer_sum = 0.0
        self._newcomer_count = 0

    def group_of(self, age: int) -> int:
        if age < 1:
            raise ValueError("grouped prediction needs age >= 1")
        return min(age, self.max_group)

    @property
    def newcomer_prior(self) -> float:
        if self.prior_override is not None:
            return self.prior_override
        if self._newcomer_count == 0:
            return 0.0
        return self._newcomer_sum / self._newcomer_count

    def add_sample(self, x, y: float) -> None:
        """Fold one (recent demands, next demand) pair into its group."""
        x = np.asarray(x, dtype=np.float64)
        b = len(x)
        if not 1 <= b <= self.max_group:
            raise ValueError(f"feature length {b} outside [1, {self.max_group}]")
        i = b - 1
        self._gram[i] += np.outer(x, x)
        self._cross[i] += x * y
        self._count[i] += 1
        self._yy[i] += y * y

    def add_newcomer(self, y: float) -> None:
        """Fold a first-slot demand into the newcomer prior."""
        self._newcomer_sum += float(y)
        self._newcomer_count += 1

    def observe_slot(self, trace: SlottedTrace, t: int) -> None:
        """Absorb slot t of a trace: one sample per file released by t.

        Equivalent to calling add_sample per file (vectorized by age
        group); demand counts are integers so the grouped accumulation
        is bit-exact regardless of summation order.
        """
        size = trace.library_size_at(t)
        if self.forgetting < 1.0:
            for i in range(self.max_group):
                self._gram[i] *= self.forgetting
                self._cross[i] *= self.forgetting
            self._yy *= self.forgetting
        if size == 0:
            return
        mat = trace.demand_matrix()
        ages = t - trace.release_slot[:size]
        y_all = mat[t, :size].astype(np.float64)
        new = ages == 0
        if new.any():
            self._newcomer_sum += float(y_all[new].sum())
            self._newcomer_count += int(new.sum())
        for b in range(1, self.max_group + 1):
            sel = (ages >= b) if b == self.max_group else (ages == b)
            idx = np.nonzero(sel)[0]
            if idx.size == 0:
                continue
            feats = mat[t - b:t, idx].astype(np.float64)[::-1].T
            y = y_all[idx]
            i = b - 1
            self._gram[i] += feats.T @ feats
            self._cross[i] += feats.T @ y
            self._count[i] += idx.size
            self._yy[i] += float(y @ y)

    def fit_step(self, steps: int = 5) -> int:
        """Projected-gradient iterations per group; returns total taken.

        Groups without samples are skipped; steps=0 leaves the model
        unchanged. Every stored weight vector is feasible afterwards.
        """
        if steps < 0:
            raise ValueError("steps must be >= 0")
        total = 0
        for i in range(self.max_group):
            if self._count[i] == 0 or steps == 0:
                continue
            self.theta[i], done = _descend(
                self._gram[i], self._cross[i], self.theta[i], steps, self.tol)
            total += done
        return total

    def group_loss(self, b: int) -> float:
        """Mean squared error of group b under its current weights."""
        i = b - 1
        if self._count[i] == 0:
            return 0.0
        th = self.theta[i]
        sse = float(th @ self._gram[i] @ th - 2.0 * self._cross[i] @ th
                    + self._yy[i])
        return max(sse, 0.0) / self._count[i]

    def group_stats(self, b: int):
        """(gram, cross, count) of group b, for inspection."""
        i = b - 1
        return self._gram[i].copy(), self._cross[i].copy(), int(self._count[i])

    def feature_vector(self, trace: SlottedTrace, f: int, t: int) -> np.ndarray:
        """Recent demands of file f before slot t, newest first, capped."""
        return trace.demand_history(f, t, cap=self.max_group)

    def predict(self, history) -> float:
        """Next-slot demand from past demands, most recent first."""
        history = np.asarray(history, dtype=np.float64)
        if history.size == 0:
            return self.newcomer_prior
        b = self.group_of(history.size)
        return float(self.theta[b - 1] @ history[:b])

    def predict_all(self, trace: SlottedTrace, t: int) -> np.ndarray:
        """Predicted demand for every file released by slot t.

        t may equal trace.num_slots (one step past the end). Files whose
        release slot is t itself have no history and get the newcomer
        prior; the demand of slot t is never consulted.
        """
        if not 0 <= t <= trace.num_slots:
            raise IndexError(f"slot {t} out of range [0, {trace.num_slots}]")
        if t == trace.num_slots:
            size = trace.num_files
        else:
            size = trace.library_size_at(t)
        out = np.empty(size)
        if size == 0:
            return out
        mat = trace.demand_matrix()
        ages = t - trace.release_slot[:size]
        out[ages == 0] = self.newcomer_prior
        for b in range(1, self.max_group + 1):
            sel = (ages >= b) if b == self.max_group else (ages == b)
            idx = np.nonzero(sel)[0]
            if idx.size == 0:
                continue
            feats = mat[t - b:t, idx].astype(np.float64)[::-1].T
            out[idx] = feats @ self.theta[b - 1]
        return out

    def state_dict(self) -> dict:
        """Plain-array snapshot of weights, statistics, and the prior."""
        state = {
            "max_group": np.int64(self.max_group),
            "count": self._count.copy(),
            "yy": self._yy.copy(),
            "newcomer_sum": np.float64(self._newcomer_sum),
            "newcomer_count": np.int64(self._newcomer_count),
        }
        for i in range(self.max_group):
            state[f"theta_{i}"] = self.theta[i].copy()
            state[f"gram_{i}"] = self._gram[i].copy()
            state[f"cross_{i}"] = self._cross[i].copy()
        return state

    def load_state_dict(self, state: dict) -> None:
        if int(state["max_group"]) != self.max_group:
            raise ValueError("snapshot was taken with a different max_group")
        self._count = np.asarray(state["count"], dtype=np.int64).copy()
        self._yy = np.asarray(state["yy"], dtype=np.float64).copy()
        self._newcomer_sum = float(state["newcomer_sum"])
        self._newcomer_count = int(state["newcomer_count"])
        for i in range(self.max_group):
            self.theta[i] = np.asarray(state[f"theta_{i}"], dtype=np.float64).copy()
            self._gram[i] = np.asarray(state[f"gram_{i}"], dtype=np.float64).copy()
            self._cross[i] = np.asarray(state[f"cross_{i}"], dtype=np.float64).copy()

    def checksum(self) -> int:
        """Order-stable hash of the full model state (hygiene checks)."""
        acc = hash((self.max_group, self._newcomer_sum, self._newcomer_count))
        for i in range(self.max_group):
            acc ^= hash((i, self.theta[i].tobytes(), self._gram[i].tobytes(),
                         self._cross[i].tobytes(), int(self._count[i]),
                         float(self._yy[i])))
        return acc
