"""Distance metrics, maximin ordering, and nearest-neighbor conditioning.

All orderings and conditioning-set searches are exact quadratic-time greedy
algorithms; ties in any argmin/argmax resolve to the smallest original index
so results are deterministic and match analytic input-transform equivalences
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covmodels import CovarianceModel


class Metric:
    """Symmetric nonnegative distance between item indices."""

    def dist_pairs(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dist(self, i: int, j: int) -> float:
        return float(self.dist_pairs(np.asarray(i), np.asarray(j)))

    def dist_row(self, i: int, idx: np.ndarray) -> np.ndarray:
        return self.dist_pairs(np.full(len(idx), i, dtype=np.int64), idx)


class EuclideanMetric(Metric):
    def __init__(self, points: np.ndarray):
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]

    def dist_pairs(self, i, j):
        d = self.points[np.asarray(i, dtype=np.int64)] - self.points[np.asarray(j, dtype=np.int64)]
        return np.sqrt(np.sum(d * d, axis=-1))


class CorrelationMetric(Metric):
    """Correlation-based distance under a bound covariance model.

    The underlying metric is tau(i, j) = sqrt(1 - |rho_ij|), but orderings
    and neighbor selections depend only on comparisons, so ``dist_pairs``
    returns the order-equivalent value -log|rho_ij| instead: it is a strictly
    increasing transform of tau that stays resolvable when |rho| drops below
    float epsilon (where 1 - |rho| would saturate at 1 and turn genuinely
    different distances into ties).  Uncorrelated pairs map to +inf.  ``tau``
    exposes the metric value itself.

    Marginal standard deviations are memoized (n values); correlations are
    clamped to [-1, 1] to absorb float excursions.
    """

    def __init__(self, model: CovarianceModel):
        self.model = model
        self._sd = np.sqrt(model.variances())

    def _abs_rho(self, i, j):
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        rho = self.model.eval_pairs(i, j) / (self._sd[i] * self._sd[j])
        return np.abs(np.clip(rho, -1.0, 1.0))

    def dist_pairs(self, i, j):
        a = self._abs_rho(i, j)
        with np.errstate(divide="ignore"):
            return -np.log(a)

    def tau(self, i, j):
        """The correlation distance sqrt(1 - |rho_ij|) itself."""
        return np.sqrt(1.0 - self._abs_rho(i, j))


class TimeMetric(Metric):
    """|t_i - t_j|; used by T-NN conditioning."""

    def __init__(self, times: np.ndarray):
        self.times = np.asarray(times, dtype=float)

    def dist_pairs(self, i, j):
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        return np.abs(self.times[i] - self.times[j])


class RandomMetric(Metric):
    """Seeded pseudo-random symmetric distance; the m nearest under it are a
    uniformly random subset, which implements random conditioning."""

    def __init__(self, n: int, seed: int):
        self._keys = np.random.default_rng([int(seed), 0x52414E44]).integers(
            0, 2**63, size=n, dtype=np.int64
        ).astype(np.uint64)

    def dist_pairs(self, i, j):
        ki = self._keys[np.asarray(i, dtype=np.int64)]
        kj = self._keys[np.asarray(j, dtype=np.int64)]
        lo = np.minimum(ki, kj)
        hi = np.maximum(ki, kj)
        h = (lo * np.uint64(0x9E3779B97F4A7C15)) ^ (hi + np.uint64(0xBF58476D1CE4E5B9))
        h ^= h >> np.uint64(31)
        h *= np.uint64(0x94D049BB133111EB)
        h ^= h >> np.uint64(29)
        out = (h >> np.uint64(11)).astype(float) * 2.0**-52
        return np.where(np.asarray(i) == np.asarray(j), 0.0, out)


@dataclass(frozen=True)
class OrderedApprox:
    """A permutation plus per-position conditioning sets.

    ``order[k]`` is the original index at ordered position k.  ``neighbors[i]``
    holds the conditioning set c(i) in ordered-position indexing (all < i);
    c(0) is empty.
    """

    order: np.ndarray
    neighbors: list
    m: int

    @property
    def n(self) -> int:
        return len(self.order)

    def blocks(self):
        """Ordered-position index blocks [i, c(i)...] for factor columns."""
        return [np.concatenate(([i], self.neighbors[i])) for i in range(self.n)]


def distance(metric: Metric, i: int, j: int) -> float:
    return metric.dist(i, j)


def maximin_order(metric: Metric, n: int, first: int | None = None) -> np.ndarray:
    """Exact greedy max-min-distance ordering; O(n^2) with cached minima."""
    if first is None:
        first = 0
    order = np.empty(n, dtype=np.int64)
    order[0] = first
    if n == 1:
        return order
    remaining = np.ones(n, dtype=bool)
    remaining[first] = False
    idx = np.arange(n)
    mindist = np.full(n, np.inf)
    mindist[idx] = metric.dist_row(first, idx)
    mindist[first] = -np.inf
    for k in range(1, n):
        nxt = int(np.argmax(mindist))  # argmax returns the smallest index on ties
        order[k] = nxt
        remaining[nxt] = False
        mindist[nxt] = -np.inf
        if k < n - 1:
            rem = idx[remaining]
            mindist[rem] = np.minimum(mindist[rem], metric.dist_row(nxt, rem))
    return order


def _select_nearest(dists: np.ndarray, cand_ids: np.ndarray, m: int) -> np.ndarray:
    """Positions (into cand arrays) of the m smallest distances, ties by
    smallest original index."""
    if m >= len(dists):
        return np.arange(len(dists))
    sel = np.lexsort((cand_ids, dists))[:m]
    return sel


def nearest_neighbors(
    metric: Metric,
    order: np.ndarray,
    m: int,
    groups: np.ndarray | None = None,
    mode: str = "joint",
    quotas: dict | None = None,
) -> OrderedApprox:
    """Conditioning sets of the m previously ordered nearest neighbors.

    ``mode`` 'joint' searches all previous positions; 'separate' restricts
    candidates to the same group as the target; 'quota' takes a fixed number
    of neighbors per group (``quotas`` maps group label to count).
    """
    order = np.asarray(order, dtype=np.int64)
    n = len(order)
    neighbors = [np.empty(0, dtype=np.int64)]
    g = None if groups is None else np.asarray(groups)[order]
    for i in range(1, n):
        prev = np.arange(i)
        if m == 0:
            neighbors.append(np.empty(0, dtype=np.int64))
            continue
        d = metric.dist_row(order[i], order[prev])
        ids = order[prev]
        if mode == "joint":
            sel = _select_nearest(d, ids, m)
        elif mode == "separate":
            mask = g[prev] == g[i]
            sel = prev[mask][_select_nearest(d[mask], ids[mask], m)]
        elif mode == "quota":
            parts = []
            for label, cnt in quotas.items():
                mask = g[prev] == label
                parts.append(prev[mask][_select_nearest(d[mask], ids[mask], cnt)])
            sel = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
        else:
            raise ValueError(f"unknown conditioning mode {mode!r}")
        neighbors.append(np.sort(sel.astype(np.int64)))
    return OrderedApprox(order=order, neighbors=neighbors, m=m)


def restricted_order(metric: Metric, n_obs: int, n_pred: int) -> np.ndarray:
    """Maximin over prediction items with all observed items pre-ordered.

    The metric spans n_obs + n_pred items with observed items indexed first;
    returns global indices of the prediction items in restricted order.
    """
    pred = np.arange(n_obs, n_obs + n_pred, dtype=np.int64)
    if n_pred == 1:
        return pred
    mindist = np.full(n_pred, np.inf)
    if n_obs > 0:
        for k, p in enumerate(pred):
            mindist[k] = np.min(metric.dist_row(p, np.arange(n_obs, dtype=np.int64)))
    out = np.empty(n_pred, dtype=np.int64)
    for k in range(n_pred):
        nxt = int(np.argmax(mindist))
        out[k] = pred[nxt]
        mindist[nxt] = -np.inf
        alive = mindist > -np.inf
        rem = pred[alive]
        if len(rem):
            mindist[alive] = np.minimum(mindist[alive], metric.dist_row(out[k], rem))
    return out


def joint_neighbors(metric: Metric, pred_order: np.ndarray, m: int, n_obs: int) -> list:
    """Per-prediction conditioning over observed items and prior predictions.

    Returns, for each restricted-order position i, a pair (c_o, c_u): c_o are
    observed item indices, c_u are prior prediction positions (indices into
    pred_order).  Either part may be empty.
    """
    pred_order = np.asarray(pred_order, dtype=np.int64)
    out = []
    obs = np.arange(n_obs, dtype=np.int64)
    for i in range(len(pred_order)):
        cands = np.concatenate([obs, pred_order[:i]])
        if m == 0 or len(cands) == 0:
            out.append((np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)))
            continue
        d = metric.dist_row(pred_order[i], cands)
        sel = _select_nearest(d, cands, m)
        c_o = np.sort(cands[sel[sel < n_obs]])
        c_u = np.sort(sel[sel >= n_obs] - n_obs)  # prior-prediction positions
        out.append((c_o, c_u))
    return out


def lexicographic_order(keys: list) -> np.ndarray:
    """Sort by keys[0], breaking ties by keys[1], then keys[2], ..."""
    return np.lexsort(tuple(reversed(keys))).astype(np.int64)


def coordinate_order(inputs, which: str) -> np.ndarray:
    """X-ord / Y-ord / T-ord coordinate sorts with the stated fallbacks."""
    x = inputs.coords
    t = inputs.times
    if which == "X-ord":
        keys = [x[:, 0], x[:, 1]] + ([t] if t is not None else [])
    elif which == "Y-ord":
        keys = [x[:, 1], x[:, 0]] + ([t] if t is not None else [])
    elif which == "T-ord":
        keys = ([t] if t is not None else []) + [x[:, 1], x[:, 0]]
    else:
        raise ValueError(f"unknown coordinate ordering {which!r}")
    return lexicographic_order(keys)
