"""Kernel density return model built from Monte Carlo rollout returns."""

from __future__ import annotations

import warnings

import numpy as np

from .distributions import KDEDistribution

BANDWIDTH_FLOOR = 1e-3


def silverman_bandwidth(x, floor: float = BANDWIDTH_FLOOR) -> float:
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        return floor
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return max(0.9 * spread * n ** (-0.2), floor)


def kde_return_estimator(returns, bandwidth: float | None = None) -> KDEDistribution:
    """Gaussian KDE over rollout returns, Silverman bandwidth by default."""
    returns = np.asarray(returns, dtype=float)
    h = silverman_bandwidth(returns) if bandwidth is None else bandwidth
    return KDEDistribution(returns, h)


class BucketedKDEModel:
    """Return densities conditioned on a uniform grid over a 2-d state.

    Buckets with fewer than ``min_count`` returns fall back to the pooled
    density; their indices are kept in ``fallback_buckets``.
    """

    backend = "kde"
    state_action = False

    def __init__(self, lows, highs, grid=(8, 8), min_count: int = 2):
        self.lows = np.asarray(lows, dtype=float)
        self.highs = np.asarray(highs, dtype=float)
        self.grid = tuple(int(g) for g in grid)
        self.min_count = int(min_count)
        self.dists: dict[int, KDEDistribution] = {}
        self.pooled: KDEDistribution | None = None
        self.fallback_buckets: set[int] = set()

    def bucket(self, states):
        s = np.asarray(states, dtype=float)
        rel = (s - self.lows) / (self.highs - self.lows)
        cells = np.clip((rel * self.grid).astype(int), 0, np.array(self.grid) - 1)
        return cells[:, 0] * self.grid[1] + cells[:, 1]

    def fit(self, states, returns):
        returns = np.asarray(returns, dtype=float)
        if returns.size < 2:
            raise ValueError("need at least two rollout returns")
        self.pooled = kde_return_estimator(returns)
        b = self.bucket(states)
        for cell in np.unique(b):
            vals = returns[b == cell]
            if vals.size >= self.min_count:
                self.dists[int(cell)] = kde_return_estimator(vals)
        return self

    def distribution(self, s, target=None) -> KDEDistribution:
        cell = int(self.bucket(np.asarray(s, dtype=float)[None, :])[0])
        dist = self.dists.get(cell)
        if dist is None:
            if cell not in self.fallback_buckets:
                warnings.warn(f"state bucket {cell} has too few rollouts; using pooled density",
                              stacklevel=2)
                self.fallback_buckets.add(cell)
            return self.pooled
        return dist

    def _per_state(self, states):
        cells = self.bucket(states)
        return cells, {int(c): self.distribution(self._any_state(states, cells, c))
                       for c in np.unique(cells)}

    @staticmethod
    def _any_state(states, cells, c):
        return np.asarray(states, dtype=float)[np.argmax(cells == c)]

    def value(self, states, target=None):
        cells, dists = self._per_state(states)
        return np.array([dists[int(c)].mean() for c in cells])

    def sample(self, states, rng, target=None):
        cells, dists = self._per_state(states)
        out = np.empty(cells.shape[0])
        for c, dist in dists.items():
            mask = cells == c
            out[mask] = dist.sample(rng, int(mask.sum()))
        return out
