"""Weighted-subsampling conformal calibration with interval aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .buffers import ReplayBuffer, pseudo_returns
from .drl.distributions import Interval

_EPS = 1e-9


def weighted_subsample(weights, l: int, rng) -> np.ndarray:
    """``l`` indices drawn with replacement, probability proportional to weight."""
    w = np.asarray(weights, dtype=float)
    if l < 1:
        raise ValueError("subsample size l must be at least 1")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = w.sum()
    if not total > 0:
        raise ValueError("all weights are zero")
    return rng.choice(w.size, size=l, replace=True, p=w / total)


def quantile_index(l: int, alpha: float, xi: float) -> int:
    """1-based rank ``ceil(l * (1 - alpha * xi))``."""
    return math.ceil(l * (1.0 - alpha * xi) - _EPS)


def conformal_quantile(scores, alpha: float, xi: float = 1.0) -> float:
    """The ``ceil(l (1 - alpha xi))``-th smallest score, ``inf`` if out of range."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0.0 < xi <= 1.0:
        raise ValueError("xi must lie in (0, 1]")
    v = np.asarray(scores, dtype=float)
    if v.size == 0:
        raise ValueError("no scores to calibrate on")
    r = quantile_index(v.size, alpha, xi)
    if r > v.size:
        return math.inf
    return float(np.partition(v, r - 1)[r - 1])


def single_interval(center: float, radius: float) -> Interval:
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    return Interval(center - radius, center + radius, flagged=math.isinf(radius))


@dataclass
class PredictionRegion:
    """``center +/- radius``; the region is the whole line when the radius is infinite."""

    center: float
    radius: float
    radii: np.ndarray = field(repr=False, default=None)
    alpha: float | None = None
    xi: float | None = None
    l: int | None = None

    @property
    def B(self):
        return 0 if self.radii is None else len(self.radii)

    @property
    def infinite(self):
        return math.isinf(self.radius)

    @property
    def interval(self) -> Interval:
        return single_interval(self.center, self.radius)

    @property
    def length(self):
        return 2.0 * self.radius

    def __contains__(self, g):
        return abs(g - self.center) <= self.radius


def min_votes(B: int, xi: float) -> int:
    """Intervals that must contain a point for it to enter the aggregate.

    ``ceil((1 - xi) B)``, but never fewer than one: at ``xi = 1`` the bare
    vote rule admits every point, which would make the region the whole line.
    """
    return max(1, math.ceil((1.0 - xi) * B - _EPS))


def aggregated_radius(radii, xi: float) -> float:
    """Radius of the points covered by at least :func:`min_votes` intervals.

    A point at distance ``x`` from the shared center lies in interval ``b``
    iff ``x <= q_b``, so with radii sorted ascending the region ends at the
    ``(B - votes + 1)``-th one, i.e. the ``(floor(xi B) + 1)``-th smallest.
    """
    q = np.sort(np.asarray(radii, dtype=float))
    if q.size == 0:
        raise ValueError("nothing to aggregate")
    if not 0.0 < xi <= 1.0:
        raise ValueError("xi must lie in (0, 1]")
    return float(q[q.size - min_votes(q.size, xi)])


def aggregate(intervals, xi: float) -> PredictionRegion:
    """Vote-aggregate ``B`` intervals that share a center."""
    intervals = list(intervals)
    if not intervals:
        raise ValueError("nothing to aggregate")
    centers = np.array([(iv.lower + iv.upper) / 2 if not iv.flagged else np.nan
                        for iv in intervals])
    finite = centers[~np.isnan(centers)]
    if finite.size and np.ptp(finite) > 1e-9 * max(1.0, np.abs(finite).max()):
        raise ValueError("aggregation needs intervals with a common center")
    center = float(finite[0]) if finite.size else 0.0
    radii = np.array([math.inf if iv.flagged else (iv.upper - iv.lower) / 2 for iv in intervals])
    return PredictionRegion(center, aggregated_radius(radii, xi), radii, xi=xi)


def calibration_scores(buffer: ReplayBuffer, idx, model, target, gamma: float, rng):
    """Absolute deviation between pseudo-returns and the value at the segment start."""
    g = pseudo_returns(buffer, idx, model, target, gamma, rng)
    v = model.value(buffer.start_states[idx], target)
    return np.abs(g - v)


def calibrate(buffer: ReplayBuffer, weights, model, target, alpha: float, xi: float, B: int,
              l: int, gamma: float, rng) -> np.ndarray:
    """Per-round radii ``q^(b)``; they do not depend on the test state.

    Each round draws a fresh subsample and fresh tail samples.
    """
    if B < 1:
        raise ValueError("need at least one calibration round")
    radii = np.empty(B)
    for b in range(B):
        idx = weighted_subsample(weights, l, rng)
        scores = calibration_scores(buffer, idx, model, target, gamma, rng)
        radii[b] = conformal_quantile(scores, alpha, xi)
    return radii


def region_from_radii(center: float, radii, alpha: float, xi: float, l: int) -> PredictionRegion:
    return PredictionRegion(float(center), aggregated_radius(radii, xi), np.asarray(radii),
                            alpha, xi, l)


def predict(buffer: ReplayBuffer, weights, model, target, s_test, alpha: float, xi: float,
            B: int, l: int, gamma: float, rng) -> PredictionRegion:
    """Prediction region for the return from a single test state."""
    radii = calibrate(buffer, weights, model, target, alpha, xi, B, l, gamma, rng)
    center = float(model.value(np.asarray(s_test)[None, ...], target)[0])
    return region_from_radii(center, radii, alpha, xi, l)
