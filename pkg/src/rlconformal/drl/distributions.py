"""Return distributions for a single state: weighted particle mixtures and
Gaussian kernel densities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float
    flagged: bool = False

    @property
    def length(self):
        return self.upper - self.lower

    def __contains__(self, x):
        return self.lower <= x <= self.upper


class ParticleDistribution:
    """Mixture of Dirac masses, sorted by location.

    ``m`` is the number of quantile levels the particles came from; for an
    action-marginalized mixture it is the per-action particle count, not the
    total length.
    """

    def __init__(self, particles, weights=None, m: int | None = None):
        x = np.asarray(particles, dtype=float).ravel()
        if x.size == 0:
            raise ValueError("empty particle distribution")
        order = np.argsort(x, kind="stable")
        self.particles = x[order]
        if weights is None:
            self.weights = None
        else:
            w = np.asarray(weights, dtype=float).ravel()[order]
            if np.any(w < 0) or w.sum() <= 0:
                raise ValueError("particle weights must be nonnegative with positive mass")
            keep = w > 0
            self.particles = self.particles[keep]
            self.weights = w[keep] / w[keep].sum()
        self.m = int(m) if m is not None else x.size

    def __len__(self):
        return self.particles.size

    def mean(self):
        if self.weights is None:
            return float(self.particles.mean())
        return float(self.particles @ self.weights)

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        if self.weights is None:
            draws = self.particles[rng.integers(0, self.particles.size, n)]
        else:
            draws = self.particles[rng.choice(self.particles.size, n, p=self.weights)]
        return float(draws[0]) if size is None else draws

    def quantile(self, q):
        """Left-continuous inverse of the mixture CDF."""
        if self.weights is None:
            cum = np.arange(1, self.particles.size + 1) / self.particles.size
        else:
            cum = np.cumsum(self.weights)
        i = np.searchsorted(cum, np.asarray(q) - 1e-12, side="left")
        return self.particles[np.minimum(i, self.particles.size - 1)]


class KDEDistribution:
    """Gaussian kernel density over return samples."""

    def __init__(self, samples, bandwidth: float):
        x = np.sort(np.asarray(samples, dtype=float).ravel())
        if x.size == 0:
            raise ValueError("empty sample for kernel density")
        if not bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        self.samples = x
        self.bandwidth = float(bandwidth)

    def mean(self):
        return float(self.samples.mean())

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        draws = self.samples[rng.integers(0, self.samples.size, n)]
        draws = draws + self.bandwidth * rng.standard_normal(n)
        return float(draws[0]) if size is None else draws

    def cdf(self, x):
        return float(ndtr((x - self.samples) / self.bandwidth).mean())

    def quantile(self, q):
        if np.ndim(q):
            return np.array([self.quantile(v) for v in np.ravel(q)])
        span = self.bandwidth * abs(float(ndtri(min(max(q, 1e-12), 1 - 1e-12)))) + self.bandwidth
        lo, hi = self.samples[0] - span - 1.0, self.samples[-1] + span + 1.0
        return brentq(lambda x: self.cdf(x) - q, lo, hi, xtol=1e-10)


def value_estimate(dist) -> float:
    """Mean of the return distribution."""
    return dist.mean()


def sample_return(dist, rng):
    return dist.sample(rng)


def drl_qr_interval(dist, alpha: float, rule: str = "order") -> Interval:
    """Quantile interval read off the learned distribution, no conformal step.

    With ``rule="order"`` particle models return the L-th and U-th order
    statistics, ``L = floor((m * alpha + 1) / 2)`` and ``U = m + 1 - L``;
    when ``L < 1`` the full particle range comes back flagged. Note that for
    m=20 and alpha=0.1 this is the full particle range, roughly a 95% band.
    ``rule="quantile"`` instead returns the ``alpha/2`` and ``1 - alpha/2``
    quantiles of the particle mixture. Kernel densities always use the
    latter.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if rule not in ("order", "quantile"):
        raise ValueError(f"unknown DRL-QR rule {rule!r}")
    if isinstance(dist, KDEDistribution) or rule == "quantile":
        return Interval(float(dist.quantile(alpha / 2)), float(dist.quantile(1 - alpha / 2)))
    m = dist.m
    L = math.floor((m * alpha + 1) / 2 + 1e-12)
    flagged = L < 1
    L = max(L, 1)
    U = m + 1 - L
    if dist.weights is None and len(dist) == m:
        return Interval(float(dist.particles[L - 1]), float(dist.particles[U - 1]), flagged)
    # weighted mixtures: the same quantile levels the order statistics sit at
    lo, hi = dist.quantile([(2 * L - 1) / (2 * m), (2 * U - 1) / (2 * m)])
    return Interval(float(lo), float(hi), flagged)
