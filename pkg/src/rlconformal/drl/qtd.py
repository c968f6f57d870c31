"""Quantile temporal-difference learning.

A model holds ``m`` particles per state (or per state-action pair) that
track the quantile levels ``tau_i = (2i - 1) / (2m)`` of the return
distribution. Tabular models follow the classic update exactly; the linear
backend takes semi-gradient steps on the same quantile loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .distributions import ParticleDistribution

DIVERGENCE_LIMIT = 1e6


class DivergenceError(RuntimeError):
    pass


def quantile_levels(m: int) -> np.ndarray:
    if m < 1:
        raise ValueError("need at least one quantile particle")
    return (2 * np.arange(1, m + 1) - 1) / (2 * m)


class QuantileModel:
    """Shared inference for particle-based return models.

    ``n_heads`` is 1 for a state-conditioned model and the number of actions
    for a state-action model; the latter needs the target policy to turn
    particles into a state-level distribution.
    """

    backend = "base"

    def __init__(self, m: int, n_heads: int, gamma: float, rho: float):
        self.m = int(m)
        self.tau = quantile_levels(self.m)
        self.n_heads = int(n_heads)
        self.gamma = float(gamma)
        self.rho = float(rho)

    @property
    def state_action(self):
        return self.n_heads > 1

    def raw_particles(self, states) -> np.ndarray:
        """Unsorted particles ``(n, n_heads, m)``."""
        raise NotImplementedError

    def particles(self, states) -> np.ndarray:
        return np.sort(self.raw_particles(states), axis=-1)

    def head_weights(self, states, target=None) -> np.ndarray:
        n = np.asarray(states).shape[0]
        if not self.state_action:
            return np.ones((n, 1))
        if target is None:
            raise ValueError("a state-action model needs the target policy to marginalize")
        return target.probs(states)

    def value(self, states, target=None) -> np.ndarray:
        means = self.raw_particles(states).mean(axis=-1)
        return (means * self.head_weights(states, target)).sum(axis=1)

    def sample(self, states, rng, target=None) -> np.ndarray:
        """One draw per state from the (marginalized) particle mixture."""
        p = self.raw_particles(states)
        n = p.shape[0]
        if self.state_action:
            w = self.head_weights(states, target)
            u = rng.random(n)
            heads = np.minimum((u[:, None] >= np.cumsum(w, axis=1)).sum(axis=1), self.n_heads - 1)
        else:
            heads = np.zeros(n, dtype=np.int64)
        j = rng.integers(0, self.m, n)
        return p[np.arange(n), heads, j]

    def distribution(self, s, target=None) -> ParticleDistribution:
        states = np.asarray(s)[None, ...]
        p = self.particles(states)[0]
        if not self.state_action:
            return ParticleDistribution(p[0], m=self.m)
        return marginalize(self, s, target)

    def check_finite(self):
        big = float(np.max(np.abs(self.parameters_array())))
        if not np.isfinite(big) or big > DIVERGENCE_LIMIT:
            raise DivergenceError(
                f"{self.backend} QTD parameters reached magnitude {big:.3g}; "
                f"lower the learning rate (rho={self.rho})")

    def parameters_array(self) -> np.ndarray:
        raise NotImplementedError


def marginalize(model: QuantileModel, s, target) -> ParticleDistribution:
    """Mix per-action particle sets with weights ``target(a | s)``.

    Weights are carried explicitly rather than resampled.
    """
    states = np.asarray(s)[None, ...]
    p = model.particles(states)[0]
    w = model.head_weights(states, target)[0]
    weights = np.repeat(w / model.m, model.m)
    return ParticleDistribution(p.ravel(), weights, m=model.m)


class TabularQuantileModel(QuantileModel):
    backend = "tabular"

    def __init__(self, n_states: int, n_heads: int = 1, m: int = 20, gamma: float = 0.8,
                 rho: float = 0.1, theta=None):
        super().__init__(m, n_heads, gamma, rho)
        self.n_states = int(n_states)
        self.theta = (np.zeros((self.n_states, self.n_heads, self.m))
                      if theta is None else np.array(theta, dtype=float))

    def raw_particles(self, states):
        return self.theta[np.asarray(states, dtype=np.int64)]

    def parameters_array(self):
        return self.theta


def _qtd_increment(theta_row, target_particles, r, gamma, tau, rho):
    targets = r + gamma * target_particles
    below = (targets[None, :] - theta_row[:, None]) < 0
    return rho * (tau - below.mean(axis=1))


def qtd_update_on(model: TabularQuantileModel, tr) -> TabularQuantileModel:
    """One on-policy update from transition ``tr`` (fields s, r, s_next).

    All ``m`` particles at ``s`` move simultaneously, so a self-transition
    reads the pre-update particles.
    """
    if model.state_action:
        raise ValueError("on-policy update needs a state-conditioned model")
    s, s2 = int(tr.s), int(tr.s_next)
    inc = _qtd_increment(model.theta[s, 0], model.theta[s2, 0].copy(), tr.r,
                         model.gamma, model.tau, model.rho)
    model.theta[s, 0] += inc
    return model


def qtd_update_off(model: TabularQuantileModel, tr, target, rng) -> TabularQuantileModel:
    """One off-policy update; the bootstrap action is drawn from ``target``."""
    if not model.state_action:
        raise ValueError("off-policy update needs a state-action model")
    s, a, s2 = int(tr.s), int(tr.a), int(tr.s_next)
    a2 = int(target.sample(np.array([s2]), rng)[0])
    inc = _qtd_increment(model.theta[s, a], model.theta[s2, a2].copy(), tr.r,
                         model.gamma, model.tau, model.rho)
    model.theta[s, a] += inc
    return model


@njit(cache=True)
def _tabular_sweep(theta, s, a, r, s2, a2, order, rho, gamma, tau, limit):
    m = tau.shape[0]
    inc = np.empty(m)
    for n in range(order.shape[0]):
        k = order[n]
        for i in range(m):
            cur = theta[s[k], a[k], i]
            below = 0
            for j in range(m):
                if r[k] + gamma * theta[s2[k], a2[n], j] - cur < 0:
                    below += 1
            inc[i] = rho * (tau[i] - below / m)
        for i in range(m):
            theta[s[k], a[k], i] += inc[i]
            if abs(theta[s[k], a[k], i]) > limit:
                return n
    return -1


class LinearQuantileModel(QuantileModel):
    """``theta(s, a, .) = W[a] @ [1, x(s) - offset]`` with a ridge penalty.

    ``x(s)`` is the flattened state; ``offset`` is usually the training mean.
    The intercept column is not penalized.
    """

    backend = "linear"

    def __init__(self, dim: int, n_heads: int = 1, m: int = 20, gamma: float = 0.8,
                 rho: float = 0.01, ridge: float = 1e-3, weights=None, offset=None):
        super().__init__(m, n_heads, gamma, rho)
        self.dim = int(dim)
        self.ridge = float(ridge)
        self.weights = (np.zeros((self.n_heads, self.m, self.dim + 1))
                        if weights is None else np.array(weights, dtype=float))
        self.offset = np.zeros(self.dim) if offset is None else np.asarray(offset, dtype=float)

    def design(self, states):
        x = np.asarray(states, dtype=float)
        x = x.reshape(x.shape[0], -1) - self.offset
        return np.column_stack([np.ones(x.shape[0]), x])

    def raw_particles(self, states):
        phi = self.design(states)
        return np.einsum("nd,hmd->nhm", phi, self.weights)

    def parameters_array(self):
        return self.weights

    def gradient_step(self, states, actions, rewards, next_states, next_actions):
        """Averaged semi-gradient quantile step over a mini-batch."""
        phi = self.design(states)
        n = phi.shape[0]
        rows = np.arange(n)
        pred = np.einsum("nd,nmd->nm", phi, self.weights[actions])
        nxt = self.raw_particles(next_states)[rows, next_actions]
        targets = rewards[:, None] + self.gamma * nxt
        below = (targets[:, None, :] - pred[:, :, None]) < 0
        g = self.tau[None, :] - below.mean(axis=2)
        grad = np.zeros_like(self.weights)
        np.add.at(grad, actions, g[:, :, None] * phi[:, None, :])
        penalty = self.ridge * self.weights
        penalty[..., 0] = 0.0
        self.weights += self.rho * (grad / n - penalty)


@dataclass
class QTDConfig:
    backend: str = "tabular"
    m: int = 20
    rho: float = 0.1
    passes: int = 50
    state_action: bool | None = None
    batch_size: int = 32
    ridge: float = 1e-3
    # mlp backend
    epochs: int = 200
    hidden: tuple = (32, 32)
    lr: float = 1e-3
    momentum: float = 0.9
    kappa: float = 1.0
    optimizer: str = "sgd"
    extra: dict = field(default_factory=dict)


def _bootstrap_actions(model, target, next_states, order, rng):
    if not model.state_action:
        return np.zeros(order.shape[0], dtype=np.int64)
    return np.asarray(target.sample(next_states[order], rng), dtype=np.int64)


def train_qtd(data, env, setting: str, config: QTDConfig, rng, target=None) -> QuantileModel:
    """Fit a QTD model on 1-step transitions.

    ``data`` needs ``states``, ``actions``, ``rewards`` and ``next_states``
    arrays. Transitions stream in a fresh random order on each pass. In the
    off-policy setting, or whenever ``config.state_action`` is set, the model
    is state-action and bootstraps through actions drawn from ``target``.
    """
    n = len(data.rewards)
    if n == 0:
        raise ValueError("empty training split")
    if setting not in ("on", "off"):
        raise ValueError(f"unknown setting {setting!r}")
    state_action = config.state_action if config.state_action is not None else setting == "off"
    if state_action and target is None:
        raise ValueError("state-action training needs the target policy")
    n_heads = env.n_actions if state_action else 1
    actions = (np.asarray(data.actions, dtype=np.int64) if state_action
               else np.zeros(n, dtype=np.int64))
    rewards = np.asarray(data.rewards, dtype=float)

    if config.backend == "tabular":
        model = TabularQuantileModel(env.n_states, n_heads, config.m, env.gamma, config.rho)
        s = env.state_index(data.states)
        s2 = env.state_index(data.next_states)
        for p in range(config.passes):
            order = rng.permutation(n)
            a2 = _bootstrap_actions(model, target, data.next_states, order, rng)
            stop = _tabular_sweep(model.theta, s, actions, rewards, s2, a2, order,
                                  model.rho, model.gamma, model.tau, DIVERGENCE_LIMIT)
            if stop >= 0:
                raise DivergenceError(
                    f"tabular QTD diverged on pass {p}, update {stop} (rho={model.rho})")
        return model

    if config.backend == "linear":
        x = np.asarray(data.states, dtype=float).reshape(n, -1)
        model = LinearQuantileModel(x.shape[1], n_heads, config.m, env.gamma, config.rho,
                                    config.ridge, offset=x.mean(axis=0))
        for p in range(config.passes):
            order = rng.permutation(n)
            a2 = _bootstrap_actions(model, target, data.next_states, order, rng)
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                model.gradient_step(data.states[idx], actions[idx], rewards[idx],
                                    data.next_states[idx], a2[start:start + config.batch_size])
            model.check_finite()
        return model

    if config.backend == "mlp":
        from .mlp import train_mlp_qtd

        return train_mlp_qtd(data, env, n_heads, actions, rewards, config, rng, target)

    raise ValueError(f"unknown QTD backend {config.backend!r}")

