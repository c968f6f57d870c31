"""Q-learning with radial basis features, used to obtain a reasonable
mountain car controller that the behavior and target policies are mixed from."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import MountainCarEnv
from .policies import GreedyPolicy


class TrainingError(RuntimeError):
    pass


@dataclass
class RBFConfig:
    scales: tuple = (5.0, 2.0, 1.0, 0.5)
    centers_per_scale: int = 100
    learning_rate: float = 0.01
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay: float = 0.9
    max_steps: int = 1000
    validation_rollouts: int = 100
    validation_budget: int = 400
    validation_success: float = 0.95


class RBFFeatures:
    """Gaussian bumps ``exp(-scale * |z - c|^2)`` on standardized states."""

    def __init__(self, centers, scales, mean, std):
        self.centers = centers      # (n_scales, n_centers, 2)
        self.scales = np.asarray(scales, dtype=float)
        self.mean = mean
        self.std = std

    @classmethod
    def fit(cls, states, config: RBFConfig, rng):
        mean, std = states.mean(axis=0), states.std(axis=0)
        z = (states - mean) / std
        idx = rng.integers(0, len(z), (len(config.scales), config.centers_per_scale))
        return cls(z[idx], config.scales, mean, std)

    @property
    def dim(self):
        return self.centers.shape[0] * self.centers.shape[1]

    def __call__(self, states):
        z = (np.atleast_2d(states) - self.mean) / self.std
        d2 = ((z[:, None, None, :] - self.centers[None]) ** 2).sum(-1)
        return np.exp(-self.scales[None, :, None] * d2).reshape(z.shape[0], -1)


class LinearQ:
    def __init__(self, features: RBFFeatures, n_actions: int):
        self.features = features
        self.weights = np.zeros((n_actions, features.dim))

    def __call__(self, states):
        return self.features(states) @ self.weights.T


def _rollout_steps(env, policy, rng, n, budget):
    s = env.initial_states(n, rng)
    steps = np.full(n, budget + 1)
    for t in range(budget):
        alive = ~env.at_goal(s)
        if not alive.any():
            break
        a = np.zeros(n, dtype=np.int64)
        a[alive] = policy.sample(s[alive], rng)
        _, s = env.step(s, a)
        reached = alive & env.at_goal(s)
        steps[reached] = t + 1
    return steps


def fit_q_policy(env: MountainCarEnv, episodes: int = 200, config: RBFConfig | None = None,
                 seed=0) -> GreedyPolicy:
    """Train a greedy linear-RBF Q policy; raise if validation rollouts fail.

    Zero-initialized weights are optimistic under the -1 reward, which drives
    exploration even once epsilon has decayed.
    """
    if not isinstance(env, MountainCarEnv):
        raise TypeError("fit_q_policy expects the mountain car environment")
    config = config or RBFConfig()
    rng = np.random.default_rng(seed)
    sample = np.column_stack([rng.uniform(env.min_position, env.max_position, 10000),
                              rng.uniform(-env.max_speed, env.max_speed, 10000)])
    q = LinearQ(RBFFeatures.fit(sample, config, rng), env.n_actions)
    gamma = env.gamma

    for ep in range(episodes):
        eps = max(config.eps_end, config.eps_start * config.eps_decay ** ep)
        s = env.initial_states(1, rng)
        phi = q.features(s)[0]
        for _ in range(config.max_steps):
            values = q.weights @ phi
            a = int(rng.integers(env.n_actions)) if rng.random() < eps else int(np.argmax(values))
            r, s2 = env.step(s, np.array([a]))
            done = bool(env.at_goal(s2)[0])
            phi2 = q.features(s2)[0]
            target = r[0] if done else r[0] + gamma * np.max(q.weights @ phi2)
            q.weights[a] += config.learning_rate * (target - values[a]) * phi
            if done:
                break
            s, phi = s2, phi2

    policy = GreedyPolicy(q, env.n_actions)
    steps = _rollout_steps(env, policy, rng, config.validation_rollouts, config.validation_budget)
    success = float(np.mean(steps <= config.validation_budget))
    if success < config.validation_success:
        raise TrainingError(
            f"greedy Q policy reached the goal in only {success:.0%} of validation rollouts")
    policy.validation_success = success
    return policy
