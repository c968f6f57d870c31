"""Simulation environments and trajectory generation.

All environments are batched: ``initial_states(n, rng)`` and
``step(states, actions, rng) -> (rewards, next_states)`` operate on arrays
with a leading batch axis so that many trajectories or Monte Carlo rollouts
advance in lockstep.

State layouts
-------------
two-state     int array ``(n,)``; 0 is x1, 1 is x2
continuous    float array ``(n, 2)``
mountain-car  float array ``(n, 2)`` holding (position, velocity)
high-dim      int8 array ``(n, 50)``; each entry 0 (x1) or 1 (x2)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .policies import Policy, SigmoidMixturePolicy, SwitchPolicy, UniformPolicy


class Environment:
    name = "base"
    gamma: float = 0.8
    n_actions: int = 2
    # number of distinct states for tabular models; None when continuous
    n_states: int | None = None
    default_policy: Policy | None = None

    def initial_states(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def step(self, states, actions, rng):
        raise NotImplementedError

    def features(self, states) -> np.ndarray:
        """Real-valued feature matrix ``(n, d)`` for classifiers and linear models."""
        s = np.asarray(states, dtype=float)
        return s.reshape(s.shape[0], -1)

    def state_index(self, states) -> np.ndarray:
        """Integer index of each state, only for environments with ``n_states``."""
        raise TypeError(f"{self.name} has no tabular state index")

    def empty_states(self, n: int) -> np.ndarray:
        return np.zeros((n,) + self.state_shape, dtype=self.state_dtype)

    state_shape: tuple = ()
    state_dtype = float


def _check_gamma(gamma):
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"discount {gamma} must lie in (0, 1)")
    return float(gamma)


class TwoStateEnv(Environment):
    """Two-state chain with Gaussian rewards that depend on the departing state.

    Action 1 moves to the other state and action 0 stays, so the switch
    probabilities live in a :class:`SwitchPolicy`. Rewards are N(2, 1) out of
    x1 and N(1, 1) out of x2, whatever the landing state.
    """

    name = "two-state"
    n_actions = 2
    n_states = 2
    state_shape = ()
    state_dtype = np.int64
    reward_means = np.array([2.0, 1.0])

    def __init__(self, default_policy: Policy | None = None, gamma: float = 0.8,
                 initial_probs=(0.5, 0.5)):
        self.gamma = _check_gamma(gamma)
        self.default_policy = default_policy
        self.initial_probs = np.asarray(initial_probs, dtype=float)

    def initial_states(self, n, rng):
        return (rng.random(n) < self.initial_probs[1]).astype(np.int64)

    def step(self, states, actions, rng):
        s = np.asarray(states)
        r = self.reward_means[s] + rng.standard_normal(s.shape[0])
        return r, np.where(np.asarray(actions) == 1, 1 - s, s)

    def state_index(self, states):
        return np.asarray(states, dtype=np.int64)


def make_two_state_env(p12: float, p21: float, gamma: float = 0.8) -> TwoStateEnv:
    """Two-state chain whose switch probabilities are ``p12`` (x1 to x2) and ``p21``."""
    return TwoStateEnv(SwitchPolicy(p12, p21), gamma=gamma)


class ContinuousEnv(Environment):
    """Two-dimensional linear-Gaussian system with a binary action.

    ``s1' = c1 (2a - 1) s1 + z1`` and ``s2' = c2 (1 - 2a) s2 + z2`` with
    ``z ~ N(0, I/4)``; reward ``2 s1' + s2' - (2a - 1) / 4``; ``s0 ~ N(0, I)``.
    """

    name = "continuous"
    n_actions = 2
    state_shape = (2,)

    def __init__(self, coef1: float = 0.75, coef2: float = 3.0, gamma: float = 0.8,
                 default_policy: Policy | None = None):
        self.coef1 = float(coef1)
        self.coef2 = float(coef2)
        self.gamma = _check_gamma(gamma)
        self.default_policy = default_policy or SigmoidMixturePolicy(0.5, 0.5)

    def initial_states(self, n, rng):
        return rng.standard_normal((n, 2))

    def transition(self, states, actions, noise):
        s = np.asarray(states, dtype=float)
        sign = 2.0 * np.asarray(actions, dtype=float) - 1.0
        nxt = np.empty_like(s)
        nxt[:, 0] = self.coef1 * sign * s[:, 0] + noise[:, 0]
        nxt[:, 1] = -self.coef2 * sign * s[:, 1] + noise[:, 1]
        r = 2.0 * nxt[:, 0] + nxt[:, 1] - sign / 4.0
        return r, nxt

    def step(self, states, actions, rng):
        noise = 0.5 * rng.standard_normal((np.asarray(states).shape[0], 2))
        return self.transition(states, actions, noise)


def make_continuous_env(coef2: float = 3.0, gamma: float = 0.8) -> ContinuousEnv:
    return ContinuousEnv(coef2=coef2, gamma=gamma)


class MountainCarEnv(Environment):
    """Classic mountain car with three actions (push left, none, push right).

    Reward is -1 per step until the position reaches 0.5; the goal is then an
    absorbing state with zero reward.
    """

    name = "mountain-car"
    n_actions = 3
    state_shape = (2,)
    min_position, max_position = -1.2, 0.6
    max_speed = 0.07
    goal_position = 0.5
    force = 0.001
    gravity = 0.0025

    def __init__(self, gamma: float = 0.99, default_policy: Policy | None = None):
        self.gamma = _check_gamma(gamma)
        self.default_policy = default_policy or UniformPolicy(3)

    def initial_states(self, n, rng):
        s = np.zeros((n, 2))
        s[:, 0] = rng.uniform(-0.6, -0.4, n)
        return s

    def at_goal(self, states):
        return np.asarray(states)[:, 0] >= self.goal_position

    def dynamics(self, states, actions):
        s = np.asarray(states, dtype=float)
        pos, vel = s[:, 0], s[:, 1]
        vel = vel + (np.asarray(actions) - 1) * self.force + np.cos(3 * pos) * (-self.gravity)
        vel = np.clip(vel, -self.max_speed, self.max_speed)
        pos = np.clip(pos + vel, self.min_position, self.max_position)
        vel = np.where((pos == self.min_position) & (vel < 0), 0.0, vel)
        return np.column_stack([pos, vel])

    def step(self, states, actions, rng=None):
        s = np.asarray(states, dtype=float)
        done = self.at_goal(s)
        nxt = self.dynamics(s, actions)
        nxt[done] = s[done]
        return np.where(done, 0.0, -1.0), nxt

    def features(self, states):
        s = np.asarray(states, dtype=float)
        # rescale to comparable ranges; raw velocity is two orders smaller
        return np.column_stack([s[:, 0], s[:, 1] / self.max_speed])


def make_mountain_car_env(gamma: float = 0.99) -> MountainCarEnv:
    return MountainCarEnv(gamma=gamma)


class HighDimEnv(Environment):
    """Fifty binary components; only the first is driven by the action.

    Component 0 follows the two-state chain (action 1 switches it); every
    other component is redrawn uniformly from {x1, x2} each step. Rewards
    are those of the two-state chain, read off component 0.
    """

    name = "high-dim"
    n_actions = 2
    dim = 50
    state_shape = (50,)
    state_dtype = np.int8

    def __init__(self, default_policy: Policy | None = None, gamma: float = 0.8):
        self.gamma = _check_gamma(gamma)
        self.default_policy = default_policy or SwitchPolicy(0.4, 0.8)

    def initial_states(self, n, rng):
        return rng.integers(0, 2, (n, self.dim), dtype=np.int8)

    def step(self, states, actions, rng):
        s = np.asarray(states)
        n = s.shape[0]
        first = s[:, 0]
        r = TwoStateEnv.reward_means[first] + rng.standard_normal(n)
        nxt = rng.integers(0, 2, (n, self.dim), dtype=np.int8)
        nxt[:, 0] = np.where(np.asarray(actions) == 1, 1 - first, first)
        return r, nxt


def make_high_dim_env(gamma: float = 0.8) -> HighDimEnv:
    return HighDimEnv(gamma=gamma)


@dataclass(frozen=True)
class Transition:
    s: object
    a: int
    r: float
    s_next: object
    t: int
    trajectory_id: int


@dataclass
class Trajectory:
    """``states`` has ``T + 1`` rows; ``actions`` and ``rewards`` have ``T``."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    trajectory_id: int = 0

    def __len__(self):
        return len(self.actions)

    def __getitem__(self, t) -> Transition:
        if not 0 <= t < len(self):
            raise IndexError(t)
        return Transition(self.states[t], int(self.actions[t]), float(self.rewards[t]),
                          self.states[t + 1], t, self.trajectory_id)

    def __iter__(self) -> Iterator[Transition]:
        return (self[t] for t in range(len(self)))


@dataclass
class TrajectoryBatch:
    """N trajectories of equal length stored as stacked arrays.

    ``states`` is ``(N, T + 1, *state_shape)``; ``actions`` and ``rewards`` are
    ``(N, T)``.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.ids is None:
            self.ids = np.arange(self.states.shape[0])

    @property
    def n(self):
        return self.actions.shape[0]

    @property
    def horizon(self):
        return self.actions.shape[1]

    def __getitem__(self, i) -> Trajectory:
        return Trajectory(self.states[i], self.actions[i], self.rewards[i], int(self.ids[i]))

    def subset(self, idx) -> "TrajectoryBatch":
        return TrajectoryBatch(self.states[idx], self.actions[idx], self.rewards[idx], self.ids[idx])


def sample_trajectories(env: Environment, policy: Policy | None, n: int, T: int,
                        rng: np.random.Generator, initial_states=None) -> TrajectoryBatch:
    """Roll out ``n`` trajectories of ``T`` steps each under ``policy``."""
    if T < 1:
        raise ValueError("trajectory length T must be at least 1")
    policy = policy or env.default_policy
    s = env.initial_states(n, rng) if initial_states is None else np.asarray(initial_states)
    states = np.empty((n, T + 1) + s.shape[1:], dtype=s.dtype)
    actions = np.empty((n, T), dtype=np.int64)
    rewards = np.empty((n, T))
    states[:, 0] = s
    for t in range(T):
        a = policy.sample(s, rng)
        r, s = env.step(s, a, rng)
        actions[:, t] = a
        rewards[:, t] = r
        states[:, t + 1] = s
    return TrajectoryBatch(states, actions, rewards)


def sample_trajectory(env: Environment, policy: Policy | None, T: int, seed) -> Trajectory:
    """One trajectory; ``seed`` is anything :func:`numpy.random.default_rng` accepts."""
    rng = np.random.default_rng(seed)
    return sample_trajectories(env, policy, 1, T, rng)[0]
