"""Stochastic policies over discrete action sets.

Every policy works on batches: ``probs(states)`` returns an ``(n, n_actions)``
array whose rows sum to one and ``sample(states, rng)`` draws one action per
row. States are whatever array layout the matching environment uses.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


class Policy:
    """Base class. Subclasses implement :meth:`probs`."""

    n_actions: int = 2

    def probs(self, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        p = self.probs(states)
        u = rng.random(p.shape[0])
        # inverse-CDF draw, one uniform per row
        a = (u[:, None] >= np.cumsum(p, axis=1)).sum(axis=1)
        return np.minimum(a, self.n_actions - 1)


class SwitchPolicy(Policy):
    """Two-state chain policy: action 1 switches state, action 0 stays.

    ``p12`` is the switch probability from x1 (index 0) and ``p21`` from x2
    (index 1). For vector states only ``states[:, component]`` is read.
    """

    n_actions = 2

    def __init__(self, p12: float, p21: float, component: int = 0):
        for p in (p12, p21):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"switch probability {p} outside [0, 1]")
        self.p12 = float(p12)
        self.p21 = float(p21)
        self.component = component

    def probs(self, states):
        s = np.asarray(states)
        if s.ndim > 1:
            s = s[:, self.component]
        p_switch = np.where(s == 0, self.p12, self.p21)
        return np.column_stack([1.0 - p_switch, p_switch])

    def __repr__(self):
        return f"SwitchPolicy(p12={self.p12}, p21={self.p21})"


class SigmoidMixturePolicy(Policy):
    """``P(A=1 | s) = w1 * sigmoid(s_1) + w2 * sigmoid(s_2)``."""

    n_actions = 2

    def __init__(self, w1: float = 0.5, w2: float = 0.5):
        if w1 < 0 or w2 < 0 or w1 + w2 > 1 + 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to at most 1")
        self.w1 = float(w1)
        self.w2 = float(w2)

    def probs(self, states):
        s = np.asarray(states, dtype=float)
        p1 = self.w1 * expit(s[:, 0]) + self.w2 * expit(s[:, 1])
        return np.column_stack([1.0 - p1, p1])

    def __repr__(self):
        return f"SigmoidMixturePolicy(w1={self.w1}, w2={self.w2})"


class UniformPolicy(Policy):
    def __init__(self, n_actions: int):
        self.n_actions = int(n_actions)

    def probs(self, states):
        n = np.asarray(states).shape[0]
        return np.full((n, self.n_actions), 1.0 / self.n_actions)


class GreedyPolicy(Policy):
    """Deterministic policy ``argmax_a q(s, a)`` for a batched Q function."""

    def __init__(self, q_fn, n_actions: int):
        self.q_fn = q_fn
        self.n_actions = int(n_actions)

    def actions(self, states):
        return np.argmax(self.q_fn(states), axis=1)

    def probs(self, states):
        a = self.actions(states)
        p = np.zeros((a.shape[0], self.n_actions))
        p[np.arange(a.shape[0]), a] = 1.0
        return p

    def sample(self, states, rng):
        return self.actions(states)


class MixturePolicy(Policy):
    """``a * first + (1 - a) * second``."""

    def __init__(self, a: float, first: Policy, second: Policy):
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"mixture weight {a} outside [0, 1]")
        if first.n_actions != second.n_actions:
            raise ValueError("mixed policies must share the action set")
        self.a = float(a)
        self.first = first
        self.second = second
        self.n_actions = first.n_actions

    def probs(self, states):
        return self.a * self.first.probs(states) + (1.0 - self.a) * self.second.probs(states)

    def sample(self, states, rng):
        n = np.asarray(states).shape[0]
        pick_first = rng.random(n) < self.a
        out = self.second.sample(states, rng)
        if pick_first.any():
            out[pick_first] = self.first.sample(np.asarray(states)[pick_first], rng)
        return out

    def __repr__(self):
        return f"MixturePolicy(a={self.a}, {self.first!r}, {self.second!r})"


def policy_prob(policy: Policy, s, a: int) -> float:
    """Probability ``policy(a | s)`` for a single state ``s``."""
    if not 0 <= int(a) < policy.n_actions or int(a) != a:
        raise ValueError(f"unknown action {a!r} for a policy with {policy.n_actions} actions")
    states = np.asarray(s)[None, ...]
    return float(policy.probs(states)[0, int(a)])
