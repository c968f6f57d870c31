"""Importance weights between calibration segments and test-time starts.

The state ratio ``dP0/dP_cal`` comes from classifier odds: initial states
are labelled 1 and all visited states 0. Off-policy weights multiply the
state ratio at the segment start by the k-step action likelihood ratio
between the target policy and an estimated behavior policy.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.neural_network import MLPClassifier

from .policies import Policy

DEFAULT_CAP = 50.0
DEFAULT_FLOOR = 0.01


class StateRatio:
    """Classifier-odds estimate of ``dP0(s) / dP_cal(s)`` up to a constant."""

    def __init__(self, classifier, featurize, prior_odds: float = 1.0):
        self.classifier = classifier
        self.featurize = featurize
        self.prior_odds = prior_odds

    def __call__(self, states) -> np.ndarray:
        n = np.asarray(states).shape[0]
        if self.classifier is None:
            return np.ones(n)
        logit = self.classifier.decision_function(self.featurize(states))
        return np.exp(logit) / self.prior_odds


def fit_onpolicy_weight(test_like_states, calibration_states, featurize=None) -> StateRatio:
    """Logistic regression of ``delta`` on state features; weight = odds.

    The class-prior odds are divided out, so the ratio estimates
    ``dP0/dP_cal`` itself rather than a multiple of it.
    """
    featurize = featurize or _raw_features
    x1 = featurize(test_like_states)
    x0 = featurize(calibration_states)
    if len(x1) == 0 or len(x0) == 0:
        raise ValueError("both state samples must be nonempty")
    x = np.vstack([x1, x0])
    y = np.r_[np.ones(len(x1)), np.zeros(len(x0))]
    if np.all(x == x[0]):
        warnings.warn("states carry no information to classify; using unit weights", stacklevel=2)
        return StateRatio(None, featurize)
    clf = LogisticRegression(penalty=None, tol=1e-8, max_iter=10000)
    clf.fit(x, y)
    return StateRatio(clf, featurize, prior_odds=len(x1) / len(x0))


def _raw_features(states):
    s = np.asarray(states, dtype=float)
    return s.reshape(s.shape[0], -1)


class BehaviorPolicyEstimate(Policy):
    """Estimated ``pi_b(a | s)`` with every probability kept above ``floor``."""

    def __init__(self, n_actions, table=None, classifier=None, featurize=None,
                 floor: float = DEFAULT_FLOOR, state_index=None):
        self.n_actions = int(n_actions)
        self.table = table
        self.classifier = classifier
        self.featurize = featurize or _raw_features
        self.floor = float(floor)
        self.state_index = state_index

    def probs(self, states):
        if self.table is not None:
            p = self.table[self.state_index(states)]
        else:
            raw = self.classifier.predict_proba(self.featurize(states))
            p = np.zeros((raw.shape[0], self.n_actions))
            p[:, self.classifier.classes_.astype(int)] = raw
        return apply_floor(p, self.floor)


def apply_floor(p, floor: float) -> np.ndarray:
    """Raise entries below ``floor`` to it, taking the mass from the others.

    Rows already above the floor are unchanged; every output row sums to
    one and stays in ``[floor, 1]``.
    """
    p = np.asarray(p, dtype=float)
    p = p / p.sum(axis=1, keepdims=True)
    if floor * p.shape[1] > 1:
        raise ValueError(f"floor {floor} is infeasible with {p.shape[1]} actions")
    fixed = np.zeros(p.shape, dtype=bool)
    for _ in range(p.shape[1]):
        low = (p < floor) & ~fixed
        if not low.any():
            break
        fixed |= low
        free = np.where(fixed, 0.0, p)
        budget = 1.0 - floor * fixed.sum(axis=1, keepdims=True)
        total = free.sum(axis=1, keepdims=True)
        scale = np.divide(budget, total, out=np.zeros_like(total), where=total > 0)
        p = np.where(fixed, floor, free * scale)
    return p


def fit_behavior_policy(transitions, env, model: str = "auto", floor: float = DEFAULT_FLOOR,
                        seed=0) -> BehaviorPolicyEstimate:
    """Estimate the logging policy from training ``(state, action)`` pairs.

    ``model`` is ``"table"`` (add-one smoothed counts, discrete states),
    ``"logistic"`` or ``"mlp"`` (32-32 hidden units); ``"auto"`` picks the
    table when the environment has a state index and the mlp otherwise.
    """
    if len(transitions) == 0:
        raise ValueError("no transitions to estimate the behavior policy from")
    A = env.n_actions
    if model == "auto":
        model = "table" if env.n_states is not None else "mlp"
    if model == "table":
        idx = env.state_index(transitions.states)
        counts = np.zeros((env.n_states, A))
        np.add.at(counts, (idx, np.asarray(transitions.actions, dtype=np.int64)), 1.0)
        table = (counts + 1.0) / (counts.sum(axis=1, keepdims=True) + A)
        return BehaviorPolicyEstimate(A, table=table, floor=floor, state_index=env.state_index)
    x = env.features(transitions.states)
    y = np.asarray(transitions.actions, dtype=np.int64)
    if model == "logistic":
        clf = LogisticRegression(C=1e4, tol=1e-8, max_iter=10000)
    elif model == "mlp":
        clf = MLPClassifier(hidden_layer_sizes=(32, 32), max_iter=500, early_stopping=True,
                            random_state=seed)
    else:
        raise ValueError(f"unknown behavior model {model!r}")
    if np.unique(y).size < 2:
        table = np.zeros((1, A))
        table[0, y[0]] = 1.0
        return BehaviorPolicyEstimate(A, table=table, floor=floor,
                                      state_index=lambda s: np.zeros(len(s), dtype=np.int64))
    clf.fit(x, y)
    return BehaviorPolicyEstimate(A, classifier=clf, featurize=env.features, floor=floor)


def action_ratio(states, actions, target: Policy, bhat: Policy) -> np.ndarray:
    """``prod_h target(a_h | s_h) / bhat(a_h | s_h)`` for ``(n, k)`` segment arrays."""
    n, k = actions.shape
    flat_s = states.reshape((n * k,) + states.shape[2:])
    flat_a = actions.reshape(-1)
    rows = np.arange(n * k)
    ratio = target.probs(flat_s)[rows, flat_a] / bhat.probs(flat_s)[rows, flat_a]
    return ratio.reshape(n, k).prod(axis=1)


def offpolicy_weight(seg, w_on: StateRatio, target: Policy, bhat: Policy) -> float:
    """Unnormalized segment weight: state ratio at the start times action ratio."""
    k = seg.k
    states = np.asarray(seg.states)[None, :k]
    actions = np.asarray(seg.actions, dtype=np.int64)[None, :]
    return float(w_on(np.asarray(seg.states)[None, 0])[0]
                 * action_ratio(states, actions, target, bhat)[0])


@dataclass
class WeightDiagnostics:
    min: float
    max: float
    mean: float
    ess: float
    cap_hits: int

    columns = ("w_min", "w_max", "w_mean", "w_ess", "w_cap_hits")

    def row(self):
        return (self.min, self.max, self.mean, self.ess, self.cap_hits)


def normalize_weights(raw, cap: float = DEFAULT_CAP):
    """Scale to mean one, clip at ``cap``, rescale to mean one."""
    raw = np.asarray(raw, dtype=float)
    if np.any(raw < 0) or not np.isfinite(raw).all():
        raise ValueError("importance weights must be finite and nonnegative")
    total = raw.mean()
    if total <= 0:
        raise ValueError("all importance weights are zero")
    w = raw / total
    hits = int(np.sum(w > cap))
    if hits:
        w = np.minimum(w, cap)
        w = w / w.mean()
    diag = WeightDiagnostics(float(w.min()), float(w.max()), float(w.mean()),
                             float(w.sum() ** 2 / np.sum(w ** 2)), hits)
    return w, diag


class WeightFn:
    """Importance weights for a replay buffer.

    ``variant="on"`` weighs segments by the state ratio at their start;
    ``variant="off"`` also multiplies the action likelihood ratio.
    """

    def __init__(self, state_ratio: StateRatio, variant: str = "on", target: Policy | None = None,
                 bhat: Policy | None = None, cap: float = DEFAULT_CAP):
        if variant not in ("on", "off"):
            raise ValueError(f"unknown weight variant {variant!r}")
        if variant == "off" and (target is None or bhat is None):
            raise ValueError("off-policy weights need the target and behavior policies")
        self.state_ratio = state_ratio
        self.variant = variant
        self.target = target
        self.bhat = bhat
        self.cap = cap

    def raw(self, buffer) -> np.ndarray:
        w = self.state_ratio(buffer.start_states)
        if self.variant == "off":
            k = buffer.k
            w = w * action_ratio(buffer.states[:, :k], buffer.actions.astype(np.int64),
                                 self.target, self.bhat)
        return w

    def __call__(self, buffer):
        """Normalized weights and their diagnostics."""
        return normalize_weights(self.raw(buffer), self.cap)
