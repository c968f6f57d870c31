"""Train/calibration splits, k-step replay buffers and pseudo-returns."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .envs import TrajectoryBatch


@dataclass
class TransitionSet:
    """Flat one-step transitions used to train the return model."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    trajectory_ids: np.ndarray
    times: np.ndarray

    def __len__(self):
        return len(self.rewards)


@dataclass(frozen=True)
class Segment:
    states: np.ndarray   # k + 1 states
    actions: np.ndarray  # k actions
    rewards: np.ndarray  # k rewards
    trajectory_id: int
    t: int

    @property
    def k(self):
        return len(self.rewards)


@dataclass
class ReplayBuffer:
    """Calibration segments sharing one step width ``k``.

    ``states`` is ``(n, k + 1, *state_shape)``; ``actions`` and ``rewards``
    are ``(n, k)``; ``origin`` holds ``(trajectory_id, t)`` rows.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    origin: np.ndarray
    k: int
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return self.rewards.shape[0]

    def __getitem__(self, i) -> Segment:
        return Segment(self.states[i], self.actions[i], self.rewards[i],
                       int(self.origin[i, 0]), int(self.origin[i, 1]))

    @property
    def start_states(self):
        return self.states[:, 0]

    @property
    def end_states(self):
        return self.states[:, self.k]

    def discounted_head(self, gamma):
        return self.rewards @ (gamma ** np.arange(self.k))

    def export(self, path):
        """Write one tab-separated row per segment.

        Columns are ``trajectory_id``, ``t``, then ``s0..sk`` (vector states
        comma-joined), ``a0..a{k-1}`` and ``r0..r{k-1}``.
        """
        k = self.k
        header = (["trajectory_id", "t"] + [f"s{h}" for h in range(k + 1)]
                  + [f"a{h}" for h in range(k)] + [f"r{h}" for h in range(k)])
        with open(path, "w") as fh:
            fh.write("\t".join(header) + "\n")
            for i in range(len(self)):
                states = [_fmt_state(self.states[i, h]) for h in range(k + 1)]
                row = ([str(int(self.origin[i, 0])), str(int(self.origin[i, 1]))] + states
                       + [str(int(a)) for a in self.actions[i]]
                       + [repr(float(r)) for r in self.rewards[i]])
                fh.write("\t".join(row) + "\n")


def _fmt_state(s):
    s = np.asarray(s)
    if s.ndim == 0:
        return repr(s.item())
    return ",".join(repr(v.item()) for v in s.ravel())


def segment_times(T: int, k: int) -> np.ndarray:
    """Valid segment start times: ``S_{t+k}`` must be a recorded departure state."""
    if k < 1:
        raise ValueError("step width k must be at least 1")
    if k > T - 1:
        raise ValueError(f"step width k={k} needs trajectories longer than {k} steps (T={T})")
    return np.arange(T - k)


def _segments(batch: TrajectoryBatch, rows, times, k, metadata):
    offsets = np.arange(k + 1)
    states = batch.states[rows[:, None], times[:, None] + offsets]
    actions = batch.actions[rows[:, None], times[:, None] + offsets[:-1]]
    rewards = batch.rewards[rows[:, None], times[:, None] + offsets[:-1]]
    origin = np.column_stack([batch.ids[rows], times])
    return ReplayBuffer(states, actions, rewards, origin, k, dict(metadata))


def _transitions(batch: TrajectoryBatch, rows, times):
    return TransitionSet(batch.states[rows, times], batch.actions[rows, times],
                         batch.rewards[rows, times], batch.states[rows, times + 1],
                         batch.ids[rows], times)


def build_buffers(batch: TrajectoryBatch, k: int, rng, split: str = "trajectory",
                  train_fraction: float = 0.5, metadata=None):
    """Split data into training transitions and a k-step calibration buffer.

    ``split="trajectory"`` sends whole trajectories to one side;
    ``split="tuple"`` assigns each ``(i, t)`` index independently. The two
    index sets are disjoint either way.
    """
    N, T = batch.n, batch.horizon
    valid = segment_times(T, k)
    metadata = dict(metadata or {}, split=split)
    if split == "trajectory":
        perm = rng.permutation(N)
        n_tr = int(round(train_fraction * N))
        tr_rows, cal_rows = np.sort(perm[:n_tr]), np.sort(perm[n_tr:])
        rows_tr = np.repeat(tr_rows, T)
        times_tr = np.tile(np.arange(T), tr_rows.size)
        rows_cal = np.repeat(cal_rows, valid.size)
        times_cal = np.tile(valid, cal_rows.size)
    elif split == "tuple":
        to_train = rng.random((N, T)) < train_fraction
        rows_tr, times_tr = np.nonzero(to_train)
        cal_mask = ~to_train
        cal_mask[:, valid.size:] = False
        rows_cal, times_cal = np.nonzero(cal_mask)
    else:
        raise ValueError(f"unknown split rule {split!r}")
    return _transitions(batch, rows_tr, times_tr), _segments(batch, rows_cal, times_cal, k, metadata)


def pseudo_return(seg: Segment, model, target, gamma: float, rng) -> float:
    """Discounted observed rewards plus a discounted tail draw at ``S_{t+k}``."""
    k = seg.k
    head = float(np.asarray(seg.rewards) @ (gamma ** np.arange(k)))
    tail = model.sample(np.asarray(seg.states[k])[None, ...], rng, target)[0]
    return head + gamma ** k * float(tail)


def pseudo_returns(buffer: ReplayBuffer, idx, model, target, gamma: float, rng) -> np.ndarray:
    """Vectorized :func:`pseudo_return` over buffer rows ``idx``."""
    idx = np.asarray(idx)
    head = buffer.rewards[idx] @ (gamma ** np.arange(buffer.k))
    tail = model.sample(buffer.states[idx, buffer.k], rng, target)
    return head + gamma ** buffer.k * tail
