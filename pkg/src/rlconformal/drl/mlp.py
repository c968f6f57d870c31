"""Neural quantile TD for continuous states (torch, CPU)."""

from __future__ import annotations

import copy

import numpy as np
import torch
from torch import nn

from .qtd import QuantileModel


def _network(in_dim, hidden, out_dim):
    layers, width = [], in_dim
    for h in hidden:
        layers += [nn.Linear(width, h), nn.ReLU()]
        width = h
    layers.append(nn.Linear(width, out_dim))
    return nn.Sequential(*layers)


class MLPQuantileModel(QuantileModel):
    backend = "mlp"

    def __init__(self, in_dim: int, n_heads: int = 2, m: int = 30, gamma: float = 0.8,
                 rho: float = 1e-3, hidden=(32, 32), kappa: float = 1.0):
        super().__init__(m, n_heads, gamma, rho)
        self.in_dim = int(in_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.kappa = float(kappa)
        self.net = _network(self.in_dim, self.hidden, self.n_heads * self.m).double()

    def _forward(self, states, net=None):
        x = torch.as_tensor(np.asarray(states, dtype=float).reshape(len(states), -1))
        return (net or self.net)(x).view(-1, self.n_heads, self.m)

    def raw_particles(self, states):
        with torch.no_grad():
            return self._forward(states).numpy()

    def parameters_array(self):
        return np.concatenate([p.detach().numpy().ravel() for p in self.net.parameters()])

    def state_arrays(self):
        return [p.detach().numpy().copy() for p in self.net.state_dict().values()]

    def load_arrays(self, arrays):
        keys = list(self.net.state_dict().keys())
        self.net.load_state_dict({k: torch.as_tensor(a) for k, a in zip(keys, arrays)})


def quantile_huber_loss(pred, targets, tau, kappa):
    """QR-DQN loss: ``pred`` is ``(n, m)``, ``targets`` is ``(n, m')``."""
    u = targets[:, None, :] - pred[:, :, None]
    abs_u = u.abs()
    if kappa > 0:
        huber = torch.where(abs_u <= kappa, 0.5 * u ** 2, kappa * (abs_u - 0.5 * kappa)) / kappa
    else:
        huber = abs_u
    weight = (tau[None, :, None] - (u.detach() < 0).double()).abs()
    return (weight * huber).mean(dim=2).sum(dim=1).mean()


def train_mlp_qtd(data, env, n_heads, actions, rewards, config, rng, target=None):
    """Mini-batch QTD with a target network refreshed every epoch."""
    torch.manual_seed(int(rng.integers(2**31)))
    states = np.asarray(data.states, dtype=float).reshape(len(rewards), -1)
    next_states = np.asarray(data.next_states, dtype=float).reshape(len(rewards), -1)
    model = MLPQuantileModel(states.shape[1], n_heads, config.m, env.gamma, config.lr,
                             config.hidden, config.kappa)
    if config.optimizer == "adam":
        opt = torch.optim.Adam(model.net.parameters(), lr=config.lr)
    else:
        opt = torch.optim.SGD(model.net.parameters(), lr=config.lr, momentum=config.momentum)
    tau = torch.as_tensor(model.tau)
    s_t = torch.as_tensor(states)
    s2_t = torch.as_tensor(next_states)
    a_t = torch.as_tensor(actions)
    r_t = torch.as_tensor(rewards)
    n = len(rewards)
    for epoch in range(config.epochs):
        frozen = copy.deepcopy(model.net)
        order = rng.permutation(n)
        if model.state_action:
            a2 = torch.as_tensor(np.asarray(target.sample(data.next_states[order], rng)))
        else:
            a2 = torch.zeros(n, dtype=torch.int64)
        for start in range(0, n, config.batch_size):
            sl = slice(start, start + config.batch_size)
            idx = torch.as_tensor(order[sl])
            with torch.no_grad():
                nxt = frozen(s2_t[idx]).view(-1, n_heads, model.m)
                nxt = nxt[torch.arange(len(idx)), a2[sl]]
                targets = r_t[idx, None] + model.gamma * nxt
            pred = model.net(s_t[idx]).view(-1, n_heads, model.m)[torch.arange(len(idx)), a_t[idx]]
            loss = quantile_huber_loss(pred, targets, tau, model.kappa)
            opt.zero_grad()
            loss.backward()
            opt.step()
        model.check_finite()
    return model
