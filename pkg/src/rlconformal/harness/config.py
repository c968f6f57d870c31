"""Experiment configuration and its flat ``key = value`` file format.

Config files hold one ``key = value`` pair per line; blank lines and text
after ``#`` are ignored. Keys are :class:`ExperimentConfig` field names and
values are parsed to the field's type (lists are comma separated).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

EXAMPLES = ("two-state", "continuous", "mountain-car", "high-dim")
SETTINGS = ("on", "off")


@dataclass
class ExperimentConfig:
    example: str = "two-state"
    setting: str = "on"
    N: int = 400
    T: int = 30
    k: int = 2
    alpha: float = 0.1
    xi: float = 0.8
    B: int = 100
    l: int = 400
    m: int = 20
    rho: float = 0.1
    gamma: float = 0.8
    reps: int = 50
    n_test: int = 310
    seed: int = 0
    horizon: int = 100
    split: str = "trajectory"
    backend: str = "tabular"
    passes: int = 50
    epochs: int = 200
    ridge: float = 1e-3
    optimizer: str = "sgd"
    lr: float = 1e-3
    cap: float = 50.0
    floor: float = 0.01
    behavior_model: str = "auto"
    coef2: float = 0.75
    kde_rollouts: int = 2000
    baselines: tuple = ("drl-qr",)
    drl_qr_rule: str = "order"
    out: str = "results"
    cache: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.example not in EXAMPLES:
            raise ValueError(f"unknown example {self.example!r}; choose from {EXAMPLES}")
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.xi <= 1.0:
            raise ValueError("xi must lie in (0, 1]")
        if not 1 <= self.k <= self.T - 1:
            raise ValueError(f"k={self.k} must lie in [1, T-1] with T={self.T}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.drl_qr_rule not in ("order", "quantile"):
            raise ValueError(f"unknown drl_qr_rule {self.drl_qr_rule!r}")
        if self.reps < 0 or self.n_test < 1 or self.B < 1 or self.l < 1:
            raise ValueError("reps, n_test, B and l must be positive")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


# example-specific defaults; anything the user passes explicitly wins
EXAMPLE_DEFAULTS = {
    "two-state": dict(N=400, T=30, m=20, rho=0.1, gamma=0.8, B=100, l=400, horizon=100,
                      backend="tabular", passes=50, reps=50),
    "continuous": dict(N=200, T=30, m=30, gamma=0.8, B=50, l=200, horizon=100,
                       backend="mlp", epochs=200, lr=1e-3, reps=20),
    "mountain-car": dict(N=200, T=30, gamma=0.99, B=50, l=200, horizon=1500,
                         backend="kde", reps=50, baselines=("kde-qr",)),
    "high-dim": dict(N=400, T=30, m=20, rho=0.03, gamma=0.8, B=50, l=200, horizon=100,
                     backend="linear", passes=50, ridge=0.01, reps=50),
}


def config_for(example: str, **overrides) -> ExperimentConfig:
    values = dict(EXAMPLE_DEFAULTS.get(example, {}))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(example=example, **values)


def _parse_value(f: dataclasses.Field, raw: str):
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    raw = raw.strip()
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "tuple":
        return tuple(v.strip() for v in raw.split(",") if v.strip())
    return raw


def read_config_file(path) -> dict:
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (p.strip() for p in line.split("=", 1))
            if key not in fields:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _parse_value(fields[key], raw)
    return values
