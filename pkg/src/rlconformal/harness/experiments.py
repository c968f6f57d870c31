"""End-to-end experiment runs: data, model, weights, calibration, evaluation."""

from __future__ import annotations

import functools
import hashlib
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from ..buffers import build_buffers
from ..conformal import calibrate, region_from_radii
from ..drl import (
    BucketedKDEModel,
    QTDConfig,
    drl_qr_interval,
    load_model,
    save_model,
    train_qtd,
)
from ..envs import (
    ContinuousEnv,
    HighDimEnv,
    MountainCarEnv,
    TwoStateEnv,
    sample_trajectories,
)
from ..policies import MixturePolicy, SigmoidMixturePolicy, SwitchPolicy, UniformPolicy
from ..rbf_q import fit_q_policy
from ..weights import WeightFn, fit_behavior_policy, fit_onpolicy_weight
from .config import ExperimentConfig

log = logging.getLogger(__name__)


@dataclass
class MetricsRecord:
    example: str
    setting: str
    method: str
    k: int | None
    xi: float | None
    rep: int
    coverage: float
    avg_length: float
    inf_regions: int
    seed: int

    columns = ("example", "setting", "method", "k", "xi", "rep", "coverage", "avg_length",
               "inf_regions", "seed")


@dataclass
class ExampleSetup:
    env: object
    behavior: object
    target: object


@functools.lru_cache(maxsize=8)
def mountain_car_controller(seed: int, gamma: float):
    return fit_q_policy(MountainCarEnv(gamma=gamma), seed=seed)


def make_setup(cfg: ExperimentConfig) -> ExampleSetup:
    off = cfg.setting == "off"
    if cfg.example == "two-state":
        env = TwoStateEnv(gamma=cfg.gamma)
        behavior = SwitchPolicy(0.4, 0.8)
        target = SwitchPolicy(0.5, 0.7) if off else behavior
    elif cfg.example == "high-dim":
        env = HighDimEnv(gamma=cfg.gamma)
        behavior = SwitchPolicy(0.4, 0.8)
        target = SwitchPolicy(0.5, 0.7) if off else behavior
    elif cfg.example == "continuous":
        env = ContinuousEnv(coef2=cfg.coef2, gamma=cfg.gamma)
        behavior = SigmoidMixturePolicy(0.5, 0.5)
        target = SigmoidMixturePolicy(0.6, 0.4) if off else behavior
    elif cfg.example == "mountain-car":
        env = MountainCarEnv(gamma=cfg.gamma)
        q_policy = mountain_car_controller(cfg.seed, cfg.gamma)
        behavior = MixturePolicy(0.3, q_policy, UniformPolicy(3))
        target = MixturePolicy(0.2, q_policy, UniformPolicy(3)) if off else behavior
    else:
        raise ValueError(cfg.example)
    env.default_policy = behavior
    return ExampleSetup(env, behavior, target)


def repetition_seed(base_seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([base_seed, rep]).generate_state(1)[0])


def oracle_returns(env, policy, states, gamma: float, horizon: int, rng) -> np.ndarray:
    """One truncated Monte Carlo return per start state under ``policy``."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    s = np.asarray(states).copy()
    g = np.zeros(s.shape[0])
    absorbing = hasattr(env, "at_goal")
    for t in range(horizon):
        if absorbing:
            alive = ~env.at_goal(s)
            if not alive.any():
                break
            a = np.zeros(s.shape[0], dtype=np.int64)
            a[alive] = policy.sample(s[alive], rng)
        else:
            a = policy.sample(s, rng)
        r, s = env.step(s, a, rng)
        g += gamma ** t * r
    return g


def oracle_return(env, policy, s, gamma: float, horizon: int, rng) -> float:
    return float(oracle_returns(env, policy, np.asarray(s)[None, ...], gamma, horizon, rng)[0])


def compute_metrics(regions, returns):
    """Coverage, mean finite length and the count of whole-line regions."""
    regions = list(regions)
    returns = np.asarray(returns, dtype=float)
    if len(regions) != returns.size:
        raise ValueError(f"{len(regions)} regions but {returns.size} oracle returns")
    if not regions:
        raise ValueError("no regions to evaluate")
    covered = np.array([g in reg for reg, g in zip(regions, returns)])
    lengths = np.array([reg.length for reg in regions], dtype=float)
    finite = np.isfinite(lengths)
    avg = float(lengths[finite].mean()) if finite.any() else math.nan
    return float(covered.mean()), avg, int((~finite).sum())


def _qtd_config(cfg: ExperimentConfig) -> QTDConfig:
    return QTDConfig(backend=cfg.backend, m=cfg.m, rho=cfg.rho, passes=cfg.passes,
                     ridge=cfg.ridge, epochs=cfg.epochs, lr=cfg.lr, optimizer=cfg.optimizer,
                     state_action=True if cfg.backend == "mlp" else None)


def _cache_path(cfg: ExperimentConfig, rep_seed: int):
    if not cfg.cache:
        return None
    key = (f"{cfg.example}|{cfg.setting}|{rep_seed}|{cfg.N}|{cfg.T}|{cfg.split}|{cfg.backend}|"
           f"{cfg.m}|{cfg.rho}|{cfg.passes}|{cfg.epochs}|{cfg.lr}|{cfg.ridge}|{cfg.gamma}|"
           f"{cfg.coef2}|{cfg.optimizer}")
    digest = hashlib.sha1(key.encode()).hexdigest()[:16]
    return os.path.join(cfg.cache, f"model-{digest}.npz")


def fit_return_model(cfg, setup, train, rng):
    env, target = setup.env, setup.target
    if cfg.backend == "kde":
        n = min(cfg.kde_rollouts, len(train))
        pick = rng.choice(len(train), n, replace=False)
        starts = train.states[pick]
        returns = oracle_returns(env, target, starts, cfg.gamma, cfg.horizon, rng)
        return BucketedKDEModel([env.min_position, -env.max_speed],
                                [env.max_position, env.max_speed]).fit(starts, returns)
    return train_qtd(train, env, cfg.setting, _qtd_config(cfg), rng, target)


def _baseline_regions(model, states, target, alpha, rule="order"):
    if model.backend != "kde":
        return [drl_qr_interval(model.distribution(s, target), alpha, rule) for s in states]
    # one density per bucket; its quantiles need root finding, so reuse them
    by_bucket = {}
    out = []
    for s, cell in zip(states, model.bucket(states)):
        if cell not in by_bucket:
            by_bucket[cell] = drl_qr_interval(model.distribution(s), alpha)
        out.append(by_bucket[cell])
    return out


def run_repetition(cfg: ExperimentConfig, rep: int, ks=None, xis=None):
    """All (k, xi) combinations for one repetition on shared data and model."""
    ks = list(ks or [cfg.k])
    xis = list(xis or [cfg.xi])
    seed = repetition_seed(cfg.seed, rep)
    data_ss, split_ss, train_ss, weight_ss, test_ss, calib_ss = np.random.SeedSequence(seed).spawn(6)
    setup = make_setup(cfg)
    env, target = setup.env, setup.target

    batch = sample_trajectories(env, setup.behavior, cfg.N, cfg.T, np.random.default_rng(data_ss))
    split_seed = int(split_ss.generate_state(1)[0])

    train, _ = build_buffers(batch, ks[0], np.random.default_rng(split_seed), cfg.split)
    cache = _cache_path(cfg, seed)
    if cache and os.path.exists(cache):
        model = load_model(cache)
    else:
        model = fit_return_model(cfg, setup, train, np.random.default_rng(train_ss))
        if cache and model.backend != "kde":
            os.makedirs(cfg.cache, exist_ok=True)
            save_model(model, cache)

    weight_rng = np.random.default_rng(weight_ss)
    initial = train.states[train.times == 0]
    ratio = fit_onpolicy_weight(initial, train.states, featurize=env.features)
    bhat = None
    if cfg.setting == "off":
        bhat = fit_behavior_policy(train, env, cfg.behavior_model, cfg.floor,
                                   seed=int(weight_rng.integers(2**31)))

    test_rng = np.random.default_rng(test_ss)
    s_test = env.initial_states(cfg.n_test, test_rng)
    g_test = oracle_returns(env, target, s_test, cfg.gamma, cfg.horizon, test_rng)
    centers = model.value(s_test, target)

    records = []

    def record(method, k, xi, regions):
        cov, length, n_inf = compute_metrics(regions, g_test)
        records.append(MetricsRecord(cfg.example, cfg.setting, method, k, xi, rep,
                                     cov, length, n_inf, seed))

    calib_seeds = calib_ss.spawn(len(ks) * len(xis))
    for i, k in enumerate(ks):
        _, buffer = build_buffers(batch, k, np.random.default_rng(split_seed), cfg.split)
        wfn = WeightFn(ratio, cfg.setting, target, bhat, cfg.cap)
        weights, diag = wfn(buffer)
        if diag.cap_hits:
            log.info("rep %d k=%d: %d weights clipped at %g", rep, k, diag.cap_hits, cfg.cap)
        for j, xi in enumerate(xis):
            rng = np.random.default_rng(calib_seeds[i * len(xis) + j])
            radii = calibrate(buffer, weights, model, target, cfg.alpha, xi, cfg.B, cfg.l,
                              cfg.gamma, rng)
            regions = [region_from_radii(c, radii, cfg.alpha, xi, cfg.l) for c in centers]
            record("conformal", k, xi, regions)

    for name in cfg.baselines:
        if name not in ("drl-qr", "kde-qr"):
            raise ValueError(f"unknown baseline {name!r}")
        if (name == "kde-qr") != (model.backend == "kde"):
            continue
        record(name, None, None, _baseline_regions(model, s_test, target, cfg.alpha,
                                                       cfg.drl_qr_rule))
    return records


def run_experiment(cfg: ExperimentConfig, ks=None, xis=None, progress=None):
    """``cfg.reps`` repetitions; a failed repetition is logged and skipped."""
    records = []
    for rep in range(cfg.reps):
        try:
            records.extend(run_repetition(cfg, rep, ks, xis))
        except Exception:
            log.exception("repetition %d of %s/%s failed", rep, cfg.example, cfg.setting)
        if progress:
            progress(rep)
    return records
