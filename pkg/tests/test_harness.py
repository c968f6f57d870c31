import math

import numpy as np
import pytest

from rlconformal.conformal import PredictionRegion
from rlconformal.envs import MountainCarEnv, TwoStateEnv
from rlconformal.harness import (
    ExperimentConfig,
    MetricsRecord,
    compute_metrics,
    config_for,
    oracle_return,
    oracle_returns,
    read_config_file,
    run_experiment,
    run_repetition,
)
from rlconformal.harness.cli import main
from rlconformal.harness.report import emit_boxplot_svg, emit_csv, read_csv
from rlconformal.policies import SwitchPolicy, UniformPolicy

from conftest import bellman_values


class ConstantRewardEnv:
    n_actions = 1

    def step(self, states, actions, rng):
        return np.ones(len(states)), states


def quick(**kw):
    base = dict(N=60, reps=2, B=5, l=50, passes=5, n_test=40)
    base.update(kw)
    return config_for("two-state", **base)


def test_example_defaults():
    cfg = config_for("two-state")
    assert (cfg.N, cfg.T, cfg.m, cfg.rho, cfg.gamma, cfg.B, cfg.l) == (400, 30, 20, 0.1, 0.8, 100, 400)
    cfg = config_for("continuous")
    assert (cfg.N, cfg.m, cfg.B, cfg.l, cfg.backend) == (200, 30, 50, 200, "mlp")
    cfg = config_for("mountain-car")
    assert (cfg.gamma, cfg.horizon, cfg.baselines) == (0.99, 1500, ("kde-qr",))
    assert cfg.n_test == 310


@pytest.mark.parametrize("bad", [dict(alpha=1.0), dict(k=30), dict(xi=0.0), dict(gamma=1.0),
                                 dict(setting="both"), dict(example="cartpole")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        ExperimentConfig(**bad)


@pytest.mark.parametrize("example, r_max, scale", [
    ("two-state", 6.0, 8.0),       # rewards N(2, 1): 4 sd above the mean
    ("high-dim", 6.0, 8.0),
    ("mountain-car", 1.0, 100.0),
])
def test_horizon_truncation_is_negligible(example, r_max, scale):
    cfg = config_for(example)
    assert cfg.gamma ** cfg.horizon * r_max <= 1e-3 * scale


def test_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# Example 1 quick run\nexample = two-state\nk = 3  # width\n"
                    "xi = 0.5\nbaselines = drl-qr\n\n")
    values = read_config_file(path)
    assert values == {"example": "two-state", "k": 3, "xi": 0.5, "baselines": ("drl-qr",)}
    path.write_text("colour = blue\n")
    with pytest.raises(ValueError, match="unknown key"):
        read_config_file(path)
    path.write_text("k 3\n")
    with pytest.raises(ValueError):
        read_config_file(path)


def test_compute_metrics_examples():
    regions = [PredictionRegion(1.0, 1.0) for _ in range(4)]
    cov, length, n_inf = compute_metrics(regions, [0.5, 1.0, 1.5, 2.0])
    assert (cov, length, n_inf) == (1.0, 2.0, 0)
    cov, _, _ = compute_metrics(regions, [0.5, 1.0, 5.0, -3.0])
    assert cov == 0.5
    regions.append(PredictionRegion(0.0, math.inf))
    cov, length, n_inf = compute_metrics(regions, [0.5, 1.0, 5.0, -3.0, 1e9])
    assert (cov, length, n_inf) == (0.6, 2.0, 1)
    with pytest.raises(ValueError):
        compute_metrics(regions, [1.0])


def test_oracle_examples(rng):
    assert oracle_return(ConstantRewardEnv(), UniformPolicy(1), np.zeros(1), 0.8, 200, rng) \
        == pytest.approx(5.0)
    env = MountainCarEnv()
    assert oracle_return(env, UniformPolicy(3), np.array([0.6, 0.0]), 0.99, 100, rng) == 0.0
    with pytest.raises(ValueError):
        oracle_returns(env, UniformPolicy(3), np.zeros((1, 2)), 0.99, 0, rng)


def test_oracle_two_state_mean(rng):
    g = oracle_returns(TwoStateEnv(), SwitchPolicy(0.5, 0.7), np.zeros(100000, int), 0.8, 100, rng)
    v = bellman_values(0.5, 0.7)[0]
    assert abs(g.mean() - v) <= 3 * g.std() / np.sqrt(g.size)


def test_oracle_horizon_soundness(rng):
    env, pol = TwoStateEnv(), SwitchPolicy(0.5, 0.7)
    s = np.zeros(20000, int)
    g1 = oracle_returns(env, pol, s, 0.8, 100, np.random.default_rng(1))
    g2 = oracle_returns(env, pol, s, 0.8, 150, np.random.default_rng(1))
    # shared noise for the first 100 steps: the difference is the tail only
    bound = 0.8 ** 100 * 5.0 / 0.2
    assert abs(g2.mean() - g1.mean()) <= bound


def test_zero_reps_is_empty():
    assert run_experiment(quick(reps=0)) == []


def test_repetition_records_and_parity():
    cfg = quick()
    recs = run_repetition(cfg, 0, ks=[1, 2], xis=[0.5, 0.9])
    methods = [(r.method, r.k, r.xi) for r in recs]
    assert methods == [("conformal", 1, 0.5), ("conformal", 1, 0.9), ("conformal", 2, 0.5),
                       ("conformal", 2, 0.9), ("drl-qr", None, None)]
    assert len({r.seed for r in recs}) == 1
    for r in recs:
        assert 0.0 <= r.coverage <= 1.0
        assert r.coverage * cfg.n_test == pytest.approx(round(r.coverage * cfg.n_test))


def test_off_policy_repetition_runs():
    recs = run_repetition(quick(setting="off"), 0)
    assert {r.method for r in recs} == {"conformal", "drl-qr"}


def test_csv_reproducible(tmp_path):
    cfg = quick()
    emit_csv(run_experiment(cfg), tmp_path / "a.csv")
    emit_csv(run_experiment(cfg), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    back = read_csv(tmp_path / "a.csv")
    assert back[1].method == "drl-qr" and back[1].k is None and back[1].xi is None


def test_csv_header_only(tmp_path):
    emit_csv([], tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().strip() == ",".join(MetricsRecord.columns)


def records_one_group(n=50, seed=0):
    rng = np.random.default_rng(seed)
    return [MetricsRecord("two-state", "on", "conformal", 2, 0.8, i, float(c), 8.0, 0, 1)
            for i, c in enumerate(rng.uniform(0.8, 1.0, n))]


def test_boxplot_median_and_determinism(tmp_path):
    import matplotlib.pyplot as plt

    recs = records_one_group()
    emit_boxplot_svg(recs, tmp_path / "a.svg", nominal=0.9)
    emit_boxplot_svg(recs, tmp_path / "b.svg", nominal=0.9)
    svg = (tmp_path / "a.svg").read_text()
    assert svg == (tmp_path / "b.svg").read_text()
    assert svg.startswith("<?xml")
    # matplotlib's own boxplot statistics for the group match the records
    stats = plt.matplotlib.cbook.boxplot_stats([r.coverage for r in recs])[0]
    assert stats["med"] == pytest.approx(np.median([r.coverage for r in recs]))
    with pytest.raises(ValueError):
        emit_boxplot_svg([], tmp_path / "c.svg")


def test_boxplot_one_box_per_group(tmp_path):
    recs = records_one_group(10)
    recs += [MetricsRecord("two-state", "on", "conformal", k, 0.8, 0, 0.9, 8.0, 0, 1)
             for k in (1, 3, 4, 5)]
    recs += [MetricsRecord("two-state", "on", "drl-qr", None, None, 0, 0.85, 7.0, 0, 1)]
    labels = emit_boxplot_svg(recs, tmp_path / "six.svg")
    assert labels == ["k=2 xi=0.8", "k=1 xi=0.8", "k=3 xi=0.8", "k=4 xi=0.8", "k=5 xi=0.8",
                      "DRL-QR"]
    svg = (tmp_path / "six.svg").read_text()
    for label in labels:
        assert label in svg


def test_cli_run_and_sweep(tmp_path, capsys):
    out = tmp_path / "run"
    argv = ["run", "--example", "two-state", "--reps", "1", "--B", "5", "--l", "50",
            "--out", str(out), "-q"]
    assert main(argv) == 0
    for name in ("metrics.csv", "boxplot_cov.svg", "boxplot_len.svg"):
        assert (out / name).exists()
    assert "coverage" in capsys.readouterr().out
    out = tmp_path / "sweep"
    assert main(["sweep", "--param", "xi", "--values", "0.2,0.9", "--reps", "1", "--B", "5",
                 "--l", "50", "--out", str(out), "-q"]) == 0
    rows = read_csv(out / "metrics.csv")
    assert [r.xi for r in rows] == [0.2, 0.9, None]


def test_cli_config_file_overrides_flags(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("k = 1\nB = 3\nl = 40\nN = 60\npasses = 3\nn_test = 20\n")
    out = tmp_path / "o"
    assert main(["run", "--k", "4", "--reps", "1", "--out", str(out), "--config", str(cfg),
                 "-q"]) == 0
    rows = read_csv(out / "metrics.csv")
    assert rows[0].k == 1


def test_cli_failures(tmp_path, capsys):
    assert main(["run", "--k", "40", "--out", str(tmp_path / "x"), "-q"]) != 0
    assert "error" in capsys.readouterr().err
    assert main(["sweep", "--param", "k", "--values", "a,b", "--out", str(tmp_path / "y"),
                 "-q"]) != 0
    with pytest.raises(SystemExit):
        main(["run", "--example", "cartpole"])
