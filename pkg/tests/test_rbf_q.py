import numpy as np
import pytest

from rlconformal.envs import MountainCarEnv, TwoStateEnv
from rlconformal.rbf_q import TrainingError, fit_q_policy


def test_q_policy_passes_validation_gate():
    policy = fit_q_policy(MountainCarEnv(), seed=0)
    assert policy.validation_success >= 0.95
    p = policy.probs(np.array([[-0.5, 0.0], [0.0, 0.03]]))
    np.testing.assert_array_equal(p.sum(axis=1), 1.0)
    assert set(np.unique(p)) <= {0.0, 1.0}


def test_untrained_policy_fails_gate():
    with pytest.raises(TrainingError):
        fit_q_policy(MountainCarEnv(), episodes=0, seed=0)


def test_only_mountain_car():
    with pytest.raises(TypeError):
        fit_q_policy(TwoStateEnv())
