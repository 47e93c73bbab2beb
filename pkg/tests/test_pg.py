import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

import lqrl.pg as pg
from conftest import SCALAR_K
from lqrl.envs import Trajectory, rollout
from lqrl.errors import DomainError
from lqrl.numerics import RngStream, finite_difference_gradient
from lqrl.pg import (LinearGaussianPolicy, PgLqConfig, gaussian_log_likelihood, lq_trajectory_reward,
                     make_softmax_agent, pg_gradient_linear, pg_train_lq, pg_update_discrete,
                     sample_action_discrete, standardized_rewards_to_go)


# discrete actions

def test_sample_action_uniform_at_zero_weights():
    agent = make_softmax_agent(4, 2)
    agent.network.set_flat(np.zeros_like(agent.network.get_flat()))
    rng = RngStream(0)
    draws = np.array([sample_action_discrete(agent, np.ones(4), rng) for _ in range(10000)])
    counts = np.bincount(draws, minlength=2)
    chi2 = np.sum((counts - 5000) ** 2 / 5000)
    assert chi2 < 10.83  # 1 dof, p = 0.001


def test_sample_action_forced():
    agent = make_softmax_agent(4, 2)
    agent.network.weights[-1][:] = 0
    agent.network.biases[-1][:] = [100.0, -100.0]
    rng = RngStream(1)
    assert all(sample_action_discrete(agent, np.ones(4), rng) == 0 for _ in range(500))


def test_sample_action_deterministic_under_seed():
    agent = make_softmax_agent(4, 2, seed=3)
    s = np.array([0.1, -0.2, 0.3, 0.0])
    a = [sample_action_discrete(agent, s, RngStream(5)) for _ in range(3)]
    assert len(set(a)) == 1


def test_standardized_rewards_to_go_examples():
    w = standardized_rewards_to_go([1, 1, 1], 1.0)
    assert w == pytest.approx([math.sqrt(1.5), 0, -math.sqrt(1.5)], abs=1e-12)
    with pytest.warns(RuntimeWarning):
        assert np.all(standardized_rewards_to_go([0, 0, 0], 0.9) == 0)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=40), st.floats(0, 1))
def test_standardized_moments(rewards, gamma):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        w = standardized_rewards_to_go(rewards, gamma)
    if caught:
        assert np.all(w == 0)
    else:
        assert abs(w.mean()) <= 1e-12 and abs(w.std() - 1) <= 1e-12


def _single_state_update(weight_sign):
    agent = make_softmax_agent(4, 2, seed=2)
    s = np.array([[0.1, 0.2, -0.1, 0.3]])
    before = agent.network(s)[0, 0]
    targets = np.array([[1.0, 0.0]])
    agent.network.train_on_batch(s, targets, sample_weight=[weight_sign])
    return before, agent.network(s)[0, 0]


def test_positive_weight_raises_probability():
    before, after = _single_state_update(1.0)
    assert after > before


def test_negative_weight_lowers_probability():
    before, after = _single_state_update(-1.0)
    assert after < before


def test_pg_update_zero_weights_leaves_parameters():
    agent = make_softmax_agent(4, 2, seed=1)
    before = agent.network.get_flat()
    with pytest.warns(RuntimeWarning):
        pg_update_discrete(agent, [np.ones(4)] * 3, [0, 1, 0], [0.0, 0.0, 0.0])
    assert np.array_equal(agent.network.get_flat(), before)


# linear Gaussian policy

def test_log_likelihood_zero_residual():
    pol = LinearGaussianPolicy([[2.0]], 1.0)
    assert gaussian_log_likelihood(pol, [1.5], [3.0]) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)
    with pytest.raises(DomainError):
        gaussian_log_likelihood(LinearGaussianPolicy([[1.0]], 0.0), [1.0], [1.0])


def test_log_likelihood_sigma_doubling():
    s, a = np.array([1.0, -1.0]), np.array([0.7])
    K = np.array([[0.2, 0.4]])
    r2 = float((a - K @ s) @ (a - K @ s))
    l1 = gaussian_log_likelihood(LinearGaussianPolicy(K, 0.5), s, a)
    l2 = gaussian_log_likelihood(LinearGaussianPolicy(K, 1.0), s, a)
    assert l2 - l1 == pytest.approx(-math.log(2) + r2 / (2 * 0.25) * (1 - 0.25), abs=1e-12)


@given(st.integers(0, 10**6))
def test_log_likelihood_gradient_closed_form(seed):
    rng = np.random.default_rng(seed)
    K = rng.standard_normal((2, 3))
    s, a = rng.standard_normal(3), rng.standard_normal(2)
    sigma = float(rng.uniform(0.3, 2.0))
    closed = np.outer(a - K @ s, s) / sigma ** 2
    numeric = finite_difference_gradient(
        lambda k: gaussian_log_likelihood(LinearGaussianPolicy(k.reshape(2, 3), sigma), s, a), K.ravel())
    assert np.max(np.abs(numeric - closed.ravel())) <= 1e-6


def make_traj(states, actions, costs):
    tr = Trajectory()
    for s, a, c in zip(states, actions, costs):
        tr.append(np.atleast_1d(s).astype(float), np.atleast_1d(a).astype(float), c, None, False)
    return tr


def test_gradient_hand_example():
    tr = make_traj([1.0], [2.0], [-3.0])  # R(T) = 3
    g = pg_gradient_linear([tr], [[1.0]], 0.1, 0.0)
    assert g[0, 0] == pytest.approx(300.0, rel=1e-12)


def test_gradient_zero_cases():
    tr = make_traj([[1.0, 2.0], [0.5, -1.0]], [[0.5], [0.25]], [1.0, 2.0])
    K = [[0.5, 0.0]]
    assert np.all(pg_gradient_linear([tr], K, 0.3, 0.0) == 0)  # a == K s
    tr2 = make_traj([[1.0, 2.0]], [[3.0]], [4.0])
    assert np.all(pg_gradient_linear([tr2], K, 0.3, lq_trajectory_reward(tr2)) == 0)
    with pytest.raises(DomainError):
        pg_gradient_linear([], K, 0.3, 0.0)


@given(st.integers(0, 10**6))
def test_gradient_matches_term_by_term_log_likelihood(seed):
    rng = np.random.default_rng(seed)
    K = rng.standard_normal((1, 2))
    sigma, baseline = 0.4, float(rng.standard_normal())
    trajs = [make_traj(rng.standard_normal((4, 2)), rng.standard_normal((4, 1)), rng.uniform(0, 3, 4))
             for _ in range(3)]
    expected = np.zeros_like(K)
    for tr in trajs:
        weight = (lq_trajectory_reward(tr) - baseline) / len(trajs)
        for s, a in zip(tr.states, tr.actions):
            expected += weight * np.outer(a - K @ s, s) / sigma ** 2
    assert np.allclose(pg_gradient_linear(trajs, K, sigma, baseline), expected, atol=1e-10, rtol=0)
    # shifting every reward and the baseline together changes nothing
    shifted = [make_traj(tr.states, tr.actions, np.array(tr.rewards) - 2.0) for tr in trajs]
    assert np.allclose(pg_gradient_linear(shifted, K, sigma, baseline + 2.0),
                       pg_gradient_linear(trajs, K, sigma, baseline), atol=1e-10, rtol=0)


def test_pg_train_zero_iterations_returns_k0(scalar_env):
    K = pg_train_lq(scalar_env, [[0.3]], PgLqConfig(iterations=0), RngStream(0))
    assert K.tolist() == [[0.3]]


def test_pg_train_nan_safeguard(scalar_env, monkeypatch):
    monkeypatch.setattr(pg, "pg_gradient_linear", lambda *a, **k: np.array([[np.nan]]))
    K = pg_train_lq(scalar_env, [[0.0]], PgLqConfig(iterations=2, batch_size=1, T=5, safeguard=7.0), RngStream(0))
    assert K.tolist() == [[7.0]]


def test_pg_train_improves_scalar_gain(scalar_env):
    wins = 0
    for seed in range(3):
        K = pg_train_lq(scalar_env, [[0.0]], PgLqConfig(), RngStream(seed))
        wins += abs(K[0, 0] - SCALAR_K) < abs(0.0 - SCALAR_K)
    assert wins >= 2


def test_pg_train_baseline_lag(scalar_env, monkeypatch):
    seen = []

    def spy(trajectories, K, sigma, baseline):
        seen.append((baseline, np.mean([lq_trajectory_reward(t) for t in trajectories])))
        return np.zeros_like(K)

    monkeypatch.setattr(pg, "pg_gradient_linear", spy)
    pg_train_lq(scalar_env, [[0.0]], PgLqConfig(iterations=3, batch_size=2, T=10), RngStream(0))
    assert seen[0][0] == 0.0
    assert seen[1][0] == seen[0][1] and seen[2][0] == seen[1][1]


def test_exploring_policy_noise_level():
    rng = RngStream(3)
    pol = LinearGaussianPolicy([[1.0, 2.0]], 0.3, sampling=True, rng=rng)
    s = np.array([0.5, 0.5])
    draws = np.array([pol(s)[0] for _ in range(20000)]) - 1.5
    assert draws.std() == pytest.approx(0.3, rel=0.03)
    traj = rollout(_Dummy(), pol, 3, rng)
    assert len(traj) == 3


class _Dummy:
    def reset(self, rng):
        return np.zeros(2)

    def step(self, s, a, rng, t=0):
        return s, 0.0, False
