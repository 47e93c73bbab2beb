"""Policy gradient: softmax REINFORCE for discrete actions, linear-Gaussian PG for LQ."""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .envs import rewards_to_go, rollout
from .errors import DimensionError, DomainError
from .mlp import Mlp, to_categorical
from .numerics import AdamState, adam_step


@dataclass
class SoftmaxPolicyAgent:
    network: Mlp
    gamma: float = 0.99
    n_a: int = 2

    def __post_init__(self):
        if self.network.sizes[-1] != self.n_a:
            raise DimensionError(f"network has {self.network.sizes[-1]} outputs for {self.n_a} actions")


def make_softmax_agent(n_s, n_a, hidden=30, gamma=0.99, seed=0, learning_rate=1e-3):
    net = Mlp([n_s, hidden, hidden, n_a], ["relu", "relu", "softmax"], "cross_entropy",
              seed=seed, learning_rate=learning_rate)
    return SoftmaxPolicyAgent(net, gamma=gamma, n_a=n_a)


def sample_action_discrete(agent, s, rng):
    probs = agent.network(np.asarray(s, dtype=float).reshape(1, -1))[0]
    return rng.choice(probs)


def standardized_rewards_to_go(rewards, gamma):
    """Discounted rewards-to-go shifted to zero mean and scaled to unit (population) std.

    All-equal rewards-to-go have no spread; a zero vector is returned and a
    ``RuntimeWarning`` is emitted.
    """
    togo = rewards_to_go(rewards, gamma)
    togo = togo - togo.mean()
    std = togo.std()
    if std <= 1e-12 * max(1.0, np.max(np.abs(togo))):
        warnings.warn("rewards-to-go have zero spread; using zero weights", RuntimeWarning, stacklevel=2)
        return np.zeros_like(togo)
    return togo / std


def pg_update_discrete(agent, states, actions, rewards):
    if len(states) == 0:
        raise DomainError("empty episode")
    weights = standardized_rewards_to_go(rewards, agent.gamma)
    targets = np.stack([to_categorical(a, agent.n_a) for a in actions])
    return agent.network.train_on_batch(np.vstack(states), targets, sample_weight=weights)


# ---------------------------------------------------------------------------
# Linear Gaussian policy
# ---------------------------------------------------------------------------

class LinearGaussianPolicy:
    """``a ~ N(K s, sigma^2 I)`` when sampling is on, ``a = K s`` otherwise."""

    def __init__(self, K, sigma=0.1, sampling=False, rng=None):
        self.K = np.atleast_2d(np.asarray(K, dtype=float)).copy()
        self.sigma = float(sigma)
        self.sampling = sampling
        self.rng = rng
        if sampling and self.sigma <= 0:
            raise DomainError("exploration std must be positive when sampling")

    def mean(self, s):
        return self.K @ np.asarray(s, dtype=float)

    def __call__(self, s):
        mu = self.mean(s)
        if self.sampling:
            return mu + self.sigma * self.rng.standard_normal(mu.shape[0])
        return mu


def gaussian_log_likelihood(policy, s, a):
    if policy.sigma <= 0:
        raise DomainError(f"sigma must be positive, got {policy.sigma}")
    a = np.atleast_1d(np.asarray(a, dtype=float))
    resid = a - policy.mean(s)
    if resid.shape != a.shape:
        raise DimensionError(f"action {a.shape} does not match policy output {resid.shape}")
    var = policy.sigma ** 2
    return -0.5 * a.size * math.log(2 * math.pi * var) - float(resid @ resid) / (2 * var)


def lq_trajectory_reward(traj):
    """Per-trajectory reward: negative mean running cost."""
    return -float(np.sum(traj.rewards)) / len(traj)


def pg_gradient_linear(trajectories, K, sigma, baseline):
    """Likelihood-ratio gradient for the linear-Gaussian policy with a scalar baseline."""
    if len(trajectories) == 0:
        raise DomainError("empty batch of trajectories")
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    grad = np.zeros_like(K)
    for traj in trajectories:
        S = np.vstack(traj.states)
        U = np.vstack([np.atleast_1d(a) for a in traj.actions])
        weight = (lq_trajectory_reward(traj) - baseline) / len(trajectories)
        grad += sigma ** -2 * weight * (U - S @ K.T).T @ S
    return grad


@dataclass
class PgLqConfig:
    iterations: int = 100
    batch_size: int = 8
    T: int = 100
    explore_mag: float = 0.1
    step_size: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1.0e-8
    safeguard: float = 10.0

    def __post_init__(self):
        if self.iterations < 0 or self.batch_size < 1 or self.T < 1:
            raise DomainError("iterations must be >= 0, batch_size and T positive")
        if self.explore_mag <= 0 or self.safeguard <= 0:
            raise DomainError("explore_mag and safeguard must be positive")


def safe_gain(K, safeguard):
    if np.isnan(K).any():
        return safeguard * np.ones_like(K)
    return K


def pg_train_lq(env, K0, config, rng, callback=None):
    """Adam ascent on the linear-Gaussian policy gain.

    ``callback(iteration, K, rewards)`` is called after every update.
    """
    policy = LinearGaussianPolicy(K0, config.explore_mag, sampling=True, rng=rng)
    baseline = 0.0
    adam = AdamState(policy.K.shape, step_size=config.step_size, beta1=config.beta1,
                     beta2=config.beta2, epsilon=config.epsilon)
    with np.errstate(all="ignore"):
        for k in range(config.iterations):
            batch = [rollout(env, policy, config.T, rng) for _ in range(config.batch_size)]
            rewards = np.array([lq_trajectory_reward(tr) for tr in batch])
            grad = pg_gradient_linear(batch, policy.K, config.explore_mag, baseline)
            baseline = float(np.mean(rewards))
            policy.K = policy.K + adam_step(adam, grad)
            if callback is not None:
                callback(k, policy.K.copy(), rewards)
    return safe_gain(policy.K, config.safeguard)
