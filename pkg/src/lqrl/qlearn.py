"""Q-learning: TD learning with a Q network, replay memory, and LSTD policy iteration for LQ."""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .envs import average_cost, is_stable, rollout
from .errors import DimensionError, DomainError, SingularityError
from .mlp import Mlp
from .numerics import (CONDITION_LIMIT, instrumental_variable_regression, mat_from_vecs,
                       solve_policy_lyapunov, vecv)
from .pg import LinearGaussianPolicy


# ---------------------------------------------------------------------------
# Discrete actions
# ---------------------------------------------------------------------------

@dataclass
class DiscreteQAgent:
    network: Mlp
    epsilon: float = 1.0
    gamma: float = 0.99
    epsilon_min: float = 0.01
    epsilon_decay: float = 0.995

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise DomainError(f"epsilon={self.epsilon} outside [0, 1]")

    @property
    def n_a(self):
        return self.network.sizes[-1]


def make_q_agent(n_s, n_a, hidden=30, gamma=0.99, epsilon=1.0, seed=0, learning_rate=1e-3):
    net = Mlp([n_s, hidden, hidden, hidden, n_a], ["relu", "relu", "relu", "linear"], "mse",
              seed=seed, learning_rate=learning_rate)
    return DiscreteQAgent(net, epsilon=epsilon, gamma=gamma)


def epsilon_greedy_action(agent, s, env, rng):
    """Uniform random action with probability epsilon, otherwise the (lowest-index) argmax."""
    if rng.uniform() < agent.epsilon:
        return int(rng.integers(env.n_a))
    q = agent.network(np.asarray(s, dtype=float).reshape(1, -1))[0]
    return int(np.argmax(q))


def td_targets(agent, states, actions, rewards, next_states, dones):
    """Current predictions with the taken-action entries replaced by one-step TD targets."""
    S = np.vstack(states)
    target = agent.network(S).copy()
    bootstrap = agent.network(np.vstack(next_states)).max(axis=1)
    for i, a in enumerate(actions):
        target[i, a] = rewards[i] if dones[i] else rewards[i] + agent.gamma * bootstrap[i]
    return S, target


def td_update_discrete(agent, states, actions, rewards, next_states, dones):
    if len(states) == 0:
        raise DomainError("empty batch")
    S, target = td_targets(agent, states, actions, rewards, next_states, dones)
    return agent.network.train_on_batch(S, target)


class ReplayMemory:
    """FIFO transition buffer; the oldest entry is dropped once full."""

    def __init__(self, capacity=100000):
        self.capacity = capacity
        self.entries = deque(maxlen=capacity)

    def __len__(self):
        return len(self.entries)

    def remember(self, s, a, r, s_next, done):
        self.entries.append((s, a, r, s_next, done))

    def sample(self, batch_size, rng):
        if not self.entries:
            raise DomainError("cannot sample an empty memory")
        idx = rng.sample_without_replacement(len(self.entries), min(len(self.entries), batch_size))
        batch = [self.entries[i] for i in idx]
        return tuple(list(col) for col in zip(*batch))


def remember(memory, s, a, r, s_next, done):
    memory.remember(s, a, r, s_next, done)


def replay_sample(memory, batch_size, rng):
    return memory.sample(batch_size, rng)


def decay_epsilon(agent, decay=None, floor=None):
    decay = agent.epsilon_decay if decay is None else decay
    floor = agent.epsilon_min if floor is None else floor
    agent.epsilon = max(floor, agent.epsilon * decay)


def replay(agent, memory, batch_size, rng):
    """Sample a batch, take one TD step, then decay epsilon."""
    batch = memory.sample(batch_size, rng)
    loss = td_update_discrete(agent, *batch)
    decay_epsilon(agent)
    return loss


# ---------------------------------------------------------------------------
# Quadratic Q-function for linear quadratic problems
# ---------------------------------------------------------------------------

class QuadraticQ:
    """``Q(s, a) = z' G z`` with ``z = [s; a]``."""

    def __init__(self, G, n):
        G = np.asarray(G, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1] or not 0 < n < G.shape[0]:
            raise DimensionError(f"kernel {G.shape} cannot be split with n={n}")
        if np.max(np.abs(G - G.T)) > 1e-9 * max(1.0, np.max(np.abs(G))):
            raise DomainError("kernel must be symmetric")
        self.G = 0.5 * (G + G.T)
        self.n = n

    @property
    def m(self):
        return self.G.shape[0] - self.n

    @property
    def g_ss(self):
        return self.G[:self.n, :self.n]

    @property
    def g_sa(self):
        return self.G[:self.n, self.n:]

    @property
    def g_aa(self):
        return self.G[self.n:, self.n:]


def quadratic_q_value(q, s, a):
    z = np.concatenate([np.atleast_1d(s), np.atleast_1d(a)]).astype(float)
    if z.size != q.G.shape[0] or np.size(s) != q.n:
        raise DimensionError(f"(s, a) of sizes ({np.size(s)}, {np.size(a)}) do not fit n={q.n}, m={q.m}")
    return float(z @ q.G @ z)


def policy_improve(q):
    """Greedy gain ``K = -g_aa^{-1} g_sa^T``."""
    g_aa = q.g_aa
    cond = np.linalg.cond(g_aa)
    if not cond < CONDITION_LIMIT:
        raise SingularityError(f"g_aa is singular (condition {cond:.3g})", cond)
    return -np.linalg.solve(g_aa, q.g_sa.T)


def g_to_p(q, K):
    """Value kernel of ``s -> Q(s, K s)``."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (q.m, q.n):
        raise DimensionError(f"gain must be {q.m}x{q.n}, got {K.shape}")
    P = q.g_ss + q.g_sa @ K + K.T @ q.g_sa.T + K.T @ q.g_aa @ K
    return 0.5 * (P + P.T)


def gaussian_exploration_action(K, s, stddev, rng):
    if stddev < 0:
        raise DomainError(f"negative exploration std {stddev}")
    mu = np.atleast_2d(K) @ np.asarray(s, dtype=float)
    return mu + stddev * rng.standard_normal(mu.shape[0])


def oracle_kernel(env, K):
    """Exact Q kernel of policy ``K``: ``blkdiag(Q, R) + [A B]' P_K [A B]``."""
    P_K = solve_policy_lyapunov(env.A, env.B, env.Q, env.R, K)
    AB = np.hstack([env.A, env.B])
    n, m = env.n, env.m
    G = AB.T @ P_K @ AB
    G[:n, :n] += env.Q
    G[n:, n:] += env.R
    return G


def lstd_evaluate(trajectory, K, lam=0.0, gamma=1.0, min_samples=None):
    """Least-squares TD estimate of the quadratic Q kernel of policy ``K``.

    Next actions come from the deterministic policy ``K s'``. With
    ``gamma == 1`` the targets are ``c_t - lam`` (average-cost form); otherwise
    the plain costs are used and ``lam`` is ignored.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    S = np.vstack(trajectory.states)
    U = np.vstack([np.atleast_1d(a) for a in trajectory.actions])
    S_next = np.vstack(trajectory.next_states)
    c = np.asarray(trajectory.rewards, dtype=float)
    n, m = S.shape[1], U.shape[1]
    if K.shape != (m, n):
        raise DimensionError(f"gain must be {m}x{n}, got {K.shape}")
    p = (n + m) * (n + m + 1) // 2
    min_samples = 3 * p if min_samples is None else min_samples
    if len(c) < min_samples:
        raise DomainError(f"{len(c)} samples are too few to fit {p} kernel entries (need {min_samples})")

    psi = vecv(np.hstack([S, U]))
    psi_next = vecv(np.hstack([S_next, S_next @ K.T]))
    y = c - lam if gamma == 1.0 else c
    try:
        theta = instrumental_variable_regression(psi - gamma * psi_next, y, psi)
    except SingularityError as exc:
        raise SingularityError(f"{exc}; increase the exploration std or the rollout length",
                               exc.condition) from exc
    return QuadraticQ(mat_from_vecs(theta, n + m), n)


@dataclass
class LqQlConfig:
    iterations: int = 10
    T: int = 2000
    explore_mag: float = 1.0

    def __post_init__(self):
        if self.iterations < 0 or self.T < 1 or self.explore_mag <= 0:
            raise DomainError("iterations must be >= 0; T and explore_mag positive")


def q_evaluation(env, K, config, rng):
    """One policy-evaluation round; returns the kernel estimate and the average cost."""
    policy = LinearGaussianPolicy(K, config.explore_mag, sampling=False, rng=rng)
    lam = average_cost(rollout(env, policy, config.T, rng).rewards)
    policy.sampling = True
    data = rollout(env, policy, config.T, rng)
    return lstd_evaluate(data, K, lam, gamma=1.0), lam


def q_learning_lq(env, K0, config, rng, callback=None):
    """Policy iteration with LSTD evaluation; returns ``(P, K)``.

    An unstable gain ends the loop at once with all-zero ``P`` and ``K``.
    ``callback(iteration, K, lam)`` runs after each improvement.
    """
    K = np.atleast_2d(np.asarray(K0, dtype=float)).copy()
    P = np.zeros((env.n, env.n))
    for k in range(config.iterations):
        if not is_stable(env, K):
            return np.zeros((env.n, env.n)), np.zeros((env.m, env.n))
        q, lam = q_evaluation(env, K, config, rng)
        K = policy_improve(q)
        P = g_to_p(q, K)
        if callback is not None:
            callback(k, K.copy(), lam)
    return P, K
