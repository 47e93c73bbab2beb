"""Environments (tabular MDP, cartpole, linear quadratic), rollouts and return bookkeeping.

Every environment exposes ``reset(rng)`` and ``step(state, action, rng, t)``
returning ``(next_state, reward, done)``. For the linear quadratic system the
``reward`` slot carries the running *cost* ``c_t = -r_t``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError
from .numerics import spectral_radius

ROW_SUM_TOL = 1e-9


@dataclass
class Trajectory:
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    next_states: list = field(default_factory=list)
    dones: list = field(default_factory=list)

    def __len__(self):
        return len(self.states)

    def append(self, s, a, r, s_next, done):
        self.states.append(s)
        self.actions.append(a)
        self.rewards.append(r)
        self.next_states.append(s_next)
        self.dones.append(bool(done))

    def check(self):
        """Raise if the structural invariants are violated."""
        n = len(self.states)
        if not all(len(x) == n for x in (self.actions, self.rewards, self.next_states, self.dones)):
            raise DimensionError("trajectory lists have different lengths")
        for i, d in enumerate(self.dones):
            if d and i != n - 1:
                raise DomainError(f"done flag set at step {i} before the end ({n})")
            if i + 1 < n and not np.array_equal(self.next_states[i], self.states[i + 1]):
                raise DomainError(f"next_states[{i}] does not chain into states[{i + 1}]")


# ---------------------------------------------------------------------------
# Tabular MDP
# ---------------------------------------------------------------------------

@dataclass
class TabularMDP:
    """Finite MDP.

    ``transition[a][s, s']`` are probabilities. ``reward[s][a]`` is a list of
    ``(probability, reward, next_state)`` outcomes whose next-state marginals
    reproduce the transition row.
    """

    transition: np.ndarray
    reward: list
    gamma: float = 1.0
    start: int = 0

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=float)
        n_a, n_s, n_s2 = self.transition.shape
        if n_s != n_s2:
            raise DimensionError(f"transition matrices must be square, got {self.transition.shape}")
        if not 0.0 <= self.gamma <= 1.0:
            raise DomainError(f"gamma={self.gamma} outside [0, 1]")
        if np.any(self.transition < 0):
            raise DomainError("negative transition probability")
        sums = self.transition.sum(axis=2)
        if np.max(np.abs(sums - 1.0)) > ROW_SUM_TOL:
            raise DomainError(f"transition rows do not sum to one: {sums}")
        if len(self.reward) != n_s or any(len(row) != n_a for row in self.reward):
            raise DimensionError("reward table must be indexed [state][action]")
        for s in range(n_s):
            for a in range(n_a):
                marginal = np.zeros(n_s)
                for p, _, s_next in self.reward[s][a]:
                    marginal[s_next] += p
                if np.max(np.abs(marginal - self.transition[a, s])) > ROW_SUM_TOL:
                    raise DomainError(f"outcomes of (s{s}, a{a}) disagree with the transition row")

    @property
    def n_s(self):
        return self.transition.shape[1]

    @property
    def n_a(self):
        return self.transition.shape[0]

    def _check(self, s, a):
        if not (0 <= s < self.n_s and 0 <= a < self.n_a):
            raise DomainError(f"(s={s}, a={a}) outside {self.n_s} states x {self.n_a} actions")

    def expected_reward(self, s, a):
        self._check(s, a)
        return sum(p * r for p, r, _ in self.reward[s][a])

    def reset(self, rng):
        return self.start

    def step(self, s, a, rng, t=0):
        self._check(s, a)
        outcomes = self.reward[s][a]
        k = rng.choice([p for p, _, _ in outcomes])
        _, r, s_next = outcomes[k]
        return s_next, r, False


def mdp_step(mdp, s, a, rng):
    s_next, r, _ = mdp.step(s, a, rng)
    return s_next, r


def mdp_expected_reward(mdp, s, a):
    return mdp.expected_reward(s, a)


def example1_mdp():
    """Three-state, two-action example MDP.

    Only the outcomes of ``(s1, a0)`` carry rewards (-1 w.p. 0.1 staying in s1,
    +5 to s0 w.p. 0.7, +5 to s2 w.p. 0.2); every other transition pays 0.
    """
    P = np.array([
        [[0.5, 0.0, 0.5],
         [0.7, 0.1, 0.2],
         [0.4, 0.0, 0.6]],
        [[0.0, 0.0, 1.0],
         [0.0, 0.95, 0.05],
         [0.3, 0.3, 0.4]],
    ])
    reward = [[[(P[a, s, k], 0.0, k) for k in range(3) if P[a, s, k] > 0] for a in range(2)]
              for s in range(3)]
    reward[1][0] = [(0.1, -1.0, 1), (0.7, 5.0, 0), (0.2, 5.0, 2)]
    return TabularMDP(P, reward, gamma=0.9)


# ---------------------------------------------------------------------------
# Cartpole
# ---------------------------------------------------------------------------

@dataclass
class CartPoleEnv:
    gravity: float = 9.8
    masscart: float = 1.0
    masspole: float = 0.1
    length: float = 0.5  # half the pole length
    force_mag: float = 10.0
    tau: float = 0.02
    x_threshold: float = 2.4
    theta_threshold: float = 12 * 2 * math.pi / 360
    max_steps: int = 200
    reset_bound: float = 0.05

    n_s = 4
    n_a = 2

    def dynamics(self, x, x_dot, theta, theta_dot, force):
        """One explicit Euler step; works on floats or equally shaped arrays."""
        total_mass = self.masspole + self.masscart
        polemass_length = self.masspole * self.length
        costheta = np.cos(theta)
        sintheta = np.sin(theta)
        temp = (force + polemass_length * theta_dot ** 2 * sintheta) / total_mass
        thetaacc = (self.gravity * sintheta - costheta * temp) / (
            self.length * (4.0 / 3.0 - self.masspole * costheta ** 2 / total_mass))
        xacc = temp - polemass_length * thetaacc * costheta / total_mass
        return (x + self.tau * x_dot,
                x_dot + self.tau * xacc,
                theta + self.tau * theta_dot,
                theta_dot + self.tau * thetaacc)

    def upright(self, x, theta):
        return (np.abs(x) < self.x_threshold) & (np.abs(theta) < self.theta_threshold)

    def reset(self, rng):
        return rng.uniform(4) * (2 * self.reset_bound) - self.reset_bound

    def step(self, state, action, rng=None, t=0):
        """Advance one sampling period; ``t`` is the number of steps already taken."""
        if action not in (0, 1):
            raise DomainError(f"cartpole action must be 0 or 1, got {action!r}")
        force = self.force_mag if action == 1 else -self.force_mag
        nxt = np.array(self.dynamics(*(float(v) for v in state), force))
        up = bool(self.upright(nxt[0], nxt[2]))
        return nxt, (1.0 if up else 0.0), (not up) or t + 1 >= self.max_steps

    def step_batch(self, states, actions):
        """Vectorised step for an ``(N, 4)`` batch; returns next states and upright flags."""
        force = np.where(np.asarray(actions) == 1, self.force_mag, -self.force_mag)
        nxt = np.stack(self.dynamics(states[:, 0], states[:, 1], states[:, 2], states[:, 3], force), axis=1)
        return nxt, self.upright(nxt[:, 0], nxt[:, 2])


def cartpole_step(env, state, action, t=0):
    return env.step(state, action, t=t)


def cartpole_reset(env, rng):
    return env.reset(rng)


# ---------------------------------------------------------------------------
# Linear quadratic system
# ---------------------------------------------------------------------------

@dataclass
class LinearQuadraticEnv:
    """``s' = A s + B a + w``, ``w ~ N(0, W)``, running cost ``s'Qs + a'Ra``.

    Rollouts start from ``s0 ~ N(0, x0_std^2 I)``; the default ``x0_std = 0`` starts at the origin.
    """

    A: np.ndarray
    B: np.ndarray
    W: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    x0_std: float = 0.0

    def __post_init__(self):
        self.A, self.B, self.W, self.Q, self.R = (np.atleast_2d(np.asarray(M, dtype=float))
                                                  for M in (self.A, self.B, self.W, self.Q, self.R))
        n, m = self.B.shape
        for name, M, shape in (("A", self.A, (n, n)), ("W", self.W, (n, n)),
                               ("Q", self.Q, (n, n)), ("R", self.R, (m, m))):
            if M.shape != shape:
                raise DimensionError(f"{name} has shape {M.shape}, expected {shape}")
        for name, M in (("W", self.W), ("Q", self.Q), ("R", self.R)):
            if np.max(np.abs(M - M.T)) > 1e-12:
                raise DomainError(f"{name} must be symmetric")
        if np.min(np.linalg.eigvalsh(self.W)) < -1e-12 or np.min(np.linalg.eigvalsh(self.Q)) < -1e-12:
            raise DomainError("W and Q must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(self.R)) <= 0:
            raise DomainError("R must be positive definite")
        # symmetric square root tolerates singular W (e.g. the noiseless case)
        vals, vecs_ = np.linalg.eigh(self.W)
        self._W_sqrt = vecs_ @ np.diag(np.sqrt(np.clip(vals, 0.0, None))) @ vecs_.T

    @property
    def n(self):
        return self.B.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def reset(self, rng):
        return self.x0_std * rng.standard_normal(self.n)

    def cost(self, s, a):
        return float(s @ self.Q @ s + a @ self.R @ a)

    def step(self, s, a, rng, t=0):
        s = np.asarray(s, dtype=float)
        a = np.atleast_1d(np.asarray(a, dtype=float))
        if s.shape != (self.n,) or a.shape != (self.m,):
            raise DimensionError(f"state {s.shape} / action {a.shape} do not fit n={self.n}, m={self.m}")
        w = self._W_sqrt @ rng.standard_normal(self.n)
        return self.A @ s + self.B @ a + w, self.cost(s, a), False


def lq_step(env, s, a, rng):
    s_next, c, _ = env.step(s, a, rng)
    return s_next, c


def is_stable(env, K):
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (env.m, env.n):
        raise DimensionError(f"gain must be {env.m}x{env.n}, got {K.shape}")
    return spectral_radius(env.A + env.B @ K) < 1.0 - 1e-9


# ---------------------------------------------------------------------------
# Rollouts and aggregation
# ---------------------------------------------------------------------------

def rollout(env, policy, T, rng, s0=None):
    """Run ``policy`` from a reset (or ``s0``) for at most ``T`` steps."""
    if T < 1:
        raise DomainError(f"rollout length must be positive, got {T}")
    traj = Trajectory()
    s = env.reset(rng) if s0 is None else s0
    for t in range(T):
        a = policy(s)
        s_next, r, done = env.step(s, a, rng, t)
        traj.append(s, a, r, s_next, done)
        if done:
            break
        s = s_next
    return traj


def total_reward(rewards, gamma):
    """Discounted sum with the first reward weighted by ``gamma**1``."""
    r = np.asarray(rewards, dtype=float)
    if r.size == 0:
        raise DomainError("total reward of an empty list")
    if not 0.0 <= gamma <= 1.0:
        raise DomainError(f"gamma={gamma} outside [0, 1]")
    return float(np.sum(gamma ** np.arange(1, r.size + 1) * r))


def average_cost(costs):
    c = np.asarray(costs, dtype=float)
    if c.size == 0:
        raise DomainError("average of an empty cost list")
    return float(np.mean(c))


def rewards_to_go(rewards, gamma):
    if len(rewards) == 0:
        raise DomainError("rewards-to-go of an empty list")
    if not 0.0 <= gamma <= 1.0:
        raise DomainError(f"gamma={gamma} outside [0, 1]")
    out = []
    acc = 0.0
    for r in reversed(rewards):
        acc = r + gamma * acc
        out.append(acc)
    out.reverse()
    return np.array(out)
