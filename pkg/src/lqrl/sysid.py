"""System identification (ARX, batch and recursive least squares) and certainty-equivalence adaptive LQ control."""

import logging
from dataclasses import dataclass

import numpy as np

from .envs import Trajectory
from .errors import ConvergenceError, DimensionError, DomainError, SingularityError
from .numerics import least_squares, solve_dare

log = logging.getLogger(__name__)


@dataclass
class ArxModel:
    """``y(t) + a1 y(t-1) + ... + an y(t-n) = b1 u(t-1) + ... + bm u(t-m)``."""

    n: int
    m: int
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).ravel()
        if self.theta.size != self.n + self.m:
            raise DimensionError(f"theta has {self.theta.size} entries, expected {self.n + self.m}")

    @property
    def a(self):
        return self.theta[:self.n]

    @property
    def b(self):
        return self.theta[self.n:]


def arx_regressor(y, u, t, n, m):
    """``phi(t) = [-y(t-1), ..., -y(t-n), u(t-1), ..., u(t-m)]`` (0-based ``t``)."""
    if t < max(n, m) or t > min(len(y), len(u)):
        raise DomainError(f"t={t} needs at least max(n, m)={max(n, m)} past samples")
    past_y = [-y[t - k] for k in range(1, n + 1)]
    past_u = [u[t - k] for k in range(1, m + 1)]
    return np.array(past_y + past_u, dtype=float)


def arx_predict(model, phi):
    phi = np.asarray(phi, dtype=float)
    if phi.shape != model.theta.shape:
        raise DimensionError(f"regressor {phi.shape} vs parameters {model.theta.shape}")
    return float(phi @ model.theta)


def arx_design(y, u, n, m):
    """Stacked regressors and targets for every usable ``t``."""
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    if y.shape != u.shape:
        raise DimensionError(f"output and input series differ in length: {y.shape} vs {u.shape}")
    start = max(n, m)
    Phi = np.array([arx_regressor(y, u, t, n, m) for t in range(start, len(y))]).reshape(-1, n + m)
    return Phi, y[start:]


def arx_fit_batch(y, u, n, m):
    Phi, target = arx_design(y, u, n, m)
    if Phi.shape[0] < n + m:
        raise DomainError(f"series of length {len(y)} is too short for an ARX({n}, {m}) fit")
    return ArxModel(n, m, least_squares(Phi, target))


def simulate_arx(model, u, y0=None, noise=None):
    """Forward-simulate the ARX difference equation for input ``u``."""
    N = len(u)
    y = np.zeros(N)
    start = max(model.n, model.m)
    if y0 is not None:
        y[:start] = y0
    for t in range(start, N):
        y[t] = arx_regressor(y, u, t, model.n, model.m) @ model.theta
        if noise is not None:
            y[t] += noise[t]
    return y


# ---------------------------------------------------------------------------
# Recursive least squares
# ---------------------------------------------------------------------------

@dataclass
class RlsState:
    theta: np.ndarray
    D: np.ndarray

    @classmethod
    def initial(cls, p, delta=1e-6, theta0=None):
        theta = np.zeros(p) if theta0 is None else np.asarray(theta0, dtype=float).copy()
        return cls(theta, delta * np.eye(p))


def rls_update(state, y_t, phi_t):
    """One information-form RLS step; returns a new state."""
    phi = np.asarray(phi_t, dtype=float)
    if phi.shape != state.theta.shape:
        raise DimensionError(f"regressor {phi.shape} vs parameters {state.theta.shape}")
    D = state.D + np.outer(phi, phi)
    innovation = y_t - phi @ state.theta
    theta = state.theta + np.linalg.solve(D, phi) * innovation
    return RlsState(theta, D)


def rls_fit(y, u, n, m, delta=1e-6):
    """Run RLS through an ARX data record and return the final state."""
    Phi, target = arx_design(y, u, n, m)
    state = RlsState.initial(n + m, delta)
    for phi, yt in zip(Phi, target):
        state = rls_update(state, yt, phi)
    return state


def prediction_error_gradient(model, phi):
    """``d yhat / d theta``; for ARX this is the regressor itself."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != model.theta.shape:
        raise DimensionError(f"regressor {phi.shape} vs parameters {model.theta.shape}")
    return phi.copy()


# ---------------------------------------------------------------------------
# Linear state-space identification and adaptive control
# ---------------------------------------------------------------------------

def identify_linear_ss(trajectory):
    """Least-squares estimate of ``(A, B)`` from ``s' = A s + B a + w`` samples."""
    S = np.vstack(trajectory.states)
    U = np.vstack([np.atleast_1d(a) for a in trajectory.actions])
    S_next = np.vstack(trajectory.next_states)
    n, m = S.shape[1], U.shape[1]
    Theta = least_squares(np.hstack([S, U]), S_next)
    AB = Theta.T
    return AB[:, :n], AB[:, n:]


def adaptive_lq_control(env, horizon, excitation_std, replan_every, rng, warmup=None):
    """Certainty-equivalence LQ control with periodic re-identification.

    The first ``warmup`` steps (default ``10 (n + m)``) apply excitation only.
    Afterwards the action is ``K s + excitation``. Every ``replan_every`` steps
    ``(A, B)`` is re-identified from all data so far and ``K`` is recomputed from
    the Riccati equation of the estimate. Returns the trajectory and the gain
    history (initial gain first, then one entry per replan).
    """
    n, m = env.n, env.m
    warmup = 10 * (n + m) if warmup is None else warmup
    if horizon < warmup:
        raise DomainError(f"horizon {horizon} is shorter than the excitation window {warmup}")
    K = np.zeros((m, n))
    gains = [K.copy()]
    traj = Trajectory()
    s = env.reset(rng)
    for t in range(horizon):
        a = excitation_std * rng.standard_normal(m)
        if t >= warmup:
            a = K @ s + a
        s_next, c, _ = env.step(s, a, rng, t)
        traj.append(s, a, c, s_next, False)
        s = s_next
        if (t + 1) % replan_every == 0:
            try:
                A_hat, B_hat = identify_linear_ss(traj)
                _, K = solve_dare(A_hat, B_hat, env.Q, env.R)
            except (SingularityError, ConvergenceError, np.linalg.LinAlgError) as exc:
                log.info("replan at t=%d skipped, keeping previous gain: %s", t + 1, exc)
            gains.append(K.copy())
    return traj, gains
