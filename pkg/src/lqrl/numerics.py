"""Small dense linear algebra, quadratic-feature algebra, Riccati oracles, Adam and seeded RNG.

Matrices are plain ``numpy`` float arrays. The upper-triangular vectorisation
used for quadratic Q-functions follows a fixed row-wise order::

    vecs(G) = [g11, g12, ..., g1n, g22, ..., g2n, ..., gnn]
    vecv(v) = [v1^2, 2 v1 v2, ..., 2 v1 vn, v2^2, ..., vn^2]

so that ``vecs(G) @ vecv(z) == z @ G @ z``.

Random numbers come from :class:`RngStream`, a thin wrapper around numpy's
``PCG64`` bit generator. Normals use numpy's ziggurat sampler
(``Generator.standard_normal``); uniforms are 53-bit doubles in [0, 1). Both are
platform independent, so a seed fully determines every draw.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConvergenceError, DimensionError, DomainError, SingularityError

SYMMETRY_TOL = 1e-9
CONDITION_LIMIT = 1e12


def _as_matrix(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {M.shape}")
    return M


# ---------------------------------------------------------------------------
# vecs / vecv algebra
# ---------------------------------------------------------------------------

def vecs(M):
    """Row-wise upper triangle of a symmetric matrix."""
    M = _as_matrix(M)
    n, k = M.shape
    if n != k:
        raise DimensionError(f"vecs needs a square matrix, got {M.shape}")
    asym = np.max(np.abs(M - M.T)) if n else 0.0
    if asym > SYMMETRY_TOL:
        raise DomainError(f"matrix is not symmetric (max |M - M^T| = {asym:.3g})")
    M = 0.5 * (M + M.T)
    return M[np.triu_indices(n)]


def vecv(v):
    """Quadratic monomial vector of ``v``; applied row-wise to a 2-D array."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] == 0:
        raise DimensionError("vecv of an empty vector")
    n = v.shape[-1]
    iu, ju = np.triu_indices(n)
    scale = np.where(iu == ju, 1.0, 2.0)
    return v[..., iu] * v[..., ju] * scale


def mat_from_vecs(s, n):
    """Inverse of :func:`vecs`: rebuild the symmetric ``n x n`` matrix."""
    s = np.asarray(s, dtype=float).ravel()
    if s.size != n * (n + 1) // 2:
        raise DimensionError(f"expected {n * (n + 1) // 2} entries for n={n}, got {s.size}")
    M = np.zeros((n, n))
    iu = np.triu_indices(n)
    M[iu] = s
    M.T[iu] = s
    return M


# ---------------------------------------------------------------------------
# Regression
# ---------------------------------------------------------------------------

def least_squares(X, y):
    """Solve ``min |X theta - y|^2`` through a QR factorisation.

    ``y`` may be a vector or a matrix of right-hand sides (one column each).
    """
    X = _as_matrix(X, "design matrix")
    y = np.asarray(y, dtype=float)
    N, p = X.shape
    if y.shape[0] != N:
        raise DimensionError(f"{N} regressor rows but {y.shape[0]} targets")
    if N < p:
        raise SingularityError(f"{N} samples cannot determine {p} parameters", np.inf)
    sv = np.linalg.svd(X, compute_uv=False)
    cond = np.inf if sv[-1] == 0 else (sv[0] / sv[-1]) ** 2
    if not cond < CONDITION_LIMIT:
        raise SingularityError(f"X^T X is singular to working precision (condition {cond:.3g})", cond)
    Qf, Rf = np.linalg.qr(X)
    return solve_triangular(Rf, Qf.T @ y)


def instrumental_variable_regression(X, y, Z):
    """``theta = (Z^T X)^{-1} Z^T y``.

    With ``Z`` identical to ``X`` this is ordinary least squares and is routed
    through :func:`least_squares` so both give the same numbers.
    """
    X = _as_matrix(X, "regressor matrix")
    Z = _as_matrix(Z, "instrument matrix")
    y = np.asarray(y, dtype=float)
    if X.shape != Z.shape:
        raise DimensionError(f"regressors {X.shape} and instruments {Z.shape} differ")
    if y.shape[0] != X.shape[0]:
        raise DimensionError(f"{X.shape[0]} rows but {y.shape[0]} targets")
    if Z is X or np.array_equal(Z, X):
        return least_squares(X, y)
    N = X.shape[0]
    ZX = Z.T @ X / N
    cond = np.linalg.cond(ZX)
    if not cond < CONDITION_LIMIT:
        raise SingularityError(f"Z^T X is singular to working precision (condition {cond:.3g})", cond)
    return np.linalg.solve(ZX, Z.T @ y / N)


# ---------------------------------------------------------------------------
# Stability, Riccati and Lyapunov
# ---------------------------------------------------------------------------

def spectral_radius(M):
    M = _as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"spectral radius of non-square {M.shape}")
    if not np.all(np.isfinite(M)):
        return np.inf
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def _check_lq_shapes(A, B, Qw, Rw):
    A, B, Qw, Rw = (_as_matrix(M, name) for M, name in ((A, "A"), (B, "B"), (Qw, "Q"), (Rw, "R")))
    n, m = B.shape
    if A.shape != (n, n) or Qw.shape != (n, n) or Rw.shape != (m, m):
        raise DimensionError(f"inconsistent shapes A{A.shape} B{B.shape} Q{Qw.shape} R{Rw.shape}")
    return A, B, Qw, Rw


def dare_residual(P, A, B, Qw, Rw):
    """Max-abs residual of ``P`` in the discrete algebraic Riccati equation."""
    A, B, Qw, Rw = _check_lq_shapes(A, B, Qw, Rw)
    return float(np.max(np.abs(_riccati_map(P, A, B, Qw, Rw) - P)))


def _riccati_map(P, A, B, Qw, Rw):
    BtPA = B.T @ P @ A
    P_next = A.T @ P @ A - BtPA.T @ np.linalg.solve(Rw + B.T @ P @ B, BtPA) + Qw
    return 0.5 * (P_next + P_next.T)


def _newton_polish(P, A, B, Qw, Rw, steps=5):
    # Hewer steps: evaluate the greedy gain of P exactly; keep the best plug-back residual
    best, best_res = P, np.max(np.abs(_riccati_map(P, A, B, Qw, Rw) - P))
    for _ in range(steps):
        K = -np.linalg.solve(Rw + B.T @ P @ B, B.T @ P @ A)
        try:
            P = solve_policy_lyapunov(A, B, Qw, Rw, K)
        except DomainError:
            break
        res = np.max(np.abs(_riccati_map(P, A, B, Qw, Rw) - P))
        if res < best_res:
            best, best_res = P, res
    return best


def solve_dare(A, B, Qw, Rw, tol=1e-12, max_iter=10000):
    """Optimal LQ kernel ``P`` and gain ``K`` (control law ``u = K s``).

    Riccati value iteration from ``P0 = Q``, stopped once an update moves no
    entry by more than ``tol * max(1, max|P|)``. A few extra sweeps then run
    for as long as the update keeps shrinking, followed by a few Newton
    (policy-evaluation) steps that keep whichever kernel has the smallest
    plug-back residual.
    """
    A, B, Qw, Rw = _check_lq_shapes(A, B, Qw, Rw)
    P = Qw.copy()
    for _ in range(max_iter):
        P_next = _riccati_map(P, A, B, Qw, Rw)
        if not np.all(np.isfinite(P_next)):
            break
        step = np.max(np.abs(P_next - P))
        P = P_next
        if step <= tol * max(1.0, np.max(np.abs(P))):
            for _ in range(100):
                P_next = _riccati_map(P, A, B, Qw, Rw)
                next_step = np.max(np.abs(P_next - P))
                if not next_step < step:
                    break
                P, step = P_next, next_step
            P = _newton_polish(P, A, B, Qw, Rw)
            K = -np.linalg.solve(Rw + B.T @ P @ B, B.T @ P @ A)
            if spectral_radius(A + B @ K) >= 1.0:
                break
            return P, K
    raise ConvergenceError(f"Riccati iteration did not converge in {max_iter} iterations "
                           "(is (A, B) stabilisable?)")


def solve_policy_lyapunov(A, B, Qw, Rw, K):
    """Cost kernel ``P_K`` of the linear policy ``u = K s``.

    Solves ``P = Q + K^T R K + (A + B K)^T P (A + B K)`` exactly through its
    Kronecker form.
    """
    A, B, Qw, Rw = _check_lq_shapes(A, B, Qw, Rw)
    K = _as_matrix(K, "K")
    n, m = B.shape
    if K.shape != (m, n):
        raise DimensionError(f"gain must be {m}x{n}, got {K.shape}")
    Acl = A + B @ K
    rho = spectral_radius(Acl)
    if not rho < 1.0:
        raise DomainError(f"policy is not stabilising (spectral radius {rho:.6g})")
    M = Qw + K.T @ Rw @ K
    lhs = np.eye(n * n) - np.kron(Acl.T, Acl.T)
    P = np.linalg.solve(lhs, M.ravel()).reshape(n, n)
    return 0.5 * (P + P.T)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    shape: tuple
    step_size: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1.0e-8
    t: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.shape = tuple(int(d) for d in np.atleast_1d(np.asarray(self.shape, dtype=int)))
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise DomainError("Adam betas must lie in (0, 1)")
        if self.m is None:
            self.m = np.zeros(self.shape)
        if self.v is None:
            self.v = np.zeros(self.shape)


def adam_step(state, gradient):
    """Advance ``state`` by one Adam step and return the parameter increment.

    The increment points along ``+gradient`` (ascent); subtract it to descend.
    """
    g = np.asarray(gradient, dtype=float)
    if g.shape != state.m.shape:
        raise DimensionError(f"gradient shape {g.shape} != Adam state shape {state.m.shape}")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    return state.step_size * m_hat / (np.sqrt(v_hat) + state.epsilon)


def finite_difference_gradient(f, x, h=1e-5):
    """Central-difference gradient of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=float).ravel()
    grad = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return grad


# ---------------------------------------------------------------------------
# Random numbers
# ---------------------------------------------------------------------------

class RngStream:
    """Seeded random stream (PCG64 + ziggurat normals)."""

    def __init__(self, seed):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def uniform(self, size=None):
        return self._gen.random(size)

    def integers(self, high, size=None):
        return self._gen.integers(high, size=size)

    def choice(self, probs):
        """Index ``i`` with probability ``probs[i]``."""
        p = np.asarray(probs, dtype=float).ravel()
        if p.size == 0:
            raise DimensionError("choice over an empty distribution")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise DomainError(f"probabilities must be finite and nonnegative: {p}")
        total = p.sum()
        if abs(total - 1.0) > 1e-6:
            raise DomainError(f"probabilities sum to {total}, not 1")
        cdf = np.cumsum(p / total)
        idx = int(np.searchsorted(cdf, self.uniform(), side="right"))
        # guard against cdf[-1] rounding below the draw, and never return a zero-mass index
        idx = min(idx, p.size - 1)
        while p[idx] == 0.0 and idx > 0:
            idx -= 1
        return idx

    def sample_without_replacement(self, n, k):
        """``k`` distinct indices drawn uniformly from ``range(n)``."""
        return self._gen.choice(n, size=k, replace=False)

    def spawn(self, key):
        """Independent child stream determined by this stream's seed and ``key``."""
        child = np.random.SeedSequence([self.seed & (2**63 - 1), int(key)])
        return RngStream(int(child.generate_state(1, np.uint64)[0]))
