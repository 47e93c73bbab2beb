import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from conftest import BENCH_K, BENCH_P, SCALAR_K, SCALAR_P, benchmark_matrices
from lqrl.errors import ConvergenceError, DimensionError, DomainError, SingularityError
from lqrl.numerics import (AdamState, RngStream, adam_step, dare_residual, finite_difference_gradient,
                           instrumental_variable_regression, least_squares, mat_from_vecs, solve_dare,
                           solve_policy_lyapunov, spectral_radius, vecs, vecv)

def random_symmetric(rng, n):
    M = rng.standard_normal((n, n))
    return M + M.T


# vecs / vecv

def test_vecs_golden():
    assert vecs(np.eye(2)).tolist() == [1, 0, 1]
    assert vecs([[1, 2], [2, 3]]).tolist() == [1, 2, 3]
    M = np.arange(9.0).reshape(3, 3)
    assert vecs(M + M.T).tolist() == [0, 4, 8, 8, 12, 16]


def test_vecv_golden():
    assert vecv([1, 0]).tolist() == [1, 0, 0]
    assert vecv([1, 2]).tolist() == [1, 4, 4]
    assert vecv([1, 2, 3]).tolist() == [1, 4, 6, 4, 12, 9]


def test_vecs_vecv_hand_example():
    assert np.dot(vecs([[1, 2], [2, 3]]), vecv([1, 1])) == 8


def test_vecv_rowwise_on_batches():
    Z = np.array([[1.0, 2.0], [3.0, -1.0]])
    assert np.array_equal(vecv(Z), np.stack([vecv(Z[0]), vecv(Z[1])]))


def test_vecs_errors():
    with pytest.raises(DimensionError):
        vecs(np.ones((2, 3)))
    with pytest.raises(DomainError):
        vecs([[1, 2], [2.1, 3]])
    with pytest.raises(DimensionError):
        vecv([])


def test_vecs_symmetrises_within_tolerance():
    M = np.array([[1.0, 2.0], [2.0 + 5e-10, 3.0]])
    assert vecs(M)[1] == pytest.approx(2.0 + 2.5e-10, abs=1e-15)


def test_mat_from_vecs_examples():
    assert np.array_equal(mat_from_vecs([1, 0, 1], 2), np.eye(2))
    assert np.array_equal(mat_from_vecs([1, 2, 3], 2), [[1, 2], [2, 3]])
    with pytest.raises(DimensionError):
        mat_from_vecs([1, 2], 2)


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_vecs_round_trip(n, seed):
    M = random_symmetric(np.random.default_rng(seed), n)
    assert np.array_equal(mat_from_vecs(vecs(M), n), M)
    s = vecs(M)
    assert np.array_equal(vecs(mat_from_vecs(s, n)), s)


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_quadratic_form_identity(n, seed):
    rng = np.random.default_rng(seed)
    G = random_symmetric(rng, n)
    z = rng.standard_normal(n)
    direct = z @ G @ z
    assert np.dot(vecs(G), vecv(z)) == pytest.approx(direct, rel=1e-10, abs=1e-10)


# regression

def test_least_squares_examples():
    assert least_squares([[1], [1]], [2, 2]) == pytest.approx([2])
    assert least_squares(np.eye(2), [3, 5]) == pytest.approx([3, 5])


def test_least_squares_matrix_rhs():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((20, 3))
    Theta = rng.standard_normal((3, 2))
    assert np.allclose(least_squares(X, X @ Theta), Theta, atol=1e-12)


def test_least_squares_rank_deficient():
    X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(SingularityError) as info:
        least_squares(X, [1, 2, 3])
    assert info.value.condition > 1e12
    with pytest.raises(SingularityError):
        least_squares(np.ones((1, 2)), [1.0])


def test_least_squares_noiseless_arx():
    a1, b1 = -0.5, 1.0
    rng = np.random.default_rng(2)
    u = rng.standard_normal(200)
    y = np.zeros(200)
    for t in range(1, 200):
        y[t] = -a1 * y[t - 1] + b1 * u[t - 1]
    X = np.column_stack([-y[:-1], u[:-1]])
    assert least_squares(X, y[1:]) == pytest.approx([a1, b1], abs=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_iv_reduces_to_least_squares(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((30, 4))
    y = rng.standard_normal(30)
    assert np.max(np.abs(instrumental_variable_regression(X, y, X) - least_squares(X, y))) <= 1e-12
    assert np.max(np.abs(instrumental_variable_regression(X, y, X.copy()) - least_squares(X, y))) <= 1e-12


def test_iv_formula_and_errors():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((50, 3))
    Z = X + 0.3 * rng.standard_normal((50, 3))
    y = rng.standard_normal(50)
    expected = np.linalg.inv(Z.T @ X) @ Z.T @ y
    assert np.allclose(instrumental_variable_regression(X, y, Z), expected, atol=1e-10)
    with pytest.raises(SingularityError):
        instrumental_variable_regression(X, y, np.zeros_like(X))
    with pytest.raises(DimensionError):
        instrumental_variable_regression(X, y, Z[:, :2])


# Riccati and Lyapunov

def test_dare_golden_ratio():
    P, K = solve_dare([[1.0]], [[1.0]], [[1.0]], [[1.0]])
    golden = (1 + math.sqrt(5)) / 2
    assert abs(P[0, 0] - golden) <= 1e-9
    assert abs(K[0, 0] + (golden - 1)) <= 1e-9


def test_dare_scalar_benchmark_closed_form():
    P, K = solve_dare([[0.9]], [[0.5]], [[1.0]], [[1.0]])
    root = (0.06 + math.sqrt(0.06 ** 2 + 1.0)) / 0.5
    assert P[0, 0] == pytest.approx(root, abs=1e-12)
    assert P[0, 0] == pytest.approx(SCALAR_P, abs=1e-12)
    assert K[0, 0] == pytest.approx(SCALAR_K, abs=1e-12)


def test_dare_benchmark_matches_scipy():
    A, B, Q, R = benchmark_matrices()
    P, K = solve_dare(A, B, Q, R)
    assert np.allclose(P, scipy.linalg.solve_discrete_are(A, B, Q, R), atol=1e-8)
    assert np.allclose(P, BENCH_P, atol=1e-9)
    assert np.allclose(K, BENCH_K, atol=1e-10)


def test_dare_zero_dynamics():
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    P, K = solve_dare(np.zeros((2, 2)), np.eye(2), Q, np.eye(2))
    assert np.allclose(P, Q) and np.allclose(K, 0)


@given(st.integers(0, 2**32 - 1))
def test_dare_residual_random_2x2(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((2, 2))
    B = rng.standard_normal((2, 1))
    ctrb = np.hstack([B, A @ B])
    if np.linalg.cond(ctrb) > 100:
        return  # nearly uncontrollable: the kernel blows up and the problem is ill-posed
    P, K = solve_dare(A, B, np.eye(2), np.eye(1))
    # residual relative to the kernel scale; P can reach 1e6 where one ulp exceeds 1e-10
    assert dare_residual(P, A, B, np.eye(2), np.eye(1)) <= 1e-10 * max(1.0, np.max(np.abs(P)))
    assert spectral_radius(A + B @ K) < 1


def test_dare_unstabilisable():
    with pytest.raises(ConvergenceError):
        solve_dare([[2.0]], [[0.0]], [[1.0]], [[1.0]], max_iter=500)


def test_lyapunov_examples():
    assert solve_policy_lyapunov([[0.5]], [[0.0]], [[1.0]], [[1.0]], [[0.0]])[0, 0] == pytest.approx(4 / 3)
    # A + BK = 0 gives a one-step system
    P = solve_policy_lyapunov([[0.5]], [[1.0]], [[1.0]], [[2.0]], [[-0.5]])
    assert P[0, 0] == pytest.approx(1 + 2 * 0.25)
    with pytest.raises(DomainError):
        solve_policy_lyapunov([[2.0]], [[1.0]], [[1.0]], [[1.0]], [[0.0]])


def test_lyapunov_at_optimum_equals_dare():
    A, B, Q, R = benchmark_matrices()
    P, K = solve_dare(A, B, Q, R)
    assert np.allclose(solve_policy_lyapunov(A, B, Q, R, K), P, atol=1e-9)


def test_lyapunov_residual():
    A, B, Q, R = benchmark_matrices()
    K = np.array([[-0.2, -0.5]])
    P = solve_policy_lyapunov(A, B, Q, R, K)
    Acl = A + B @ K
    assert np.max(np.abs(Q + K.T @ R @ K + Acl.T @ P @ Acl - P)) <= 1e-12 * max(1.0, np.max(np.abs(P)))


def test_spectral_radius():
    assert spectral_radius([[0.5, 1.0], [0.0, -0.7]]) == pytest.approx(0.7)
    assert spectral_radius([[0.0, -1.0], [1.0, 0.0]]) == pytest.approx(1.0)
    assert spectral_radius([[np.nan]]) == np.inf


# Adam

def test_adam_first_step_is_sign_scaled():
    st_ = AdamState((2, 3))
    g = np.array([[1.0, -2.0, 3e-3], [-4.0, 5.0, 1e-6]])
    inc = adam_step(st_, g)
    assert np.all(np.sign(inc) == np.sign(g))
    assert np.all(np.abs(inc) <= 0.1 * (1 + 1e-6))


def test_adam_two_identical_steps_closed_form():
    st_ = AdamState((1,), step_size=0.1)
    adam_step(st_, np.array([2.0]))
    inc = adam_step(st_, np.array([2.0]))
    m = (0.9 * 0.1 * 2 + 0.1 * 2) / (1 - 0.9 ** 2)
    v = (0.999 * 0.001 * 4 + 0.001 * 4) / (1 - 0.999 ** 2)
    assert inc[0] == pytest.approx(0.1 * m / (math.sqrt(v) + 1e-8), rel=1e-14)


def test_adam_zero_gradient_and_shape_check():
    st_ = AdamState((3,))
    for _ in range(10):
        assert np.all(adam_step(st_, np.zeros(3)) == 0)
    with pytest.raises(DimensionError):
        adam_step(st_, np.zeros(2))
    with pytest.raises(DomainError):
        AdamState((1,), beta1=1.0)


def test_finite_difference_gradient():
    assert finite_difference_gradient(lambda x: x @ x, [1.0, 2.0]) == pytest.approx([2, 4], abs=1e-8)
    assert np.all(finite_difference_gradient(lambda x: 3.0, [1.0, 2.0]) == 0)


# random streams

def test_rng_determinism():
    a, b = RngStream(7), RngStream(7)
    assert np.array_equal(a.standard_normal(100), b.standard_normal(100))
    assert RngStream(7).uniform() != RngStream(8).uniform()


def test_rng_spawn_is_reproducible_and_distinct():
    a, b = RngStream(3).spawn(1), RngStream(3).spawn(1)
    assert a.uniform() == b.uniform()
    assert RngStream(3).spawn(1).uniform() != RngStream(3).spawn(2).uniform()


def test_choice_examples():
    rng = RngStream(0)
    assert all(rng.choice([1.0, 0.0, 0.0]) == 0 for _ in range(200))
    assert all(rng.choice([0.0, 0.0, 1.0]) == 2 for _ in range(200))
    draws = [rng.choice([0.5, 0.5]) for _ in range(10000)]
    assert 0.47 <= draws.count(0) / 10000 <= 0.53
    with pytest.raises(DomainError):
        rng.choice([-0.1, 1.1])
    with pytest.raises(DomainError):
        rng.choice([0.3, 0.3])


@given(hnp.arrays(float, st.integers(1, 6), elements=st.floats(0, 1)), st.integers(0, 1000))
def test_choice_never_returns_zero_mass(p, seed):
    if p.sum() == 0:
        return
    p = p / p.sum()
    rng = RngStream(seed)
    for _ in range(20):
        assert p[rng.choice(p)] > 0


def test_sample_without_replacement():
    idx = RngStream(1).sample_without_replacement(10, 10)
    assert sorted(idx.tolist()) == list(range(10))
