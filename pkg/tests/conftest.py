import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lqrl.envs import LinearQuadraticEnv

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# Frozen oracle values (closed forms checked in test_numerics).
SCALAR_P = 2.123596765818367  # a=.9, b=.5, q=r=1: root of .25 P^2 - .06 P - 1 = 0
SCALAR_K = -0.6242204254548461
BENCH_P = np.array([[15.515681418386514, 9.07147496466787],
                    [9.07147496466787, 16.6805949151942]])
BENCH_K = np.array([[-0.7696875578624353, -1.4922674160343172]])


def benchmark_matrices():
    A = 0.99 * np.array([[1.0, 0.1], [0.0, 1.0]])
    B = np.array([[0.0], [0.1]])
    return A, B, np.eye(2), np.eye(1)


@pytest.fixture
def scalar_env():
    return LinearQuadraticEnv([[0.9]], [[0.5]], [[0.01]], [[1.0]], [[1.0]])


@pytest.fixture
def bench_env():
    A, B, Q, R = benchmark_matrices()
    return LinearQuadraticEnv(A, B, 0.01 * np.eye(2), Q, R)


@pytest.fixture
def noiseless_bench_env():
    A, B, Q, R = benchmark_matrices()
    return LinearQuadraticEnv(A, B, np.zeros((2, 2)), Q, R)
