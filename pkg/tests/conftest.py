import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def brute_cyclic_convolve(a, x):
    """O(m*k) double-loop cyclic convolution, 1-indexed formula transcribed."""
    k, m = len(a), len(x)
    y = np.zeros(m)
    for j in range(m):
        for i in range(k):
            y[j] += a[i] * x[(j - i) % m]
    return y


def materialize_windows(y, k):
    """m x k matrix whose i-th row is the cyclic k-window of y starting at i."""
    m = len(y)
    W = np.zeros((m, k))
    for i in range(m):
        W[i] = y[np.arange(i, i + k) % m]
    return W


def random_sphere(k, rng):
    q = rng.standard_normal(k)
    return q / np.linalg.norm(q)


def random_tangent(q, rng):
    v = rng.standard_normal(len(q))
    v -= q * np.dot(q, v)
    return v / np.linalg.norm(v)
