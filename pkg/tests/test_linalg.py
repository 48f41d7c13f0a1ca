import math

import mpmath
import numpy as np
import pytest

from rasched.errors import DomainError
from rasched.linalg import matrix_exponential, solve_row_upper


def series_expm(m, dps=40):
    """Reference exponential in extended precision."""
    with mpmath.workdps(dps):
        e = mpmath.expm(mpmath.matrix(m.tolist()))
        return np.array([[float(e[i, j]) for j in range(e.cols)] for i in range(e.rows)])


def random_generator(rng, d, scale):
    m = np.triu(rng.uniform(0, scale, (d, d)), 1)
    np.fill_diagonal(m, -rng.uniform(0.1, 1.0, d) * scale - m.sum(axis=1))
    return m


def test_zero_matrix_gives_identity():
    assert np.array_equal(matrix_exponential(np.zeros((3, 3))), np.eye(3))


def test_diagonal():
    got = matrix_exponential(np.diag([-1.0, -2.0]) * 1.5)
    assert np.allclose(got, np.diag([math.exp(-1.5), math.exp(-3.0)]), rtol=1e-14, atol=0)


@pytest.mark.parametrize("mu,x", [(1.0, 0.3), (2.0, 1.0), (0.7, 25.0), (5.0, 40.0)])
def test_jordan_block(mu, x):
    got = matrix_exponential(np.array([[-mu, mu], [0.0, -mu]]) * x)
    e = math.exp(-mu * x)
    expected = np.array([[e, mu * x * e], [0.0, e]])
    assert np.allclose(got, expected, rtol=1e-12, atol=1e-300)


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("scale", [0.01, 0.5, 3.0, 40.0])
def test_against_extended_precision(seed, scale):
    rng = np.random.default_rng(seed)
    m = random_generator(rng, 3, scale)
    ref = series_expm(m)
    got = matrix_exponential(m)
    mask = np.abs(ref) > 1e-250
    assert np.all(np.abs(got[mask] - ref[mask]) <= 1e-10 * np.abs(ref[mask]) + 1e-15 * np.abs(ref).max())


@pytest.mark.parametrize("seed", range(5))
def test_larger_chain_against_extended_precision(seed):
    rng = np.random.default_rng(100 + seed)
    m = random_generator(rng, 12, 2.0) * 3.0
    ref = series_expm(m, dps=60)
    got = matrix_exponential(m)
    assert np.allclose(got, ref, rtol=1e-9, atol=1e-14 * np.abs(ref).max())


def test_rejects_lower_entries_and_nonfinite():
    with pytest.raises(DomainError):
        matrix_exponential(np.array([[-1.0, 0.0], [1.0, -1.0]]))
    with pytest.raises(DomainError):
        matrix_exponential(np.array([[-np.inf, 0.0], [0.0, -1.0]]))
    with pytest.raises(DomainError):
        matrix_exponential(np.zeros((2, 3)))


def test_row_solve():
    rng = np.random.default_rng(3)
    m = random_generator(rng, 5, 1.0)
    v = rng.random(5)
    assert np.allclose(solve_row_upper(v, m) @ m, v, rtol=1e-12)
