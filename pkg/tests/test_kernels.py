import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad_vec

from mapsoe.errors import StructuralError, ValidationError
from mapsoe.kernels import (check_generator, convolution_integral, deviation_matrix,
                            is_irreducible, matrix_exponential, stationary_distribution,
                            transient_deviation_matrix)

from conftest import random_generator


def two_state(a, b):
    return np.array([[-a, a], [b, -b]])


def taylor_expm(A, terms=30):
    # truncated series on A / 2^s, then s squarings
    s = max(0, int(np.ceil(np.log2(max(np.abs(A).sum(axis=1).max(), 1e-300)))) + 1)
    B = A / 2**s
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms):
        term = term @ B / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


class TestMatrixExponential:
    def test_zero_time_is_identity(self):
        assert np.array_equal(matrix_exponential(two_state(1, 2), 0.0), np.eye(2))

    def test_diagonal(self):
        E = matrix_exponential(np.diag([-1.0, -2.0, 0.5]), 2.0)
        assert np.allclose(E, np.diag(np.exp([-2.0, -4.0, 1.0])), rtol=1e-14)

    def test_nilpotent(self):
        N = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
        expected = np.array([[1.0, 3.0, 4.5], [0.0, 1.0, 3.0], [0.0, 0.0, 1.0]])
        assert np.allclose(matrix_exponential(N, 3.0), expected, atol=1e-13)

    @pytest.mark.parametrize("a,b,t", [(1.0, 2.0, 0.3), (5.0, 5.0, 1.0), (0.1, 30.0, 4.0)])
    def test_two_state_closed_form(self, a, b, t):
        s = a + b
        pi = np.array([b, a]) / s
        expected = np.outer(np.ones(2), pi) + math.exp(-s * t) / s * np.array([[a, -a], [-b, b]])
        assert np.allclose(matrix_exponential(two_state(a, b), t), expected, atol=1e-14)

    @given(st.integers(2, 5), st.integers(0, 2**31 - 1), st.floats(0.01, 2.0))
    @settings(max_examples=40, deadline=None)
    def test_matches_taylor_series(self, p, seed, t):
        Q = random_generator(p, np.random.default_rng(seed))
        assert np.allclose(matrix_exponential(Q, t), taylor_expm(Q * t), atol=1e-12)

    @given(st.integers(2, 5), st.integers(0, 2**31 - 1), st.floats(0.0, 3.0), st.floats(0.0, 3.0))
    @settings(max_examples=40, deadline=None)
    def test_semigroup_and_stochastic(self, p, seed, s, t):
        Q = random_generator(p, np.random.default_rng(seed))
        Es, Et, Est = (matrix_exponential(Q, x) for x in (s, t, s + t))
        assert np.allclose(Es @ Et, Est, atol=1e-12)
        assert np.allclose(Est.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(Est > -1e-14)

    @pytest.mark.parametrize("t", [-1.0, np.inf, np.nan])
    def test_bad_time(self, t):
        with pytest.raises(ValidationError):
            matrix_exponential(two_state(1, 1), t)

    def test_non_square(self):
        with pytest.raises(ValidationError):
            matrix_exponential(np.ones((2, 3)))


class TestStationary:
    def test_two_state(self):
        assert np.allclose(stationary_distribution(two_state(1.0, 3.0)), [0.75, 0.25], atol=1e-15)

    def test_one_phase(self):
        assert np.array_equal(stationary_distribution([[0.0]]), [1.0])

    def test_birth_death_detailed_balance(self):
        lam, mu, p = 1.0, 2.0, 5
        Q = np.zeros((p, p))
        for i in range(p - 1):
            Q[i, i + 1] = lam
            Q[i + 1, i] = mu
        np.fill_diagonal(Q, -Q.sum(axis=1))
        r = lam / mu
        expected = r ** np.arange(p) / np.sum(r ** np.arange(p))
        assert np.allclose(stationary_distribution(Q), expected, atol=1e-14)

    def test_reducible(self):
        Q = np.array([[-1.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 1.0, -1.0]])
        assert not is_irreducible(Q)
        with pytest.raises(StructuralError):
            stationary_distribution(Q)
        with pytest.raises(StructuralError):
            check_generator(Q)

    def test_check_generator_row_sum(self):
        with pytest.raises(ValidationError, match="row sum"):
            check_generator([[-1.0, 1.1], [1.0, -1.0]])


class TestDeviation:
    @pytest.mark.parametrize("a,b", [(1.0, 2.0), (5.0, 5.0), (0.2, 7.0)])
    def test_two_state_closed_form(self, a, b):
        dev = deviation_matrix(two_state(a, b)).dev
        assert np.allclose(dev, np.array([[a, -a], [-b, b]]) / (a + b) ** 2, atol=1e-15)

    def test_matches_integral_definition(self, rng):
        Q = random_generator(3, rng)
        d = deviation_matrix(Q)
        one_pi = np.outer(np.ones(3), d.pi)
        # the transient part decays like e^{-3.7 u}; 100 is effectively infinity
        integral, _ = quad_vec(lambda u: matrix_exponential(Q, u) - one_pi, 0, 100.0,
                               epsabs=1e-13)
        assert np.allclose(d.dev, integral, atol=1e-9)

    @pytest.mark.parametrize("t", [0.0, 0.05, 0.7, 3.0])
    def test_transient_matches_quadrature(self, rng, t):
        Q = random_generator(4, rng)
        pi = stationary_distribution(Q)
        one_pi = np.outer(np.ones(4), pi)
        expected, _ = quad_vec(lambda u: matrix_exponential(Q, u) - one_pi, 0, t, epsabs=1e-14)
        assert np.allclose(transient_deviation_matrix(Q, t), expected, atol=1e-12)

    def test_transient_limit(self, rng):
        Q = random_generator(3, rng)
        dev = deviation_matrix(Q).dev
        assert np.array_equal(transient_deviation_matrix(Q, np.inf), dev)
        assert np.allclose(transient_deviation_matrix(Q, 200.0), dev, atol=1e-12)


class TestConvolution:
    @pytest.mark.parametrize("t", [0.1, 1.0, 2.5])
    def test_matches_quadrature(self, rng, t):
        Q = random_generator(3, rng)
        M = rng.normal(size=(3, 3))
        expected, _ = quad_vec(
            lambda s: matrix_exponential(Q, t - s) @ M @ matrix_exponential(Q, s), 0, t,
            epsabs=1e-14)
        assert np.allclose(convolution_integral(Q, M, t), expected, atol=1e-12)

    def test_commuting_case(self):
        Q = two_state(1.0, 2.0)
        t = 0.8
        assert np.allclose(convolution_integral(Q, np.eye(2), t), t * matrix_exponential(Q, t),
                           atol=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            convolution_integral(np.zeros((2, 2)), np.zeros((3, 3)), 1.0)
