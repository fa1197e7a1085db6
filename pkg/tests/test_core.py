import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from mapsoe import (MarkovArrivalProcess, Mmpp, asymptotic_rate, count_mean, count_report,
                    count_third_moment, count_variance, coupled_map_from_mmpp, dispersion_limit,
                    mtcp_from_slow_mmpp, validate, variance_y_intercept)
from mapsoe.errors import UnsupportedCaseError, ValidationError

from conftest import random_map


def factorial_moments(m, t, eta=None, order=3):
    """E[N(N-1)...(N-k+1)] / k! for k = 1..order from one block exponential.

    Block (0, k) of exp(A t) with Q on the diagonal and D on the
    superdiagonal is the k-fold event convolution.
    """
    p = m.order
    n = order + 1
    A = np.zeros((n * p, n * p))
    for i in range(n):
        A[i * p:(i + 1) * p, i * p:(i + 1) * p] = m.Q
        if i < order:
            A[i * p:(i + 1) * p, (i + 1) * p:(i + 2) * p] = m.D
    E = expm(A * t)
    start = m.pi if eta is None else np.asarray(eta)
    return [float(start @ E[:p, k * p:(k + 1) * p] @ np.ones(p)) for k in range(1, n)]


def raw_from_factorial(f):
    m1, f2, f3 = f[0], 2 * f[1], 6 * f[2]
    return m1, f2 + m1 - m1 * m1, f3 + 3 * f2 + m1


class TestPoisson:
    @pytest.mark.parametrize("rate,t", [(3.0, 2.0), (0.5, 10.0), (7.0, 0.1)])
    def test_moments(self, rate, t):
        m = MarkovArrivalProcess.poisson(rate)
        lt = rate * t
        assert count_mean(m, t) == pytest.approx(lt, rel=1e-14)
        assert count_variance(m, t) == pytest.approx(lt, rel=1e-12)
        assert count_third_moment(m, t) == pytest.approx(lt + 3 * lt**2 + lt**3, rel=1e-12)

    def test_dispersion_and_intercept(self):
        m = MarkovArrivalProcess.poisson(2.0)
        assert dispersion_limit(m) == pytest.approx(1.0, abs=1e-15)
        assert variance_y_intercept(m) == pytest.approx(0.0, abs=1e-15)

    def test_time_zero(self):
        m = MarkovArrivalProcess.poisson(2.0)
        assert count_mean(m, 0.0) == 0.0
        assert count_variance(m, 0.0) == 0.0
        assert count_third_moment(m, 0.0) == 0.0


class TestReferenceMmpp:
    def test_rate_and_dispersion(self, ref_map):
        assert asymptotic_rate(ref_map) == pytest.approx(25.0, rel=1e-14)
        assert dispersion_limit(ref_map) == pytest.approx(2.8, rel=1e-13)

    def test_two_state_variance_closed_form(self, ref_map):
        # symmetric switching rate r, rates l1, l2:
        # Var = l t + (l1-l2)^2/(2r)^2 * (t - (1 - e^{-2rt})/(2r)) * ... with r = 5
        r, l1, l2 = 5.0, 10.0, 40.0
        lam = (l1 + l2) / 2
        for t in (0.1, 1.0, 5.0):
            s = 2 * r
            expected = lam * t + (l1 - l2) ** 2 / (2 * s) * (t - (1 - np.exp(-s * t)) / s)
            assert count_variance(ref_map, t) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("p", [1, 2, 3, 4])
@pytest.mark.parametrize("t", [0.05, 0.5, 2.0])
def test_moments_match_block_exponential(p, t):
    m = random_map(p, np.random.default_rng(100 * p + int(10 * t)))
    mean, var, third = raw_from_factorial(factorial_moments(m, t))
    assert count_mean(m, t) == pytest.approx(mean, rel=1e-10)
    assert count_variance(m, t) == pytest.approx(var, rel=1e-9)
    assert count_third_moment(m, t) == pytest.approx(third, rel=1e-9)


@given(st.integers(2, 5), st.integers(0, 2**31 - 1), st.floats(0.01, 3.0))
@settings(max_examples=30, deadline=None)
def test_third_moment_property(p, seed, t):
    m = random_map(p, np.random.default_rng(seed))
    _, _, third = raw_from_factorial(factorial_moments(m, t))
    assert count_third_moment(m, t) == pytest.approx(third, rel=1e-8)


def test_third_factorial_moment_trapezoid_oracle(ref_map):
    # F3(t) = 6 int_0^t piD e^{Q(t-u)} D g(u) du with g(u) = 1 pi D 1 u + D#(u) D 1,
    # by the inner integral int_0^u e^{Q(u-s)} D 1 ds = g(u) for a stationary start.
    # Here the outer double integral is done by nested trapezoid quadrature.
    from mapsoe.kernels import matrix_exponential, transient_deviation_matrix

    m = ref_map
    t = 0.6
    n = 600
    us = np.linspace(0.0, t, n + 1)
    piD, d1, lam = m.pi @ m.D, m.event_rates, asymptotic_rate(m)
    g = np.array([lam * u + transient_deviation_matrix(m.Q, u, m.dev) @ d1 for u in us])
    Dg = g @ m.D.T
    E = [matrix_exponential(m.Q, s) for s in us]
    # h(u) = int_0^u piD e^{Q(u-s)} D g(s) ds on the grid, then F3 = 6 int_0^t h
    h = np.zeros(n + 1)
    for k in range(1, n + 1):
        vals = np.array([piD @ E[k - j] @ Dg[j] for j in range(k + 1)])
        h[k] = np.trapezoid(vals, us[:k + 1])
    f3 = 6 * np.trapezoid(h, us)
    mean, var = count_mean(m, t), count_variance(m, t)
    f3_ours = count_third_moment(m, t) - 3 * (var + mean * mean - mean) - mean
    assert f3_ours == pytest.approx(f3, rel=1e-4)


class TestNonStationary:
    @pytest.mark.parametrize("t", [0.1, 1.0, 4.0])
    def test_mean_matches_block_exponential(self, ref_map, t):
        eta = np.array([1.0, 0.0])
        m = ref_map.with_eta(eta)
        assert count_mean(m, t) == pytest.approx(factorial_moments(ref_map, t, eta, 1)[0],
                                                 rel=1e-12)

    def test_variance_unsupported(self, ref_map):
        with pytest.raises(UnsupportedCaseError):
            count_variance(ref_map.with_eta([1.0, 0.0]), 1.0)

    @pytest.mark.parametrize("eta", [None, [1.0, 0.0], [0.2, 0.8]])
    def test_variance_intercept_by_asymptote(self, ref_map, eta):
        start = ref_map.pi if eta is None else np.array(eta)
        a = asymptotic_rate(ref_map) * dispersion_limit(ref_map)
        # linear fit of Var_eta(t) over t in [5, 10]; the transient decays like e^{-10t}
        ts = np.linspace(5, 10, 11)
        var = []
        for t in ts:
            f1, f2, _ = factorial_moments(ref_map, t, start)
            var.append(2 * f2 + f1 - f1 * f1)
        slope, intercept = np.polyfit(ts, var, 1)
        assert slope == pytest.approx(a, rel=1e-9)
        assert variance_y_intercept(ref_map, eta) == pytest.approx(intercept, abs=1e-6)

    def test_intercept_offset_term(self, ref_map):
        eta = np.array([1.0, 0.0])
        offset = eta @ ref_map.dev @ ref_map.event_rates
        full = variance_y_intercept(ref_map, eta)
        assert full - variance_y_intercept(ref_map, eta, mean_offset=False) == pytest.approx(offset)
        assert variance_y_intercept(ref_map) == pytest.approx(
            variance_y_intercept(ref_map, mean_offset=False), abs=1e-12)

    def test_intercepts_differ_for_soe_pair(self, ref_mmpp):
        a = ref_mmpp.to_map()
        b = mtcp_from_slow_mmpp(ref_mmpp).to_map()
        eta_a = np.array([1.0, 0.0])
        eta_b = np.array([0.5, 0.5, 0.0, 0.0])
        assert count_mean(b.with_eta(eta_b), 1.0) == pytest.approx(count_mean(a.with_eta(eta_a), 1.0))
        assert abs(variance_y_intercept(a, eta_a) - variance_y_intercept(b, eta_b)) > 1e-3
        # stationary intercepts agree
        assert variance_y_intercept(a) == pytest.approx(variance_y_intercept(b), rel=1e-10)

    def test_report(self, ref_map):
        rep = count_report(ref_map, [0.0, 1.0, 2.0], third=True)
        assert rep.rate == pytest.approx(25.0)
        assert rep.mean == pytest.approx([0.0, 25.0, 50.0])
        assert len(rep.third_moment) == 3
        rep_eta = count_report(ref_map.with_eta([1, 0]), [1.0])
        assert rep_eta.variance is None
        assert rep_eta.mean[0] < 25.0


class TestSecondOrderEquivalence:
    @pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
    def test_mmpp_soe_pair(self, ref_mmpp, t):
        a = ref_mmpp.to_map()
        b = mtcp_from_slow_mmpp(ref_mmpp).to_map()
        c = coupled_map_from_mmpp(ref_mmpp)
        assert count_mean(b, t) == pytest.approx(count_mean(a, t), rel=1e-12)
        assert count_variance(b, t) == pytest.approx(count_variance(a, t), rel=1e-11)
        assert count_third_moment(c, t) == pytest.approx(count_third_moment(a, t), rel=1e-10)
        assert abs(count_third_moment(b, t) / count_third_moment(a, t) - 1) > 1e-6

    def test_constant_rate_mmpp(self):
        mmpp = Mmpp([[-1.0, 1.0], [2.0, -2.0]], [5.0, 5.0])
        a = mmpp.to_map()
        b = mtcp_from_slow_mmpp(mmpp).to_map()
        for t in (0.1, 1.0, 10.0):
            assert count_third_moment(b, t) == pytest.approx(count_third_moment(a, t), rel=1e-9)


class TestValidate:
    def test_valid(self, ref_map):
        assert validate(ref_map) == []

    @pytest.mark.parametrize("C,D,code", [
        ([[-1.0, 1.0], [1.0, -2.0]], [[0.0, 0.0], [0.0, 1.0]], None),
        ([[0.0, 0.0], [1.0, -2.0]], [[0.0, 0.0], [0.0, 1.0]], "C-diagonal"),
        ([[-1.0, -1.0], [1.0, -2.0]], [[2.0, 0.0], [0.0, 1.0]], "negative-rate"),
        ([[-1.0, 2.0], [1.0, -2.0]], [[-1.0, 0.0], [0.0, 1.0]], "negative-event-rate"),
        ([[-1.0, 1.0], [1.0, -1.0]], [[0.0, 0.0], [0.0, 0.0]], "no-events"),
        ([[-1.0, 1.0], [1.0, -2.0]], [[0.5, 0.0], [0.0, 1.0]], "row-sum"),
        ([[-1.0, 0.0], [0.0, -1.0]], [[1.0, 0.0], [0.0, 1.0]], "reducible"),
    ])
    def test_diagnostics(self, C, D, code):
        codes = [d.code for d in validate(MarkovArrivalProcess(C, D))]
        if code is None:
            assert codes == []
        else:
            assert code in codes

    def test_bad_eta(self, ref_map):
        assert "eta" in [d.code for d in validate(ref_map.with_eta([0.5, 0.6]))]

    def test_shape_errors(self):
        with pytest.raises(ValidationError):
            MarkovArrivalProcess([[-1.0]], [[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(ValidationError):
            MarkovArrivalProcess([[-1.0]], [[1.0]], eta=[0.5, 0.5])

    def test_analysis_refuses_invalid(self):
        m = MarkovArrivalProcess([[-1.0, 2.0], [1.0, -2.0]], [[-1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(ValidationError, match="negative event rate"):
            count_mean(m, 1.0)

    def test_immutable(self, ref_map):
        with pytest.raises(ValueError):
            ref_map.D[0, 0] = 3.0

    def test_row_sum_tolerance_is_scale_aware(self):
        big = 1e8
        C = np.array([[-big, big * (1 - 1e-15)], [big, -2 * big]])
        D = np.array([[big * 1e-15, 0.0], [0.0, big]])
        assert validate(MarkovArrivalProcess(C, D)) == []


@pytest.mark.parametrize("seed", range(6))
def test_variance_asymptote(seed):
    rng = np.random.default_rng(seed)
    m = random_map(int(rng.integers(2, 5)), rng)
    t = 200.0
    target = asymptotic_rate(m) * dispersion_limit(m)
    assert count_variance(m, t) / t == pytest.approx(target, rel=1e-3)


def test_eta_pi_reduces_to_stationary(ref_map):
    m = ref_map.with_eta(ref_map.pi)
    for t in (0.3, 2.0):
        assert count_mean(m, t) == pytest.approx(25.0 * t, rel=1e-13)


@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_mean_linear_and_variance_positive(p, seed):
    m = random_map(p, np.random.default_rng(seed))
    lam = asymptotic_rate(m)
    for t in (0.1, 1.0, 5.0):
        assert count_mean(m, t) == pytest.approx(lam * t, rel=1e-12)
        assert count_variance(m, t) > 0
