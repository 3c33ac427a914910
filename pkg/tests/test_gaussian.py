"""Densities, tails, transition moments and Gaussian conditioning."""

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bondmid import (
    BondUniverse,
    DegenerateBoth,
    DimensionMismatch,
    ModelParams,
    SpreadMode,
    WrongDimension,
    WrongSpreadMode,
    conditional_mvn_given_one,
    conditional_posterior_y,
    log_interval_prob,
    ou_transition,
    psd_sqrt,
    sample_mvn,
    std_normal_cdf,
    std_normal_logcdf,
    std_normal_pdf,
    validate_params,
)
from helpers import iid_model, random_correlation
from reference import conditional_gaussian, normal_cdf_quad


def ou_model(a, vvt):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    d = a.shape[0]
    params = ModelParams(
        sigma=np.ones(d), rho=np.eye(d), psi_scale=np.ones(d),
        sigma_eps=np.zeros(d), spread_mode=SpreadMode.OU,
        a=a, vvt=np.asarray(vvt, dtype=float),
    )
    return validate_params(params, BondUniverse([f"B{i}" for i in range(d)]))


class TestDensityAndCdf:
    def test_pdf_at_zero(self):
        assert std_normal_pdf(0.0) == pytest.approx(1.0 / np.sqrt(2.0 * np.pi), rel=1e-15)

    def test_cdf_symmetry_point(self):
        assert std_normal_cdf(0.0) == 0.5

    def test_cdf_minus_five_vs_quadrature(self):
        q = normal_cdf_quad(-5.0)
        assert std_normal_cdf(-5.0) == pytest.approx(q, rel=1e-9)
        # frozen from the quadrature oracle
        assert std_normal_cdf(-5.0) == pytest.approx(2.8665157187919333e-07, rel=1e-12)

    def test_cdf_absolute_accuracy_range(self):
        for u in np.linspace(-8, 8, 33):
            assert std_normal_cdf(u) == pytest.approx(normal_cdf_quad(u), abs=1e-12)

    def test_logcdf_relative_accuracy_deep_tail(self):
        # relative accuracy 1e-10 down to u = -37, where the cdf is ~5.7e-300
        mpmath.mp.dps = 60
        for u in (-5.0, -10.0, -20.0, -30.0, -37.0):
            exact = float(mpmath.log(mpmath.ncdf(u)))
            assert std_normal_logcdf(u) == pytest.approx(exact, rel=1e-12)
        assert np.exp(std_normal_logcdf(-37.0)) == pytest.approx(
            std_normal_cdf(-37.0), rel=1e-10)

    def test_logcdf_finite_beyond_underflow(self):
        v = std_normal_logcdf(-100.0)
        assert np.isfinite(v) and v < -5000.0


class TestLogIntervalProb:
    def test_matches_direct_subtraction_centrally(self):
        lo = np.array([-1.5, -0.2, 0.3])
        hi = np.array([0.5, 0.1, 2.0])
        direct = np.log(std_normal_cdf(hi) - std_normal_cdf(lo))
        np.testing.assert_allclose(log_interval_prob(lo, hi), direct, rtol=1e-12)

    def test_deep_tail_against_mpmath(self):
        mpmath.mp.dps = 60
        for lo, hi in [(8.0, 9.0), (20.0, 20.5), (-21.0, -20.0), (35.0, 36.0)]:
            # evaluate on whichever tail keeps mpmath's subtraction exact
            exact = float(mpmath.log(mpmath.ncdf(-lo) - mpmath.ncdf(-hi))
                          if lo + hi > 0 else
                          mpmath.log(mpmath.ncdf(hi) - mpmath.ncdf(lo)))
            assert log_interval_prob(lo, hi) == pytest.approx(exact, rel=1e-10)

    def test_empty_interval_is_minus_inf(self):
        assert log_interval_prob(1.0, 1.0) == -np.inf


class TestOuTransition:
    def test_zero_time_limit(self):
        m = ou_model([1.0], [[1.0]])
        tr = ou_transition(m, 1e-14)
        assert tr.cov[0, 0] == pytest.approx(0.0, abs=1e-13)
        assert tr.mean_factor[0] == pytest.approx(1.0, abs=1e-13)

    def test_closed_form_value(self):
        # (1/2) (1 - e^{-2 ln 2}) = 0.375
        m = ou_model([1.0], [[1.0]])
        tr = ou_transition(m, np.log(2.0))
        assert tr.cov[0, 0] == pytest.approx(0.375, rel=1e-14)

    def test_stationary_limit_cross_term(self):
        m = ou_model([1.0, 2.0], [[1.0, 3.0], [3.0, 9.5]])
        tr = ou_transition(m, 1e3)
        assert tr.cov[0, 1] == pytest.approx(3.0 / 3.0, rel=1e-12)

    def test_wrong_mode(self):
        m = iid_model([0.5], 0.1, 1.0, 1.0)
        with pytest.raises(WrongSpreadMode):
            ou_transition(m, 1.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_semigroup_identity(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 5))
        a = rng.uniform(0.1, 3.0, size=d)
        f = rng.standard_normal((d, d))
        vvt = f @ f.T
        m = ou_model(a, vvt)
        t1, t2 = rng.uniform(0.05, 2.0, size=2)
        g1 = ou_transition(m, t1).cov
        g2 = ou_transition(m, t2).cov
        g12 = ou_transition(m, t1 + t2).cov
        decay = np.exp(-a * t2)
        np.testing.assert_allclose(
            g12, np.outer(decay, decay) * g1 + g2, atol=1e-12, rtol=1e-12)


class TestSampleMvn:
    def test_zero_covariance(self):
        rng = np.random.default_rng(0)
        out = sample_mvn(np.array([1.0, -2.0]), np.zeros((2, 2)), 5, rng)
        np.testing.assert_array_equal(out, np.tile([1.0, -2.0], (5, 1)))

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(0)
        with pytest.raises(DimensionMismatch):
            sample_mvn(np.zeros(2), np.eye(3), 4, rng)

    def test_clt_mean(self):
        rng = np.random.default_rng(7)
        n = 1_000_000
        out = sample_mvn(np.zeros(1), np.eye(1), n, rng)
        assert abs(out.mean()) < 4.0 / np.sqrt(n)

    def test_correlation_recovered(self):
        rng = np.random.default_rng(11)
        cov = np.array([[1.0, 0.9], [0.9, 1.0]])
        out = sample_mvn(np.zeros(2), psd_sqrt(cov), 1_000_000, rng)
        assert np.corrcoef(out.T)[0, 1] == pytest.approx(0.9, abs=0.005)


class TestConditionalPosteriorY:
    def test_noiseless_observation_pins(self):
        assert conditional_posterior_y(1.0, 3.0, 0.7, 0.0) == (3.0, 0.0)

    def test_frozen_state_ignores_noise(self):
        assert conditional_posterior_y(1.0, 3.0, 0.0, 0.7) == (1.0, 0.0)

    def test_symmetric_split(self):
        mean, var = conditional_posterior_y(1.0, 3.0, 0.5, 0.5)
        assert mean == pytest.approx(2.0)
        assert var == pytest.approx(0.25)

    def test_degenerate_both(self):
        with pytest.raises(DegenerateBoth):
            conditional_posterior_y(1.0, 3.0, 0.0, 0.0)

    @settings(max_examples=50, deadline=None)
    @given(
        st.floats(-50, 50), st.floats(-50, 50),
        st.floats(1e-12, 10.0), st.floats(0.0, 10.0),
    )
    def test_mean_between_and_variance_bounded(self, yp, yt, s2dt, s2eps):
        mean, var = conditional_posterior_y(yp, yt, s2dt, s2eps)
        assert min(yp, yt) - 1e-9 <= mean <= max(yp, yt) + 1e-9
        assert var <= min(s2dt, s2eps) + 1e-12


class TestConditionalMvnGivenOne:
    def test_independent_case(self):
        m = iid_model([0.5, 0.7, 0.9], 0.0, 1.0, 1.0)
        shift, cov = conditional_mvn_given_one(m, 1, delta_i=2.0, tau=0.5)
        np.testing.assert_allclose(shift, np.zeros(2), atol=1e-15)
        np.testing.assert_allclose(cov, np.diag([0.5**2, 0.9**2]) * 0.5, rtol=1e-14)

    def test_comonotone_pair(self):
        rho = np.array([[1.0, 1.0], [1.0, 1.0]])
        from helpers import fixed_spread_model

        m = fixed_spread_model(0.6, 0.0, d=2, rho=rho)
        shift, cov = conditional_mvn_given_one(m, 0, delta_i=1.3, tau=1.0)
        assert shift[0] == pytest.approx(1.3, rel=1e-14)
        assert cov[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_matches_generic_conditioning(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            d = int(rng.integers(2, 7))
            rho = random_correlation(d, rng)
            sigma = rng.uniform(0.2, 2.0, size=d)
            m = iid_model(sigma, 0.0, 1.0, 1.0)
            m = validate_params(
                ModelParams(
                    sigma=sigma, rho=rho, psi_scale=np.ones(d),
                    sigma_eps=np.zeros(d), spread_mode=SpreadMode.IID,
                    x_mean=np.zeros(d), x_var=np.ones(d),
                ),
                BondUniverse([f"B{i}" for i in range(d)]),
            )
            i = int(rng.integers(0, d))
            delta = float(rng.standard_normal())
            tau = float(rng.uniform(0.1, 2.0))
            shift, cov = conditional_mvn_given_one(m, i, delta, tau)
            full = rho * np.outer(sigma, sigma) * tau
            mean_ref, cov_ref = conditional_gaussian(full, [i], [delta])
            np.testing.assert_allclose(shift, mean_ref, atol=1e-12)
            np.testing.assert_allclose(cov, cov_ref, atol=1e-12)

    def test_needs_two_bonds(self):
        m = iid_model([0.5], 0.0, 1.0, 1.0)
        with pytest.raises(WrongDimension):
            conditional_mvn_given_one(m, 0, 1.0, 1.0)
