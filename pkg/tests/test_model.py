"""Domain type validation and event taxonomy."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bondmid import (
    BondUniverse,
    DimensionMismatch,
    EventKind,
    InvalidPrior,
    ModelParams,
    NonMonotoneTime,
    NonPositiveParameter,
    NotPositiveSemiDefinite,
    ObservationEvent,
    Prior,
    SpreadMode,
    UnknownBond,
    check_event_stream,
    psd_sqrt,
    validate_params,
)
from helpers import random_correlation


def _iid(d=1, **over):
    base = dict(
        sigma=np.full(d, 0.5),
        rho=np.eye(d),
        psi_scale=np.ones(d),
        sigma_eps=np.full(d, 0.1),
        spread_mode=SpreadMode.IID,
        x_mean=np.zeros(d),
        x_var=np.full(d, 0.2),
    )
    base.update(over)
    return ModelParams(**base)


class TestUniverse:
    def test_basic(self):
        u = BondUniverse(["X", "Y"])
        assert u.d == 2
        assert u.index("Y") == 1

    def test_rejects_duplicates_and_empty(self):
        with pytest.raises(DimensionMismatch):
            BondUniverse(["A", "A"])
        with pytest.raises(DimensionMismatch):
            BondUniverse(["A", ""])
        with pytest.raises(DimensionMismatch):
            BondUniverse([])


class TestValidateParams:
    def test_scalar_case_valid(self):
        m = validate_params(_iid(), BondUniverse(["A"]))
        assert m.d == 1
        assert m.sigma_cov[0, 0] == pytest.approx(0.25)

    def test_correlation_above_one_rejected(self):
        p = _iid(d=2, rho=np.array([[1.0, 1.2], [1.2, 1.0]]))
        with pytest.raises(NotPositiveSemiDefinite, match="rho"):
            validate_params(p, BondUniverse(["A", "B"]))

    def test_wrong_sigma_length(self):
        p = _iid(d=3, sigma=np.array([0.5, 0.5]))
        with pytest.raises(DimensionMismatch, match="sigma"):
            validate_params(p, BondUniverse(["A", "B", "C"]))

    def test_nonpositive_sigma(self):
        with pytest.raises(NonPositiveParameter):
            validate_params(_iid(sigma=np.array([0.0])), BondUniverse(["A"]))

    def test_ou_requirements(self):
        p = ModelParams(
            sigma=np.array([0.5]), rho=np.eye(1), psi_scale=np.ones(1),
            sigma_eps=np.zeros(1), spread_mode=SpreadMode.OU,
            a=np.array([2.0]), vvt=np.array([[0.5]]),
        )
        m = validate_params(p, BondUniverse(["A"]))
        assert m.chol_vvt is not None
        bad = ModelParams(
            sigma=np.array([0.5]), rho=np.eye(1), psi_scale=np.ones(1),
            sigma_eps=np.zeros(1), spread_mode=SpreadMode.OU,
            a=np.array([-1.0]), vvt=np.array([[0.5]]),
        )
        with pytest.raises(NonPositiveParameter):
            validate_params(bad, BondUniverse(["A"]))

    def test_validation_is_pure(self):
        rng = np.random.default_rng(3)
        rho = random_correlation(4, rng)
        p = _iid(d=4, rho=rho, sigma=np.array([0.4, 0.5, 0.6, 0.7]))
        u = BondUniverse(["A", "B", "C", "D"])
        m1 = validate_params(p, u)
        m2 = validate_params(p, u)
        np.testing.assert_array_equal(m1.sigma_cov, m2.sigma_cov)
        np.testing.assert_array_equal(m1.chol_sigma, m2.chol_sigma)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=10_000))
    def test_sigma_cov_reconstruction(self, d, seed):
        rng = np.random.default_rng(seed)
        rho = random_correlation(d, rng)
        sigma = rng.uniform(0.1, 2.0, size=d)
        m = validate_params(_iid(
            d=d, rho=rho, sigma=sigma, sigma_eps=np.zeros(d),
            x_mean=np.zeros(d), x_var=np.ones(d), psi_scale=np.ones(d),
        ), BondUniverse([f"B{i}" for i in range(d)]))
        np.testing.assert_allclose(m.sigma_cov, rho * np.outer(sigma, sigma), rtol=1e-14)
        # square-root factor actually reproduces the covariance
        np.testing.assert_allclose(
            m.chol_sigma @ m.chol_sigma.T, m.sigma_cov, atol=1e-12)

    def test_marginally_indefinite_tolerated(self):
        # eigenvalue at -1e-12 relative: inside the tolerance band
        rho = np.array([[1.0, 1.0], [1.0, 1.0]])
        rho[0, 1] = rho[1, 0] = 1.0 + 1e-13
        m = validate_params(_iid(d=2, rho=rho, sigma=np.array([1.0, 1.0])),
                            BondUniverse(["A", "B"]))
        assert np.isfinite(m.chol_sigma).all()


class TestPsdSqrt:
    def test_zero_matrix(self):
        f = psd_sqrt(np.zeros((3, 3)))
        np.testing.assert_array_equal(f, np.zeros((3, 3)))

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveSemiDefinite):
            psd_sqrt(np.array([[1.0, 2.0], [2.0, 1.0]]), "m")

    def test_rejects_asymmetric(self):
        with pytest.raises(NotPositiveSemiDefinite):
            psd_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]), "m")


class TestEvents:
    def test_payload_requirements(self):
        ObservationEvent.client_buy(1.0, 0, 101.5)
        ObservationEvent.inter_dealer(1.0, 0, 101.5, alpha=0.5)
        with pytest.raises(ValueError):
            ObservationEvent(1.0, 0, EventKind.CLIENT_BUY)  # no ytb
        with pytest.raises(ValueError):
            ObservationEvent(1.0, 0, EventKind.AWAY_BUY)  # no quote
        with pytest.raises(ValueError):
            ObservationEvent.inter_dealer(1.0, 0, 101.5, alpha=0.0)
        with pytest.raises(ValueError):
            ObservationEvent.client_buy(0.0, 0, 101.5)  # time not > 0
        with pytest.raises(ValueError):
            ObservationEvent.client_buy(1.0, 0, np.nan)

    def test_stream_checks(self):
        evs = [
            ObservationEvent.client_buy(1.0, 0, 100.0),
            ObservationEvent.client_sell(2.0, 0, 100.0),
        ]
        check_event_stream(evs, d=1)
        with pytest.raises(UnknownBond):
            check_event_stream([ObservationEvent.client_buy(1.0, 3, 1.0)], d=2)
        tied = [
            ObservationEvent.client_buy(1.0, 0, 100.0),
            ObservationEvent.client_sell(1.0, 0, 100.0),
        ]
        with pytest.raises(NonMonotoneTime):
            check_event_stream(tied, d=1)


class TestPrior:
    def test_dimension_check(self):
        with pytest.raises(InvalidPrior):
            Prior([0.0, 1.0], np.eye(2), [0.0], np.eye(1))

    def test_psd_check_surfaces_on_factorization(self):
        p = Prior([0.0], [[-1.0]], [0.0], [[1.0]])
        with pytest.raises(InvalidPrior):
            p.sqrt_factors()
