"""Shared model builders for the test suite."""

import numpy as np

from bondmid import (
    BondUniverse,
    ModelParams,
    Prior,
    SpreadMode,
    lognormal_from_moments,
    validate_params,
)

# Three-bond desk configuration used for synthetic end-to-end runs:
# volatilities in bp/sqrt(day), a tight single-issuer correlation block,
# half-spread mean == std per bond, observation noise at 5% of the average
# composite spread (six half-spread means, since the half-spread targets
# are one third of the average composite half spread).
DESK_SIGMA = np.array([0.50, 0.62, 0.69])
DESK_RHO = np.array([
    [1.000, 0.843, 0.835],
    [0.843, 1.000, 0.887],
    [0.835, 0.887, 1.000],
])
DESK_PSI_MEAN = np.array([0.79, 0.73, 0.65])
DESK_SIGMA_EPS = 0.05 * 6.0 * DESK_PSI_MEAN


def iid_model(sigma, sigma_eps, psi_mean, psi_std, labels=None):
    """IID-spread model with log-normal half spreads of given moments."""
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    d = sigma.shape[0]
    labels = labels or [f"B{i + 1}" for i in range(d)]
    psi_mean = np.broadcast_to(np.asarray(psi_mean, dtype=float), (d,))
    psi_std = np.broadcast_to(np.asarray(psi_std, dtype=float), (d,))
    x_mean = np.empty(d)
    x_var = np.empty(d)
    for b in range(d):
        x_mean[b], x_var[b] = lognormal_from_moments(psi_mean[b], psi_std[b])
    params = ModelParams(
        sigma=sigma,
        rho=np.eye(d),
        psi_scale=np.ones(d),
        sigma_eps=np.broadcast_to(np.asarray(sigma_eps, dtype=float), (d,)),
        spread_mode=SpreadMode.IID,
        x_mean=x_mean,
        x_var=x_var,
    )
    return validate_params(params, BondUniverse(labels))


def fixed_spread_model(sigma, sigma_eps, psi=1.0, d=1, rho=None):
    """Deterministic half spread (zero log-spread variance), IID mode."""
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (d,))
    params = ModelParams(
        sigma=sigma,
        rho=np.eye(d) if rho is None else np.asarray(rho, dtype=float),
        psi_scale=np.broadcast_to(np.asarray(psi, dtype=float), (d,)),
        sigma_eps=np.broadcast_to(np.asarray(sigma_eps, dtype=float), (d,)),
        spread_mode=SpreadMode.IID,
        x_mean=np.zeros(d),
        x_var=np.zeros(d),
    )
    return validate_params(params, BondUniverse([f"B{i + 1}" for i in range(d)]))


def desk_model(rho=None):
    """Three correlated bonds with log-normal IID spreads (desk-scale run)."""
    d = 3
    x_mean = np.empty(d)
    x_var = np.empty(d)
    for b in range(d):
        x_mean[b], x_var[b] = lognormal_from_moments(DESK_PSI_MEAN[b], DESK_PSI_MEAN[b])
    params = ModelParams(
        sigma=DESK_SIGMA.copy(),
        rho=DESK_RHO.copy() if rho is None else np.asarray(rho, dtype=float),
        psi_scale=np.ones(d),
        sigma_eps=DESK_SIGMA_EPS.copy(),
        spread_mode=SpreadMode.IID,
        x_mean=x_mean,
        x_var=x_var,
    )
    return validate_params(params, BondUniverse(["B1", "B2", "B3"]))


def desk_prior(model, spread_bp=2.0):
    """Prior centered at round mid levels with a diagonal y uncertainty."""
    d = model.d
    mean_y = 100.0 + 10.0 * np.arange(d)
    cov_y = np.eye(d) * spread_bp**2
    return Prior(mean_y, cov_y, model.params.x_mean, np.diag(model.params.x_var))


def random_correlation(d, rng):
    """Full-rank random correlation matrix."""
    a = rng.standard_normal((d, d + 2))
    c = a @ a.T
    s = np.sqrt(np.diag(c))
    c = c / np.outer(s, s)
    np.fill_diagonal(c, 1.0)
    return 0.5 * (c + c.T)
