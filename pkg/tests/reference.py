"""Independent reference computations the tests check against.

These deliberately avoid the package's own code paths: plain Kalman
recursions, adaptive quadrature and generic partitioned-Gaussian algebra.
"""

import numpy as np
from scipy.integrate import quad
from scipy.stats import norm


def kalman_trades(prior_mean, prior_var, sigma, sigma_eps, psi, events):
    """Exact filter for one bond observed through trades only.

    ``events`` is a sequence of (time, side, traded_ytb) with side 'buy'
    (print at mid - psi + noise) or 'sell' (mid + psi + noise). Returns the
    posterior (mean, var) of the current mid after each event.
    """
    m, v = float(prior_mean), float(prior_var)
    t_prev = 0.0
    out = []
    for t, side, y in events:
        v = v + sigma**2 * (t - t_prev)
        z = y + psi if side == "buy" else y - psi
        r = sigma_eps**2
        if r == 0.0:
            m, v = z, 0.0
        else:
            k = v / (v + r)
            m = m + k * (z - m)
            v = (1.0 - k) * v
        out.append((m, v))
        t_prev = t
    return out


def censored_posterior_moments(prior_mean, prior_var, kind, cut, sigma_eps):
    """Posterior moments of a Gaussian under a one-sided probit censoring.

    Prior N(prior_mean, prior_var) on the current mid y; the observation is
    the event {y + eps >= cut} ('away_buy') or {y + eps <= cut}
    ('away_sell') with eps ~ N(0, sigma_eps^2). Moments by adaptive
    quadrature of the product density.
    """
    sd = np.sqrt(prior_var)
    if kind == "away_buy":
        def lik(y):
            return norm.cdf((y - cut) / sigma_eps)
    elif kind == "away_sell":
        def lik(y):
            return norm.cdf((cut - y) / sigma_eps)
    else:
        raise ValueError(kind)

    def dens(y):
        return norm.pdf(y, prior_mean, sd) * lik(y)

    lo = prior_mean - 12.0 * sd - 12.0 * sigma_eps
    hi = prior_mean + 12.0 * sd + 12.0 * sigma_eps
    z = quad(dens, lo, hi, limit=200)[0]
    mean = quad(lambda y: y * dens(y), lo, hi, limit=200)[0] / z
    second = quad(lambda y: y * y * dens(y), lo, hi, limit=200)[0] / z
    return mean, np.sqrt(second - mean**2)


def normal_cdf_quad(x):
    """CDF of N(0,1) by adaptive quadrature of the density."""
    if x <= 0:
        return quad(norm.pdf, -40.0, x, limit=200)[0]
    return 1.0 - quad(norm.pdf, x, 40.0, limit=200)[0]


def conditional_gaussian(cov, obs, values):
    """Condition a zero-mean Gaussian N(0, cov) on coordinates ``obs``
    taking ``values``; returns (mean, cov) of the remaining coordinates.

    Generic partitioned-covariance formula via linear solves.
    """
    cov = np.asarray(cov, dtype=float)
    d = cov.shape[0]
    obs = list(obs)
    keep = [j for j in range(d) if j not in obs]
    c_kk = cov[np.ix_(keep, keep)]
    c_ko = cov[np.ix_(keep, obs)]
    c_oo = cov[np.ix_(obs, obs)]
    mean = c_ko @ np.linalg.solve(c_oo, np.asarray(values, dtype=float))
    cov_c = c_kk - c_ko @ np.linalg.solve(c_oo, c_ko.T)
    return mean, cov_c


def truncnorm_cdf(x, mu, sd, lo, hi):
    """CDF of N(mu, sd^2) restricted to (lo, hi)."""
    a = norm.cdf((lo - mu) / sd)
    b = norm.cdf((hi - mu) / sd)
    return np.clip((norm.cdf((np.asarray(x) - mu) / sd) - a) / (b - a), 0.0, 1.0)
