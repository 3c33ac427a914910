"""Gaussian machinery: densities, tails, truncated sampling, conditioning.

Everything here is pure given an explicit :class:`numpy.random.Generator`;
callers that need reproducible parallelism hand in generators built from
independent seed-sequence substreams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcinv, log_ndtr, ndtr

from .errors import (
    DegenerateBoth,
    DimensionMismatch,
    EmptyInterval,
    WrongDimension,
    WrongSpreadMode,
)
from .model import SpreadMode, ValidatedModel, psd_sqrt

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)

# Standardized distance from the mean beyond which truncated sampling
# switches from inverse-CDF to the tail accept/reject scheme.
TAIL_SWITCH = 3.0


def std_normal_pdf(u):
    """Density of N(0, 1)."""
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u - _LOG_SQRT_2PI)


def std_normal_cdf(u):
    """CDF of N(0, 1), accurate in absolute terms everywhere and in
    relative terms deep into the lower tail (down to ~ -37)."""
    return ndtr(np.asarray(u, dtype=float))


def std_normal_logcdf(u):
    """log CDF of N(0, 1); stays finite and relatively accurate for
    arbitrarily negative arguments, where the CDF itself underflows."""
    return log_ndtr(np.asarray(u, dtype=float))


def log_interval_prob(lo, hi):
    """log( Phi(hi) - Phi(lo) ), elementwise, computed stably.

    Reflects intervals whose midpoint is positive onto the lower tail so
    the difference is always between two well-scaled lower-tail values,
    then uses log Phi(hi) + log(-expm1(log Phi(lo) - log Phi(hi))).
    Returns -inf where hi <= lo.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    flip = lo + hi > 0.0
    l = np.where(flip, -hi, lo)
    h = np.where(flip, -lo, hi)
    log_l = log_ndtr(l)
    log_h = log_ndtr(h)
    diff = log_l - log_h
    with np.errstate(invalid="ignore", divide="ignore"):
        out = log_h + np.log(-np.expm1(np.minimum(diff, -0.0)))
    return np.where(h > l, out, -np.inf)


# ---------------------------------------------------------------------------
# Mean-reverting (OU) transition moments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OuTransition:
    """Exact transition of the log-spread state over a horizon tau.

    ``mean_factor[i] = exp(-a_i * tau)`` multiplies the current state;
    ``cov`` is the transition covariance.
    """

    mean_factor: np.ndarray
    cov: np.ndarray


def ou_transition(model: ValidatedModel, tau: float) -> OuTransition:
    """Transition moments over ``tau`` days for diagonal mean reversion.

    With rates ``a`` and driver covariance rate ``W = vvt``,

        cov[i, j] = (1 - exp(-(a_i + a_j) tau)) / (a_i + a_j) * W[i, j]

    which is the closed form available when the reversion matrix is
    diagonal; it avoids any d^2 x d^2 linear algebra.
    """
    if model.spread_mode is not SpreadMode.OU:
        raise WrongSpreadMode("ou_transition requires OU spread dynamics")
    if not tau > 0.0:
        raise ValueError(f"tau must be > 0, got {tau}")
    a = model.params.a
    asum = a[:, None] + a[None, :]
    cov = -np.expm1(-asum * tau) / asum * model.params.vvt
    return OuTransition(mean_factor=np.exp(-a * tau), cov=cov)


# ---------------------------------------------------------------------------
# Multivariate normal sampling
# ---------------------------------------------------------------------------

def sample_mvn(mean, cov_factor, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` iid vectors ``mean + cov_factor @ z`` with z standard normal.

    ``cov_factor`` is any square-root factor of the target covariance
    (e.g. from :func:`bondmid.model.psd_sqrt`).
    """
    mean = np.asarray(mean, dtype=float)
    factor = np.asarray(cov_factor, dtype=float)
    if mean.ndim != 1 or factor.shape != (mean.shape[0], mean.shape[0]):
        raise DimensionMismatch(
            f"mean {mean.shape} and factor {factor.shape} are inconsistent"
        )
    z = rng.standard_normal((n, mean.shape[0]))
    return mean[None, :] + z @ factor.T


# ---------------------------------------------------------------------------
# Truncated normal sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Above:
    """Support (bound, +inf)."""
    bound: float


@dataclass(frozen=True)
class Below:
    """Support (-inf, bound)."""
    bound: float


@dataclass(frozen=True)
class Between:
    """Support (lo, hi); requires lo < hi."""
    lo: float
    hi: float


TruncationSpec = Above | Below | Between


def _trunc_std_central(l, u, rng):
    """Inverse-CDF sampling of N(0,1) on (l, u), via upper-tail erfc forms.

    Accurate whenever at least one bound is within a few sd of zero; the
    far one-sided pieces degrade gracefully (sub-ulp tail mass is never
    hit in practice).
    """
    pl = 0.5 * erfc(l / np.sqrt(2.0))  # P(Z > l)
    pu = 0.5 * erfc(u / np.sqrt(2.0))  # P(Z > u)
    p = pl + (pu - pl) * rng.random(l.shape)
    # keep 2p strictly below 2 so an unbounded lower support cannot map the
    # zero-probability corner u01 == 0 to -inf
    q = np.minimum(2.0 * p, np.nextafter(2.0, 0.0))
    return np.sqrt(2.0) * erfcinv(q)


def _trunc_std_tail(l, u, rng):
    """Accept/reject sampling of N(0,1) on (l, u) with l >= TAIL_SWITCH.

    Proposes from a Rayleigh tail law restricted to the interval (the
    classical exponential-tilt construction); acceptance probability is
    bounded away from zero uniformly in how deep the tail is.
    """
    c = 0.5 * l * l
    # expm1 keeps f accurate when u is close to l; u = +inf gives f = -1.
    with np.errstate(over="ignore"):
        f = np.expm1(c - 0.5 * u * u)
    x = np.empty_like(l)
    todo = np.ones(l.shape, dtype=bool)
    while np.any(todo):
        prop = c[todo] - np.log1p(rng.random(int(todo.sum())) * f[todo])
        accept = rng.random(prop.shape) ** 2 * prop <= c[todo]
        idx = np.flatnonzero(todo)[accept]
        x[idx] = prop[accept]
        todo[idx] = False
    return np.sqrt(2.0 * x)


def _trunc_std(l, u, rng):
    """Sample N(0,1) restricted to (l, u) elementwise; bounds may be inf."""
    l = np.asarray(l, dtype=float)
    u = np.asarray(u, dtype=float)
    x = np.empty(l.shape)
    right = l >= TAIL_SWITCH
    left = u <= -TAIL_SWITCH
    mid = ~(right | left)
    if np.any(right):
        x[right] = _trunc_std_tail(l[right], u[right], rng)
    if np.any(left):
        x[left] = -_trunc_std_tail(-u[left], -l[left], rng)
    if np.any(mid):
        x[mid] = _trunc_std_central(l[mid], u[mid], rng)
    return x


def sample_truncated_normal(mu, var, spec: TruncationSpec,
                            rng: np.random.Generator, size=None):
    """Sample N(mu, var) restricted to the support described by ``spec``.

    ``mu`` may be an array (one draw per element); ``size`` forces the
    output shape when ``mu`` is scalar. Exact for truncation points many
    standard deviations into either tail.
    """
    mu = np.asarray(mu, dtype=float)
    if np.any(np.asarray(var) <= 0.0):
        raise ValueError(f"var must be > 0, got {var}")
    s = np.sqrt(var)
    scalar = mu.ndim == 0 and size is None
    shape = (1,) if scalar else (mu.shape if size is None else (size,))
    mu = np.broadcast_to(mu, shape)
    if isinstance(spec, Above):
        l = (np.asarray(spec.bound) - mu) / s
        u = np.full(shape, np.inf)
    elif isinstance(spec, Below):
        l = np.full(shape, -np.inf)
        u = (np.asarray(spec.bound) - mu) / s
    elif isinstance(spec, Between):
        if not np.all(np.asarray(spec.lo) < np.asarray(spec.hi)):
            raise EmptyInterval(f"need lo < hi, got ({spec.lo}, {spec.hi})")
        l = (np.asarray(spec.lo) - mu) / s
        u = (np.asarray(spec.hi) - mu) / s
    else:
        raise TypeError(f"unknown truncation spec {spec!r}")
    l = np.broadcast_to(np.asarray(l, dtype=float), shape)
    u = np.broadcast_to(np.asarray(u, dtype=float), shape)
    out = mu + s * _trunc_std(l, u, rng)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# Gaussian conditioning
# ---------------------------------------------------------------------------

def conditional_mvn_given_one(model: ValidatedModel, i: int, delta_i: float,
                              tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Law of the other bonds' increments given bond ``i`` moved ``delta_i``.

    Over ``tau`` days the joint increment is N(0, sigma_cov * tau).
    Conditioning on coordinate ``i`` being ``delta_i`` gives, for each
    other coordinate i', a mean shift ``delta_i * rho[i,i'] sigma[i'] /
    sigma[i]`` on top of its previous value, with covariance equal to the
    Schur complement of coordinate ``i`` scaled by ``tau``. Returns
    ``(mean_shift, cov)`` of sizes (d-1,) and (d-1, d-1), coordinates in
    original order with ``i`` removed.
    """
    d = model.d
    if d < 2:
        raise WrongDimension("conditioning needs at least two bonds")
    if not 0 <= i < d:
        raise DimensionMismatch(f"bond index {i} outside universe of size {d}")
    if not tau > 0.0:
        raise ValueError(f"tau must be > 0, got {tau}")
    keep = np.arange(d) != i
    cov = model.sigma_cov
    cross = cov[keep, i]                      # rho[i,i'] sigma[i] sigma[i']
    mean_shift = delta_i * cross / model.sigma[i] ** 2
    schur = cov[np.ix_(keep, keep)] - np.outer(cross, cross) / model.sigma[i] ** 2
    return mean_shift, schur * tau


def conditional_posterior_y(y_prev: float, y_tilde: float,
                            sigma2_dt: float, sigma2_eps: float) -> tuple[float, float]:
    """Posterior of the current mid given its previous value and a noisy read.

    The mid diffuses with variance ``sigma2_dt`` from ``y_prev`` and is
    observed as ``y_tilde = mid + noise`` with noise variance
    ``sigma2_eps``; both being Gaussian, the posterior is Gaussian with
    precision-weighted mean and harmonic variance. Returns (mean, var).
    """
    total = sigma2_dt + sigma2_eps
    if total <= 0.0:
        raise DegenerateBoth("sigma2_dt + sigma2_eps must be > 0")
    if sigma2_eps == 0.0:
        return y_tilde, 0.0   # noiseless observation pins the mid
    if sigma2_dt == 0.0:
        return y_prev, 0.0    # frozen state ignores the observation
    mean = (sigma2_dt * y_tilde + sigma2_eps * y_prev) / total
    var = sigma2_dt * sigma2_eps / total
    return mean, var
