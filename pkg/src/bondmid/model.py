"""Domain types: bond universe, model parameters, observation events, priors.

Conventions used everywhere in this package:

* yields to benchmark (YtB) are stored in basis points,
* time is measured in days,
* the half spread of bond ``i`` is ``psi_scale[i] * exp(x[i])`` where ``x``
  is the latent log-spread state.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateBoth,
    DimensionMismatch,
    InvalidPrior,
    NonPositiveParameter,
    NotPositiveSemiDefinite,
    WrongSpreadMode,
)

# Relative tolerance on the smallest eigenvalue when deciding whether an
# estimated covariance/correlation matrix still counts as PSD.
PSD_TOL = 1e-10

DEFAULT_LEVELS = (0.01, 0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95, 0.99)


def _as_vector(v, d: int, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (d,):
        raise DimensionMismatch(f"{name} must have shape ({d},), got {a.shape}")
    return a


def _as_matrix(m, d: int, name: str) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.shape != (d, d):
        raise DimensionMismatch(f"{name} must have shape ({d}, {d}), got {a.shape}")
    return a


def psd_sqrt(mat: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Symmetric square-root factor ``F`` with ``F @ F.T == mat``.

    Accepts semi-definite input (eigenvalues slightly negative up to
    ``PSD_TOL`` relative to the largest are clipped to zero); raises
    :class:`NotPositiveSemiDefinite` beyond that.
    """
    a = np.asarray(mat, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise NotPositiveSemiDefinite(f"{name} is not symmetric")
    w, v = np.linalg.eigh(a)
    scale = max(w[-1], 0.0)
    if w[0] < -PSD_TOL * max(scale, 1e-300):
        raise NotPositiveSemiDefinite(
            f"{name} has negative eigenvalue {w[0]:.3e} (largest {w[-1]:.3e})"
        )
    return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True)
class BondUniverse:
    """The set of bonds under consideration, identified by opaque labels."""

    labels: tuple[str, ...]

    def __init__(self, labels):
        labels = tuple(str(l) for l in labels)
        if len(labels) < 1:
            raise DimensionMismatch("universe must contain at least one bond")
        if any(not l for l in labels):
            raise DimensionMismatch("bond labels must be non-empty")
        if len(set(labels)) != len(labels):
            raise DimensionMismatch("bond labels must be unique")
        object.__setattr__(self, "labels", labels)

    @property
    def d(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)


class SpreadMode(str, enum.Enum):
    """Dynamics of the latent log-spread state between events."""

    OU = "ou"      # continuous mean-reverting process, exact transitions
    IID = "iid"    # fresh independent Gaussian draw at every event


@dataclass(frozen=True)
class ModelParams:
    """Static model parameters.

    Parameters
    ----------
    sigma : (d,) array
        Mid-YtB volatilities, bp / sqrt(day).
    rho : (d, d) array
        Mid-YtB driver correlation matrix.
    psi_scale : (d,) array
        Half-spread multipliers, bp; half spread is ``psi_scale * exp(x)``.
    sigma_eps : (d,) array
        Observation-noise standard deviations, bp (>= 0).
    spread_mode : SpreadMode
        OU uses ``a`` (mean-reversion rates, 1/day) and ``vvt`` (driver
        covariance rate, 1/day). IID uses ``x_mean``/``x_var`` for the
        per-bond Gaussian drawn fresh at each event.
    """

    sigma: np.ndarray
    rho: np.ndarray
    psi_scale: np.ndarray
    sigma_eps: np.ndarray
    spread_mode: SpreadMode = SpreadMode.IID
    a: np.ndarray | None = None
    vvt: np.ndarray | None = None
    x_mean: np.ndarray | None = None
    x_var: np.ndarray | None = None


class EventKind(str, enum.Enum):
    """The five observation channels available to the dealer."""

    CLIENT_BUY = "client_buy"    # client bought from us; traded YtB observed
    CLIENT_SELL = "client_sell"  # client sold to us; traded YtB observed
    AWAY_BUY = "away_buy"        # client bought elsewhere; our losing quote observed
    AWAY_SELL = "away_sell"      # client sold elsewhere; our losing quote observed
    INTER_DEALER = "d2d"         # dealer-to-dealer print inside a known band


# Kinds whose payload is a traded YtB rather than a losing quote.
TRADE_KINDS = (EventKind.CLIENT_BUY, EventKind.CLIENT_SELL, EventKind.INTER_DEALER)


@dataclass(frozen=True)
class ObservationEvent:
    """One timestamped observation on a single bond.

    ``ytb`` carries the traded YtB for client trades and dealer-to-dealer
    prints; ``quote`` carries our losing quote for traded-away requests;
    ``alpha`` is the half width (bp) of the band around the mid for
    dealer-to-dealer prints.
    """

    time: float
    bond: int
    kind: EventKind
    ytb: float | None = None
    quote: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.time) and self.time > 0.0):
            raise ValueError(f"event time must be finite and > 0, got {self.time}")
        if self.bond < 0:
            raise ValueError(f"bond index must be >= 0, got {self.bond}")
        for name in ("ytb", "quote", "alpha"):
            v = getattr(self, name)
            if v is not None and not np.isfinite(v):
                raise ValueError(f"event field {name} must be finite, got {v}")
        k = self.kind
        if k in (EventKind.CLIENT_BUY, EventKind.CLIENT_SELL):
            if self.ytb is None:
                raise ValueError(f"{k.value} event requires a traded YtB")
        elif k in (EventKind.AWAY_BUY, EventKind.AWAY_SELL):
            if self.quote is None:
                raise ValueError(f"{k.value} event requires the losing quote")
        elif k is EventKind.INTER_DEALER:
            if self.ytb is None:
                raise ValueError("d2d event requires the traded YtB")
            if self.alpha is None or not self.alpha > 0.0:
                raise ValueError("d2d event requires band half-width alpha > 0")

    # Convenience constructors; keyword payloads keep call sites readable.

    @staticmethod
    def client_buy(time: float, bond: int, ytb: float) -> "ObservationEvent":
        return ObservationEvent(time, bond, EventKind.CLIENT_BUY, ytb=ytb)

    @staticmethod
    def client_sell(time: float, bond: int, ytb: float) -> "ObservationEvent":
        return ObservationEvent(time, bond, EventKind.CLIENT_SELL, ytb=ytb)

    @staticmethod
    def away_buy(time: float, bond: int, quote: float) -> "ObservationEvent":
        return ObservationEvent(time, bond, EventKind.AWAY_BUY, quote=quote)

    @staticmethod
    def away_sell(time: float, bond: int, quote: float) -> "ObservationEvent":
        return ObservationEvent(time, bond, EventKind.AWAY_SELL, quote=quote)

    @staticmethod
    def inter_dealer(time: float, bond: int, ytb: float, alpha: float) -> "ObservationEvent":
        return ObservationEvent(time, bond, EventKind.INTER_DEALER, ytb=ytb, alpha=alpha)


@dataclass(frozen=True)
class Prior:
    """Gaussian prior for the initial mid-YtB vector and log-spread state.

    The y and x blocks are independent; either covariance may be singular
    (a zero matrix pins the state at the mean).
    """

    mean_y: np.ndarray
    cov_y: np.ndarray
    mean_x: np.ndarray
    cov_x: np.ndarray

    def __init__(self, mean_y, cov_y, mean_x, cov_x):
        mean_y = np.asarray(mean_y, dtype=float)
        mean_x = np.asarray(mean_x, dtype=float)
        d = mean_y.shape[0] if mean_y.ndim == 1 else -1
        if d < 1 or mean_x.shape != (d,):
            raise InvalidPrior("prior means must be length-d vectors of equal length")
        cov_y = _as_matrix(cov_y, d, "cov_y")
        cov_x = _as_matrix(cov_x, d, "cov_x")
        object.__setattr__(self, "mean_y", mean_y)
        object.__setattr__(self, "cov_y", cov_y)
        object.__setattr__(self, "mean_x", mean_x)
        object.__setattr__(self, "cov_x", cov_x)

    @property
    def d(self) -> int:
        return self.mean_y.shape[0]

    def sqrt_factors(self) -> tuple[np.ndarray, np.ndarray]:
        try:
            return psd_sqrt(self.cov_y, "cov_y"), psd_sqrt(self.cov_x, "cov_x")
        except NotPositiveSemiDefinite as e:
            raise InvalidPrior(str(e)) from e


@dataclass(frozen=True)
class PosteriorSummary:
    """Per-bond moments and quantiles of mid YtB and half spread at a time.

    ``q_y`` and ``q_psi`` have shape (d, len(levels)); quantiles are
    nondecreasing along the level axis.
    """

    time: float
    levels: tuple[float, ...]
    mean_y: np.ndarray
    std_y: np.ndarray
    q_y: np.ndarray
    mean_psi: np.ndarray
    std_psi: np.ndarray
    q_psi: np.ndarray

    @property
    def d(self) -> int:
        return self.mean_y.shape[0]


@dataclass
class ValidatedModel:
    """Model parameters checked against a universe, with cached factors.

    Construct via :func:`validate_params`. Cached pieces:

    * ``sigma_cov``: the YtB increment covariance rate (bp^2/day),
    * ``chol_sigma``: its square-root factor,
    * ``loadings``: column ``i`` holds ``sigma_cov[:, i] / sigma[i]**2``,
      the regression loadings of all bonds on bond ``i`` (unit diagonal),
    * ``chol_vvt``: square root of the spread driver covariance (OU mode).
    """

    universe: BondUniverse
    params: ModelParams
    sigma_cov: np.ndarray = field(repr=False, default=None)
    chol_sigma: np.ndarray = field(repr=False, default=None)
    loadings: np.ndarray = field(repr=False, default=None)
    chol_vvt: np.ndarray | None = field(repr=False, default=None)

    @property
    def d(self) -> int:
        return self.universe.d

    @property
    def sigma(self) -> np.ndarray:
        return self.params.sigma

    @property
    def rho(self) -> np.ndarray:
        return self.params.rho

    @property
    def psi_scale(self) -> np.ndarray:
        return self.params.psi_scale

    @property
    def sigma_eps(self) -> np.ndarray:
        return self.params.sigma_eps

    @property
    def spread_mode(self) -> SpreadMode:
        return self.params.spread_mode

    def event_noise_var(self, bond: int, dt: float) -> float:
        """Variance of (mid increment + observation noise) over ``dt`` days."""
        if dt < 0.0:
            raise ValueError(f"dt must be >= 0, got {dt}")
        var = self.sigma[bond] ** 2 * dt + self.sigma_eps[bond] ** 2
        if var <= 0.0:
            raise DegenerateBoth(
                f"bond {bond}: both sigma^2*dt and sigma_eps^2 are zero at dt={dt}"
            )
        return var


def validate_params(params: ModelParams, universe: BondUniverse) -> ValidatedModel:
    """Check dimensions, signs and PSD structure; cache square-root factors.

    Raises :class:`DimensionMismatch`, :class:`NonPositiveParameter` or
    :class:`NotPositiveSemiDefinite` (naming the offending matrix) on the
    first violation found. Pure: identical inputs give identical output.
    """
    d = universe.d
    sigma = _as_vector(params.sigma, d, "sigma")
    rho = _as_matrix(params.rho, d, "rho")
    psi_scale = _as_vector(params.psi_scale, d, "psi_scale")
    sigma_eps = _as_vector(params.sigma_eps, d, "sigma_eps")

    if np.any(sigma <= 0.0):
        raise NonPositiveParameter(f"sigma must be > 0, got {sigma}")
    if np.any(psi_scale <= 0.0):
        raise NonPositiveParameter(f"psi_scale must be > 0, got {psi_scale}")
    if np.any(sigma_eps < 0.0):
        raise NonPositiveParameter(f"sigma_eps must be >= 0, got {sigma_eps}")
    if not np.allclose(np.diag(rho), 1.0, atol=1e-12):
        raise NotPositiveSemiDefinite("rho must have unit diagonal")
    if not np.allclose(rho, rho.T, atol=1e-12):
        raise NotPositiveSemiDefinite("rho is not symmetric")
    psd_sqrt(rho, "rho")

    sigma_cov = rho * np.outer(sigma, sigma)
    chol_sigma = psd_sqrt(sigma_cov, "sigma_cov")
    loadings = sigma_cov / sigma[np.newaxis, :] ** 2

    mode = SpreadMode(params.spread_mode)
    a = vvt = x_mean = x_var = None
    chol_vvt = None
    if mode is SpreadMode.OU:
        if params.a is None or params.vvt is None:
            raise DimensionMismatch("OU mode requires a and vvt")
        a = _as_vector(params.a, d, "a")
        vvt = _as_matrix(params.vvt, d, "vvt")
        if np.any(a <= 0.0):
            raise NonPositiveParameter(f"mean-reversion rates a must be > 0, got {a}")
        if not np.allclose(vvt, vvt.T, atol=1e-12 * max(1.0, np.abs(vvt).max())):
            raise NotPositiveSemiDefinite("vvt is not symmetric")
        chol_vvt = psd_sqrt(vvt, "vvt")
    else:
        if params.x_mean is None or params.x_var is None:
            raise DimensionMismatch("IID mode requires x_mean and x_var")
        x_mean = _as_vector(params.x_mean, d, "x_mean")
        x_var = _as_vector(params.x_var, d, "x_var")
        if np.any(x_var < 0.0):
            raise NonPositiveParameter(f"x_var must be >= 0, got {x_var}")

    clean = ModelParams(
        sigma=sigma, rho=rho, psi_scale=psi_scale, sigma_eps=sigma_eps,
        spread_mode=mode, a=a, vvt=vvt, x_mean=x_mean, x_var=x_var,
    )
    return ValidatedModel(
        universe=universe, params=clean,
        sigma_cov=sigma_cov, chol_sigma=chol_sigma,
        loadings=loadings, chol_vvt=chol_vvt,
    )


def check_event(event: ObservationEvent, d: int) -> None:
    """Validate an event against a universe size (bond index range)."""
    from .errors import UnknownBond

    if not 0 <= event.bond < d:
        raise UnknownBond(f"bond index {event.bond} outside universe of size {d}")


def check_event_stream(events, d: int) -> None:
    """Validate a full stream: bond indices in range, times strictly increasing.

    Exactly simultaneous observations are rejected; the update recursion is
    defined only for strictly ordered event times.
    """
    from .errors import NonMonotoneTime

    prev = 0.0
    for n, ev in enumerate(events):
        check_event(ev, d)
        if ev.time <= prev:
            raise NonMonotoneTime(
                f"event {n} at t={ev.time} does not strictly follow t={prev}"
            )
        prev = ev.time
