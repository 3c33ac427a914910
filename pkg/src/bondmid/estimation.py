"""Off-line calibration from composite quote series and trade records.

Volatilities and correlations come from increments of composite mid-YtB
series resampled onto a regular grid; spread laws are fitted either to a
fraction of the average composite spread or to trade-vs-composite
deviation proxies; observation noise is a fraction of the average
composite spread.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateSpread,
    DegenerateVolatility,
    DimensionMismatch,
    InsufficientData,
    MissingSpreads,
    NoOverlap,
)
from .model import PSD_TOL
from .simulator import lognormal_from_moments

MIN_INCREMENTS = 30
MIN_PROXIES = 10


@dataclass(frozen=True)
class CompositeSeries:
    """Per-bond composite quotes: times (days), mid YtB (bp) and, where
    available, the full composite bid-ask spread (bp)."""

    labels: tuple[str, ...]
    times: tuple[np.ndarray, ...]
    mid: tuple[np.ndarray, ...]
    spread: tuple[np.ndarray | None, ...]

    def __init__(self, labels, times, mid, spread=None):
        labels = tuple(str(l) for l in labels)
        n = len(labels)
        if spread is None:
            spread = [None] * n
        if not (len(times) == len(mid) == len(spread) == n):
            raise DimensionMismatch("labels, times, mid and spread must align")
        tt, mm, ss = [], [], []
        for b in range(n):
            t = np.asarray(times[b], dtype=float)
            m = np.asarray(mid[b], dtype=float)
            if t.shape != m.shape or t.ndim != 1:
                raise DimensionMismatch(f"bond {labels[b]}: times/mid shape mismatch")
            if t.size > 1 and np.any(np.diff(t) <= 0.0):
                raise DimensionMismatch(f"bond {labels[b]}: times must strictly increase")
            s = spread[b]
            if s is not None:
                s = np.asarray(s, dtype=float)
                if s.shape != t.shape:
                    raise DimensionMismatch(f"bond {labels[b]}: spread shape mismatch")
                if np.any(s[np.isfinite(s)] <= 0.0):
                    raise DimensionMismatch(f"bond {labels[b]}: spreads must be > 0")
            tt.append(t)
            mm.append(m)
            ss.append(s)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "times", tuple(tt))
        object.__setattr__(self, "mid", tuple(mm))
        object.__setattr__(self, "spread", tuple(ss))

    @property
    def d(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class SpreadProxySample:
    """Per-bond absolute deviations of trade YtBs from the composite mid."""

    labels: tuple[str, ...]
    values: tuple[np.ndarray, ...]

    def __init__(self, labels, values):
        labels = tuple(str(l) for l in labels)
        vv = []
        for b, v in enumerate(values):
            a = np.asarray(v, dtype=float)
            if np.any(a < 0.0):
                raise DimensionMismatch(f"bond {labels[b]}: proxies must be >= 0")
            vv.append(a)
        if len(vv) != len(labels):
            raise DimensionMismatch("labels and values must align")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "values", tuple(vv))


def nearest_psd_correlation(rho: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues to zero and renormalize the diagonal."""
    rho = 0.5 * (rho + rho.T)
    w, v = np.linalg.eigh(rho)
    if w[0] >= -PSD_TOL * max(w[-1], 1e-300):
        out = rho
    else:
        out = (v * np.clip(w, 0.0, None)) @ v.T
    dd = np.sqrt(np.diag(out))
    out = out / np.outer(dd, dd)
    np.fill_diagonal(out, 1.0)
    return 0.5 * (out + out.T)


def _locf_grid(series: CompositeSeries, interval: float):
    """Resample all bonds onto a shared regular grid by carrying the last
    observation forward; also mark which grid cells saw a fresh quote."""
    start = max(t[0] for t in series.times)
    end = min(t[-1] for t in series.times)
    n_inc = int(np.floor((end - start) / interval + 1e-9))
    if end <= start or n_inc < 1:
        raise NoOverlap(
            f"series overlap [{start}, {end}] shorter than one interval of {interval}"
        )
    grid = start + interval * np.arange(n_inc + 1)
    d = series.d
    vals = np.empty((d, n_inc + 1))
    fresh = np.zeros((d, n_inc + 1), dtype=bool)  # column 0 unused
    for b in range(d):
        t, m = series.times[b], series.mid[b]
        pos = np.searchsorted(t, grid + 1e-12) - 1  # last quote at or before grid pt
        vals[b] = m[np.maximum(pos, 0)]
        # fresh in cell k: a quote strictly after grid[k-1] and at or before grid[k]
        fresh[b, 1:] = pos[1:] > pos[:-1]
    return grid, vals, fresh


def estimate_sigma_rho(series: CompositeSeries,
                       sampling_interval: float) -> tuple[np.ndarray, np.ndarray]:
    """Volatilities (bp/sqrt(day)) and correlations of mid-YtB increments.

    Increments are taken on a regular grid after last-observation-carried-
    forward resampling; for each bond pair, intervals in which neither
    bond refreshed are dropped. The correlation matrix is projected to the
    nearest PSD correlation if estimation noise pushes it slightly
    indefinite.
    """
    if not sampling_interval > 0.0:
        raise DimensionMismatch(f"sampling_interval must be > 0, got {sampling_interval}")
    _, vals, fresh = _locf_grid(series, sampling_interval)
    d = series.d
    inc = np.diff(vals, axis=1)          # (d, n_inc)
    fr = fresh[:, 1:]
    cov = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            keep = fr[i] | fr[j]
            n = int(keep.sum())
            if n < MIN_INCREMENTS:
                raise InsufficientData(
                    f"pair ({series.labels[i]}, {series.labels[j]}): "
                    f"{n} usable increments < {MIN_INCREMENTS}"
                )
            a = inc[i, keep]
            b = inc[j, keep]
            cov[i, j] = cov[j, i] = np.mean((a - a.mean()) * (b - b.mean()))
    cov /= sampling_interval
    var = np.diag(cov).copy()
    for i in range(d):
        if var[i] <= 0.0:
            raise DegenerateVolatility(
                f"bond {series.labels[i]} shows no variation; volatility unidentifiable"
            )
    sigma = np.sqrt(var)
    rho = nearest_psd_correlation(cov / np.outer(sigma, sigma))
    return sigma, rho


@dataclass(frozen=True)
class SpreadFit:
    """Per-bond half-spread law: target moments plus log-normal parameters.

    ``psi_scale`` is 1 by convention (the level is absorbed in ``x_mean``),
    so the half spread is ``exp(x)`` with ``x ~ N(x_mean, x_var)``.
    ``from_proxies[b]`` records whether bond b was fitted from trade
    proxies (True) or fell back to the composite-spread target (False).
    """

    psi_mean: np.ndarray
    psi_std: np.ndarray
    psi_scale: np.ndarray
    x_mean: np.ndarray
    x_var: np.ndarray
    from_proxies: np.ndarray


def _average_half_spread(series: CompositeSeries, b: int) -> float:
    s = series.spread[b]
    if s is None:
        raise MissingSpreads(f"bond {series.labels[b]} has no composite spread data")
    s = s[np.isfinite(s)]
    if s.size == 0:
        raise MissingSpreads(f"bond {series.labels[b]} has no composite spread data")
    return 0.5 * float(s.mean())


def fit_spread_lognormal(proxies: SpreadProxySample | None = None,
                         composite: CompositeSeries | None = None,
                         shrink: float = 1.0 / 3.0) -> SpreadFit:
    """Fit per-bond log-normal half-spread laws.

    Data mode (per bond, when proxies are usable): match the empirical
    mean and std of the trade-vs-composite deviations. Composite mode
    (fallback, or when no proxies are given): set mean and std both to
    ``shrink`` times the average composite half spread. Bonds with fewer
    than ``MIN_PROXIES`` proxies, or proxies with zero dispersion, fall
    back; without composite data to fall back on this raises
    :class:`InsufficientData`.
    """
    if proxies is None and composite is None:
        raise InsufficientData("need trade proxies or a composite series")
    labels = proxies.labels if proxies is not None else composite.labels
    if composite is not None and proxies is not None and composite.labels != labels:
        raise DimensionMismatch("proxies and composite series label different bonds")
    d = len(labels)
    mean = np.empty(d)
    std = np.empty(d)
    from_proxies = np.zeros(d, dtype=bool)
    for b in range(d):
        v = proxies.values[b] if proxies is not None else np.empty(0)
        if v.size >= MIN_PROXIES and float(v.std(ddof=1)) > 0.0 and float(v.mean()) > 0.0:
            mean[b] = v.mean()
            std[b] = v.std(ddof=1)
            from_proxies[b] = True
        elif composite is not None:
            target = shrink * _average_half_spread(composite, b)
            if target <= 0.0:
                raise DegenerateSpread(
                    f"bond {labels[b]}: target half spread {target} is not positive"
                )
            mean[b] = std[b] = target
        else:
            raise InsufficientData(
                f"bond {labels[b]}: {v.size} proxies (need >= {MIN_PROXIES} with "
                "dispersion) and no composite series to fall back on"
            )
    x_mean = np.empty(d)
    x_var = np.empty(d)
    for b in range(d):
        x_mean[b], x_var[b] = lognormal_from_moments(mean[b], std[b])
    return SpreadFit(
        psi_mean=mean, psi_std=std, psi_scale=np.ones(d),
        x_mean=x_mean, x_var=x_var, from_proxies=from_proxies,
    )


def derive_sigma_eps(series: CompositeSeries, fraction: float) -> np.ndarray:
    """Observation-noise sd per bond: ``fraction`` of the average composite
    bid-ask spread."""
    if fraction < 0.0:
        raise DimensionMismatch(f"fraction must be >= 0, got {fraction}")
    out = np.empty(series.d)
    for b in range(series.d):
        out[b] = fraction * 2.0 * _average_half_spread(series, b)
    return out


def proxies_from_trades(series: CompositeSeries, trade_times, trade_ytb) -> SpreadProxySample:
    """Build deviation proxies: |trade YtB - composite mid at trade time|.

    ``trade_times[b]`` / ``trade_ytb[b]`` list the trades of bond b; the
    composite mid is carried forward from the last quote at or before each
    trade. Trades before the first composite quote are dropped.
    """
    values = []
    for b in range(series.d):
        t = np.asarray(trade_times[b], dtype=float)
        yv = np.asarray(trade_ytb[b], dtype=float)
        if t.shape != yv.shape:
            raise DimensionMismatch(f"bond {series.labels[b]}: trade arrays mismatch")
        pos = np.searchsorted(series.times[b], t + 1e-12) - 1
        ok = pos >= 0
        values.append(np.abs(yv[ok] - series.mid[b][pos[ok]]))
    return SpreadProxySample(series.labels, values)


def ou_params_from_stationary(x_var, a) -> tuple[np.ndarray, np.ndarray]:
    """Minimal OU spread calibration: diagonal driver covariance matched to
    a stationary log-spread variance at user-chosen reversion rates.

    Returns ``(a, vvt)`` with ``vvt = diag(2 a x_var)``, so the stationary
    variance of each coordinate equals ``x_var``. Reversion speeds are not
    identified from moments alone and must be supplied.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    x_var = np.atleast_1d(np.asarray(x_var, dtype=float))
    if a.shape != x_var.shape:
        raise DimensionMismatch("a and x_var must have the same length")
    if np.any(a <= 0.0) or np.any(x_var < 0.0):
        raise DimensionMismatch("need a > 0 and x_var >= 0")
    return a, np.diag(2.0 * a * x_var)
