"""Synthetic market generator: ground-truth paths plus observation streams.

Transitions use closed-form Gaussian laws (no time discretization error),
so the generated data follows the assumed dynamics exactly and can serve
as ground truth for filter validation and calibration round-trips.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonPositiveParameter
from .gaussian import ou_transition
from .model import (
    EventKind,
    ObservationEvent,
    Prior,
    SpreadMode,
    ValidatedModel,
    psd_sqrt,
)

KIND_ORDER = (
    EventKind.CLIENT_BUY,
    EventKind.CLIENT_SELL,
    EventKind.AWAY_BUY,
    EventKind.AWAY_SELL,
    EventKind.INTER_DEALER,
)


@dataclass(frozen=True)
class SimConfig:
    """Scenario description for :func:`simulate`.

    ``intensity`` is the expected number of observations per bond per day;
    arrivals are exponential. ``mix`` gives the probabilities of the five
    event kinds in :data:`KIND_ORDER`. Losing quotes sit a half-normal
    offset of scale ``away_offset_scale`` (bp) on the losing side of the
    traded level. ``alpha`` is the fixed per-bond band half-width (bp) for
    inter-dealer prints. ``path_grid_step`` (days) optionally adds regular
    sampling times to the stored truth path, e.g. for building composite
    series; ``composite_spread_factor`` scales the current half spread into
    the quoted composite full spread on such grids (the default 6 pairs
    with effective half spreads being one third of the composite half
    spread).
    """

    horizon: float
    intensity: float
    mix: tuple[float, float, float, float, float] = (0.3, 0.3, 0.15, 0.15, 0.1)
    away_offset_scale: float = 0.5
    alpha: float | np.ndarray = 1.0
    seed: int = 0
    path_grid_step: float | None = None
    composite_spread_factor: float = 6.0

    def validate(self, d: int) -> np.ndarray:
        if not self.horizon > 0.0:
            raise NonPositiveParameter(f"horizon must be > 0, got {self.horizon}")
        if self.intensity < 0.0:
            raise NonPositiveParameter(f"intensity must be >= 0, got {self.intensity}")
        mix = np.asarray(self.mix, dtype=float)
        if mix.shape != (5,) or np.any(mix < 0.0) or not np.isclose(mix.sum(), 1.0):
            raise DimensionMismatch(
                f"mix must be 5 nonnegative probabilities summing to 1, got {self.mix}"
            )
        alpha = np.broadcast_to(np.asarray(self.alpha, dtype=float), (d,))
        if np.any(alpha <= 0.0):
            raise NonPositiveParameter(f"alpha must be > 0, got {self.alpha}")
        if self.away_offset_scale < 0.0:
            raise NonPositiveParameter("away_offset_scale must be >= 0")
        if self.path_grid_step is not None and not self.path_grid_step > 0.0:
            raise NonPositiveParameter("path_grid_step must be > 0")
        if not self.composite_spread_factor > 0.0:
            raise NonPositiveParameter("composite_spread_factor must be > 0")
        return alpha


@dataclass
class MarketTruth:
    """Ground-truth paths at all sampled times plus the emitted events.

    ``event_rows[n]`` is the row of ``times``/``y``/``x`` at which
    ``events[n]`` was generated; ``eps[n]`` and ``extra[n]`` store the
    noise and (for away/inter-dealer kinds) the offset or band draw used,
    so every event can be re-derived from the path.
    """

    times: np.ndarray          # (M,), starts at 0
    y: np.ndarray              # (M, d)
    x: np.ndarray              # (M, d)
    events: list[ObservationEvent]
    event_rows: np.ndarray     # (N,) indices into times
    eps: np.ndarray            # (N,)
    extra: np.ndarray          # (N,)

    def psi(self) -> np.ndarray:
        return self._psi_scale[None, :] * np.exp(self.x)

    _psi_scale: np.ndarray = field(default=None, repr=False)


def simulate(model: ValidatedModel, prior: Prior, cfg: SimConfig) -> MarketTruth:
    """Generate a truth path and a consistent stream of all five event kinds.

    Client trades print at the relevant side of the mid plus noise; losing
    quotes are generated strictly on the losing side so the implied
    censoring condition holds by construction; inter-dealer prints land
    uniformly inside the band around the noisy mid.
    """
    d = model.d
    alpha = cfg.validate(d)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))

    # Event schedule: merged arrivals at total rate intensity * d, each
    # assigned a uniform bond and a mixture-drawn kind.
    times = [0.0]
    ev_times = []
    t = 0.0
    rate = cfg.intensity * d
    while rate > 0.0:
        t += rng.exponential(1.0 / rate)
        if t >= cfg.horizon:
            break
        ev_times.append(t)
    n_ev = len(ev_times)
    bonds = rng.integers(0, d, size=n_ev)
    kinds = rng.choice(5, size=n_ev, p=np.asarray(cfg.mix, dtype=float))

    # Merge optional regular grid times into the sampling mesh.
    mesh = list(ev_times)
    is_event = [True] * n_ev
    if cfg.path_grid_step is not None:
        g = cfg.path_grid_step
        grid = np.arange(g, cfg.horizon + 1e-12, g)
        for tg in grid:
            mesh.append(float(tg))
            is_event.append(False)
    order = np.argsort(mesh, kind="stable")
    mesh = [mesh[j] for j in order]
    is_event = [is_event[j] for j in order]

    fy, fx = prior.sqrt_factors()
    y = prior.mean_y + fy @ rng.standard_normal(d)
    x = prior.mean_x + fx @ rng.standard_normal(d)

    rows_y = [y.copy()]
    rows_x = [x.copy()]
    row_times = [0.0]
    events: list[ObservationEvent] = []
    event_rows: list[int] = []
    eps_list: list[float] = []
    extra_list: list[float] = []

    ev_idx = 0
    t_prev = 0.0
    for t_now, evt in zip(mesh, is_event):
        dt = t_now - t_prev
        if dt > 0.0:
            y = y + (model.chol_sigma * np.sqrt(dt)) @ rng.standard_normal(d)
            if model.spread_mode is SpreadMode.OU:
                trans = ou_transition(model, dt)
                x = trans.mean_factor * x + psd_sqrt(trans.cov) @ rng.standard_normal(d)
        if model.spread_mode is SpreadMode.IID:
            # temporally independent log-spread: fresh draw at every
            # sampled time, whether an event or a grid mark
            x = model.params.x_mean + np.sqrt(model.params.x_var) * rng.standard_normal(d)
        rows_y.append(y.copy())
        rows_x.append(x.copy())
        row_times.append(t_now)
        if evt:
            i = int(bonds[ev_idx])
            kind = KIND_ORDER[int(kinds[ev_idx])]
            psi_i = model.psi_scale[i] * np.exp(x[i])
            eps = model.sigma_eps[i] * rng.standard_normal()
            extra = np.nan
            if kind is EventKind.CLIENT_BUY:
                ev = ObservationEvent.client_buy(t_now, i, y[i] - psi_i + eps)
            elif kind is EventKind.CLIENT_SELL:
                ev = ObservationEvent.client_sell(t_now, i, y[i] + psi_i + eps)
            elif kind is EventKind.AWAY_BUY:
                extra = abs(rng.standard_normal()) * cfg.away_offset_scale
                ev = ObservationEvent.away_buy(t_now, i, y[i] - psi_i + eps - extra)
            elif kind is EventKind.AWAY_SELL:
                extra = abs(rng.standard_normal()) * cfg.away_offset_scale
                ev = ObservationEvent.away_sell(t_now, i, y[i] + psi_i + eps + extra)
            else:
                extra = rng.uniform(-alpha[i], alpha[i])
                ev = ObservationEvent.inter_dealer(t_now, i, y[i] + eps + extra, alpha[i])
            events.append(ev)
            event_rows.append(len(row_times) - 1)
            eps_list.append(eps)
            extra_list.append(extra)
            ev_idx += 1
        t_prev = t_now

    truth = MarketTruth(
        times=np.asarray(row_times),
        y=np.asarray(rows_y),
        x=np.asarray(rows_x),
        events=events,
        event_rows=np.asarray(event_rows, dtype=int),
        eps=np.asarray(eps_list),
        extra=np.asarray(extra_list),
    )
    truth._psi_scale = model.psi_scale.copy()
    return truth


def lognormal_from_moments(mean: float, std: float) -> tuple[float, float]:
    """Log-normal parameters (mu, var of the log) matching a mean and std.

    With scale multiplier fixed at 1, ``exp(N(mu, var))`` has the requested
    first two moments: ``var = log(1 + std^2 / mean^2)``,
    ``mu = log(mean) - var / 2``.
    """
    if mean <= 0.0:
        raise NonPositiveParameter(f"target spread mean must be > 0, got {mean}")
    if std < 0.0:
        raise NonPositiveParameter(f"target spread std must be >= 0, got {std}")
    var = np.log1p((std / mean) ** 2)
    mu = np.log(mean) - 0.5 * var
    return float(mu), float(var)
