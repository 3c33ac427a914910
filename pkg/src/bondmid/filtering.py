"""Sequential Monte-Carlo engine for mid-YtB and half-spread estimation.

One event update runs six stages: propagate log-spreads, weight particles
against the observation, resample, draw the noisy mid for the observed
bond, draw its true mid, then draw the remaining bonds conditionally.
Between events the particle cloud can be diffused forward without
observations to price at an arbitrary timestamp.

Random draws are organized in fixed-size particle blocks, each fed by its
own seed-sequence substream, so results are bit-identical whatever the
number of worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllWeightsZero,
    InvalidPrior,
    NonMonotoneTime,
    TimeInPast,
)
from .gaussian import (
    _trunc_std,
    log_interval_prob,
    ou_transition,
    std_normal_logcdf,
)
from .model import (
    DEFAULT_LEVELS,
    EventKind,
    ObservationEvent,
    PosteriorSummary,
    Prior,
    SpreadMode,
    ValidatedModel,
    check_event,
    psd_sqrt,
)

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)

# Particles per random-substream block. Fixed so that stream assignment,
# and therefore every sampled value, is independent of the worker count.
BLOCK_SIZE = 2048

_PREDICT_TAG = 0x9E3779B9


@dataclass(frozen=True)
class WeightVector:
    """Unnormalized log-weights with their normalized form and ESS."""

    log_w: np.ndarray
    norm_w: np.ndarray
    ess: float

    @staticmethod
    def from_log(log_w: np.ndarray) -> "WeightVector":
        log_w = np.asarray(log_w, dtype=float)
        m = np.max(log_w)
        if not np.isfinite(m):
            raise AllWeightsZero("all log-weights are -inf (or undefined)")
        w = np.exp(log_w - m)
        w /= w.sum()
        return WeightVector(log_w=log_w, norm_w=w, ess=1.0 / float(w @ w))


@dataclass(frozen=True)
class FilterDiagnostics:
    """Per-event health indicators of the weight and resampling stage."""

    time: float
    bond: int
    kind: EventKind
    ess: float
    log_w_min: float
    log_w_max: float
    n_zero_weight: int
    resample_entropy: float
    n_unique_ancestors: int


@dataclass(frozen=True)
class EventRecord:
    """State table plus ancestor map for one processed event."""

    time: float
    y: np.ndarray
    x: np.ndarray
    ancestors: np.ndarray | None  # None for the initial draw


@dataclass
class ParticleCloud:
    """Equal-weight particle sample of the latent state at ``time``.

    ``records`` keeps the genealogy (state tables and ancestor indices per
    event) when history tracking is on; it is what :func:`trajectories`
    materializes into ancestral paths. Owned by a single filter instance.
    """

    K: int
    time: float
    y: np.ndarray
    x: np.ndarray
    psi_scale: np.ndarray
    seed: int
    n_events: int = 0
    records: list[EventRecord] | None = None

    @property
    def d(self) -> int:
        return self.y.shape[1]

    def psi(self) -> np.ndarray:
        """Current half spreads, strictly positive by construction."""
        return self.psi_scale[None, :] * np.exp(self.x)


@dataclass(frozen=True)
class TrajectorySample:
    """K genealogically consistent paths over all processed event times."""

    times: np.ndarray   # (n_events + 1,)
    y: np.ndarray       # (K, n_events + 1, d)
    psi: np.ndarray     # (K, n_events + 1, d)


def _spans(K: int) -> list[tuple[int, int]]:
    return [(a, min(a + BLOCK_SIZE, K)) for a in range(0, K, BLOCK_SIZE)]


def _event_streams(seed: int, tag: int, n_blocks: int):
    """One barrier generator plus one generator per particle block."""
    children = np.random.SeedSequence((seed, tag)).spawn(n_blocks + 1)
    gens = [np.random.Generator(np.random.PCG64(c)) for c in children]
    return gens[0], gens[1:]


def _multinomial_map(w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """iid ancestor indices with P(index = j) = w[j].

    Inverse-CDF on sorted uniforms (much better cache behavior), then a
    uniform random de-sort; order statistics plus an independent uniform
    permutation reproduce the iid joint law exactly.
    """
    K = w.shape[0]
    c = np.cumsum(w)
    c[-1] = 1.0
    pos = np.minimum(np.searchsorted(c, np.sort(rng.random(K))), K - 1)
    return rng.permutation(pos)


def _systematic_map(w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Low-variance stratified alternative, one shared uniform offset."""
    K = w.shape[0]
    c = np.cumsum(w)
    c[-1] = 1.0
    u = (rng.random() + np.arange(K)) / K
    return np.minimum(np.searchsorted(c, u), K - 1)


class ParticleFilter:
    """Drives a :class:`ParticleCloud` through an observation stream.

    Parameters
    ----------
    model : ValidatedModel
    resampling : {"multinomial", "systematic"}
        Multinomial (iid ancestor choices at every event) is the default;
        systematic is available behind this switch.
    workers : int
        Worker threads for the per-block sampling stages. Results are
        identical for any value; >1 only affects speed.
    track_history : bool
        Keep per-event state tables and ancestor maps (required by
        :func:`trajectories`). Turn off for long runs on large universes
        where O(K * n_events * d) memory is unacceptable; the filter then
        recycles state arrays between events, so hold a copy (not a
        reference) of ``cloud.y``/``cloud.x`` if you need it across steps.
    """

    def __init__(self, model: ValidatedModel, resampling: str = "multinomial",
                 workers: int = 1, track_history: bool = True):
        if resampling not in ("multinomial", "systematic"):
            raise ValueError(f"unknown resampling scheme {resampling!r}")
        self.model = model
        self.resampling = resampling
        self.workers = int(workers)
        self.track_history = track_history
        self._pool = None
        self._bufs = None  # recycled (K, d) scratch, history-off runs only

    def _scratch(self, name: str, K: int, d: int) -> np.ndarray:
        """Reusable (K, d) buffer; avoids an 8 MB-scale allocate/free cycle
        (and its page faults) per event on large universes."""
        if self._bufs is None or self._bufs["shape"] != (K, d):
            self._bufs = {"shape": (K, d)}
        buf = self._bufs.get(name)
        if buf is None:
            buf = self._bufs[name] = np.empty((K, d))
        return buf

    # -- plumbing ----------------------------------------------------------

    def _run_blocks(self, fn, gens, spans, parallel=True):
        # stream assignment is per block either way; threads change nothing
        # but wall time, so tiny passes skip the pool dispatch overhead
        if parallel and self.workers > 1 and len(spans) > 1:
            if self._pool is None:
                self._pool = ThreadPoolExecutor(max_workers=self.workers)
            list(self._pool.map(lambda t: fn(*t), zip(gens, spans)))
        else:
            for g, span in zip(gens, spans):
                fn(g, span)

    # -- initialization ----------------------------------------------------

    def init(self, prior: Prior, K: int, seed: int) -> ParticleCloud:
        """Draw K iid particles from the prior at time 0."""
        if K < 2:
            raise ValueError(f"need at least 2 particles, got {K}")
        if seed < 0:
            raise ValueError(f"seed must be >= 0, got {seed}")
        d = self.model.d
        if prior.d != d:
            raise InvalidPrior(f"prior dimension {prior.d} != universe size {d}")
        fy, fx = prior.sqrt_factors()
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0))))
        y = prior.mean_y[None, :] + rng.standard_normal((K, d)) @ fy.T
        x = prior.mean_x[None, :] + rng.standard_normal((K, d)) @ fx.T
        records = [EventRecord(0.0, y, x, None)] if self.track_history else None
        return ParticleCloud(
            K=K, time=0.0, y=y, x=x,
            psi_scale=self.model.psi_scale.copy(),
            seed=int(seed), n_events=0, records=records,
        )

    @staticmethod
    def _log_weights(event: ObservationEvent, psi_hat_i, y_i, s):
        """Log-likelihood of the observation per particle.

        Trades weight by the density of the print at the implied noisy
        mid; losing quotes by the tail probability of having been beaten;
        inter-dealer prints by the band mass.
        """
        kind = event.kind
        if kind is EventKind.CLIENT_BUY:
            u = (event.ytb + psi_hat_i - y_i) / s
            return -0.5 * u * u - _LOG_SQRT_2PI
        if kind is EventKind.CLIENT_SELL:
            u = (event.ytb - psi_hat_i - y_i) / s
            return -0.5 * u * u - _LOG_SQRT_2PI
        if kind is EventKind.AWAY_BUY:
            return std_normal_logcdf(-(event.quote + psi_hat_i - y_i) / s)
        if kind is EventKind.AWAY_SELL:
            return std_normal_logcdf((event.quote - psi_hat_i - y_i) / s)
        lo = (event.ytb - event.alpha - y_i) / s
        hi = (event.ytb + event.alpha - y_i) / s
        return log_interval_prob(lo, hi)

    # -- one event ---------------------------------------------------------

    def step(self, cloud: ParticleCloud,
             event: ObservationEvent) -> tuple[ParticleCloud, FilterDiagnostics]:
        """Apply one observation; mutates and returns the cloud.

        Raises :class:`NonMonotoneTime` if the event does not strictly
        advance the clock and :class:`AllWeightsZero` (cloud untouched) if
        every particle likelihood underflows.
        """
        model = self.model
        check_event(event, model.d)
        if event.time <= cloud.time:
            raise NonMonotoneTime(
                f"event at t={event.time} does not advance cloud time {cloud.time}"
            )
        K, d, i = cloud.K, cloud.d, event.bond
        dt = event.time - cloud.time
        s2 = model.event_noise_var(i, dt)
        s = np.sqrt(s2)
        spans = _spans(K)
        barrier, gens = _event_streams(cloud.seed, cloud.n_events + 1, len(spans))

        # Stage 1: propagate log-spreads over dt and price the half spread
        # of the observed bond. Under OU dynamics the whole vector evolves
        # from its ancestor, so it is drawn (and later resampled) in full.
        # In IID mode only coordinate i enters the likelihood and the
        # others are temporally independent, so they are drawn fresh after
        # resampling instead (identical in law, no full-matrix gather).
        ou_mode = model.spread_mode is SpreadMode.OU
        iid_stochastic = not ou_mode and bool(np.any(model.params.x_var > 0.0))
        # without histories to preserve, recycle the big per-event arrays
        reuse = cloud.records is None
        xhat = None
        if ou_mode:
            xhat = self._scratch("xhat", K, d) if reuse else np.empty_like(cloud.x)
            trans = ou_transition(model, dt)
            chol_x = psd_sqrt(trans.cov, "ou transition cov")

            def draw_spread(rng, span):
                a, b = span
                z = rng.standard_normal((b - a, d))
                np.matmul(z, chol_x.T, out=xhat[a:b])
                xhat[a:b] += trans.mean_factor[None, :] * cloud.x[a:b]

            self._run_blocks(draw_spread, gens, spans)
            xhat_i = xhat[:, i]
        elif iid_stochastic:
            xhat_i = np.empty(K)
            xm_i = model.params.x_mean[i]
            xsd_i = np.sqrt(model.params.x_var[i])

            def draw_spread(rng, span):
                a, b = span
                xhat_i[a:b] = xm_i + xsd_i * rng.standard_normal(b - a)

            self._run_blocks(draw_spread, gens, spans, parallel=False)
        else:
            # deterministic spreads: no draw needed
            xhat_i = np.broadcast_to(model.params.x_mean[i], (K,))
        psi_hat_i = model.psi_scale[i] * np.exp(xhat_i)

        # Stage 2: log-likelihood of the observation per particle. Extreme
        # arguments are allowed to overflow to -inf log-weights; the
        # all-zero case is caught below.
        y_i = cloud.y[:, i]
        kind = event.kind
        with np.errstate(over="ignore"):
            log_w = self._log_weights(event, psi_hat_i, y_i, s)

        m = np.max(log_w)
        if not np.isfinite(m):
            raise AllWeightsZero(
                f"event at t={event.time} (bond {i}, {kind.value}): "
                "every particle received zero likelihood"
            )
        weights = WeightVector.from_log(log_w)

        # Stage 3: resample states and genealogy.
        if self.resampling == "multinomial":
            xi = _multinomial_map(weights.norm_w, barrier)
        else:
            xi = _systematic_map(weights.norm_w, barrier)
        if reuse:
            y_prev = np.take(cloud.y, xi, axis=0, out=self._scratch("y_prev", K, d))
        else:
            y_prev = cloud.y[xi]
        xhat_i_res = xhat_i[xi]
        if ou_mode:
            if reuse:
                x_new = np.take(xhat, xi, axis=0, out=self._scratch("x_next", K, d))
            else:
                x_new = xhat[xi]
        elif iid_stochastic:
            # filled blockwise below
            x_new = self._scratch("x_next", K, d) if reuse else np.empty_like(cloud.x)
        else:
            x_new = np.broadcast_to(model.params.x_mean, cloud.x.shape)
        psi_i = model.psi_scale[i] * np.exp(xhat_i_res)

        # Stages 4-6, blockwise: noisy mid for the observed bond, exact
        # posterior draw of its mid, conditional draw of the other bonds.
        y_new = self._scratch("y_next", K, d) if reuse else np.empty_like(cloud.y)
        z_buf = self._scratch("z", K, d) if reuse and d > 1 else None
        sig2_dt = model.sigma[i] ** 2 * dt
        sig2_eps = model.sigma_eps[i] ** 2
        step5_sd = np.sqrt(sig2_dt * sig2_eps / s2)
        chol_dt = model.chol_sigma * np.sqrt(dt)
        load_i = model.loadings[:, i]
        x_mean, x_sd = model.params.x_mean, None
        if iid_stochastic:
            x_sd = np.sqrt(model.params.x_var)

        y_obs_all = np.empty(K)

        def draw_observed_mid(rng, span):
            a, b = span
            yp = y_prev[a:b, i]
            if kind is EventKind.CLIENT_BUY:
                y_tilde = event.ytb + psi_i[a:b]
            elif kind is EventKind.CLIENT_SELL:
                y_tilde = event.ytb - psi_i[a:b]
            elif kind is EventKind.AWAY_BUY:
                l = (event.quote + psi_i[a:b] - yp) / s
                y_tilde = yp + s * _trunc_std(l, np.full(b - a, np.inf), rng)
            elif kind is EventKind.AWAY_SELL:
                u = (event.quote - psi_i[a:b] - yp) / s
                y_tilde = yp + s * _trunc_std(np.full(b - a, -np.inf), u, rng)
            else:
                l = (event.ytb - event.alpha - yp) / s
                u = (event.ytb + event.alpha - yp) / s
                y_tilde = yp + s * _trunc_std(l, u, rng)

            if sig2_eps == 0.0:
                # noiseless observation pins the mid at the drawn value
                y_obs_all[a:b] = y_tilde
            else:
                mean5 = (sig2_dt * y_tilde + sig2_eps * yp) / s2
                y_obs_all[a:b] = mean5 + step5_sd * rng.standard_normal(b - a)

        def draw_other_mids(rng, span):
            a, b = span
            y_obs = y_obs_all[a:b]
            if d > 1:
                # Joint increment draw; shifting it by the realized move
                # of bond i (through the regression loadings) yields
                # exactly the conditional law of the remaining bonds.
                if z_buf is None:
                    z = rng.standard_normal((b - a, d))
                else:
                    z = z_buf[a:b]
                    rng.standard_normal(out=z)
                np.matmul(z, chol_dt.T, out=y_new[a:b])
                wi = y_new[a:b, i].copy()
                y_new[a:b] += y_prev[a:b]
                y_new[a:b] += (y_obs - y_prev[a:b, i] - wi)[:, None] * load_i[None, :]
                y_new[a:b, i] = y_obs
            else:
                y_new[a:b, i] = y_obs

            if iid_stochastic:
                # fresh independent log-spreads for the unobserved bonds
                rng.standard_normal(out=x_new[a:b])
                x_new[a:b] *= x_sd
                x_new[a:b] += x_mean
                x_new[a:b, i] = xhat_i_res[a:b]

        # the observed-bond draws are K-sized (pool dispatch would dominate);
        # the d-dimensional fills and matmuls are worth threading
        self._run_blocks(draw_observed_mid, gens, spans, parallel=False)
        self._run_blocks(draw_other_mids, gens, spans)

        old_y, old_x = cloud.y, cloud.x
        cloud.y = y_new
        cloud.x = x_new
        cloud.time = event.time
        cloud.n_events += 1
        if cloud.records is not None:
            cloud.records.append(EventRecord(event.time, y_new, x_new, xi))
        elif self._bufs is not None:
            # ping-pong: the replaced state arrays become next event's scratch
            def _recyclable(arr):
                return arr.base is None and arr.flags.writeable and arr.shape == (K, d)

            self._bufs["y_next"] = old_y if _recyclable(old_y) else None
            if x_new is not old_x and (ou_mode or iid_stochastic):
                self._bufs["x_next"] = old_x if _recyclable(old_x) else None

        counts = np.bincount(xi, minlength=K)
        p = counts[counts > 0] / K
        diag = FilterDiagnostics(
            time=event.time, bond=i, kind=kind,
            ess=weights.ess,
            log_w_min=float(np.min(log_w)),
            log_w_max=float(m),
            n_zero_weight=int(np.sum(weights.norm_w == 0.0)),
            resample_entropy=float(-np.sum(p * np.log(p))),
            n_unique_ancestors=int(np.sum(counts > 0)),
        )
        return cloud, diag

    # -- prediction between events ------------------------------------------

    def predict(self, cloud: ParticleCloud, t: float,
                levels=DEFAULT_LEVELS) -> PosteriorSummary:
        """Diffuse particles to time ``t`` (no observation) and summarize.

        The cloud itself is left untouched; draws come from a dedicated
        substream keyed on the target time, so the call is deterministic
        and repeatable.
        """
        if t < cloud.time:
            raise TimeInPast(f"t={t} is before cloud time {cloud.time}")
        if t == cloud.time:
            return posterior(cloud, levels)
        model = self.model
        dt = t - cloud.time
        tbits = int(np.float64(t).view(np.uint64))
        ss = np.random.SeedSequence((cloud.seed, _PREDICT_TAG, cloud.n_events, tbits))
        rng = np.random.Generator(np.random.PCG64(ss))
        z = rng.standard_normal(cloud.y.shape)
        y = cloud.y + z @ (model.chol_sigma * np.sqrt(dt)).T
        zx = rng.standard_normal(cloud.x.shape)
        if model.spread_mode is SpreadMode.OU:
            trans = ou_transition(model, dt)
            x = trans.mean_factor[None, :] * cloud.x + zx @ psd_sqrt(trans.cov).T
        else:
            x = model.params.x_mean[None, :] + np.sqrt(model.params.x_var)[None, :] * zx
        psi = cloud.psi_scale[None, :] * np.exp(x)
        return _summarize(t, y, psi, levels)


def _summarize(time, y, psi, levels) -> PosteriorSummary:
    levels = tuple(float(p) for p in levels)
    if not all(0.0 < p < 1.0 for p in levels) or list(levels) != sorted(set(levels)):
        raise ValueError(f"levels must be strictly increasing in (0, 1): {levels}")
    qy = np.quantile(y, levels, axis=0)    # (L, d), linear interpolation
    qp = np.quantile(psi, levels, axis=0)
    return PosteriorSummary(
        time=float(time), levels=levels,
        mean_y=y.mean(axis=0), std_y=y.std(axis=0, ddof=1), q_y=qy.T,
        mean_psi=psi.mean(axis=0), std_psi=psi.std(axis=0, ddof=1), q_psi=qp.T,
    )


def posterior(cloud: ParticleCloud, levels=DEFAULT_LEVELS) -> PosteriorSummary:
    """Empirical per-bond moments and quantiles of the current cloud."""
    return _summarize(cloud.time, cloud.y, cloud.psi(), levels)


def trajectories(cloud: ParticleCloud) -> TrajectorySample:
    """Materialize the K ancestral paths over all processed event times.

    Walks the genealogy backwards from the current particles, so each
    returned path is one coherent ancestral line; early-time path
    diversity shrinks as resampling collapses the ancestry.
    """
    if cloud.records is None:
        raise ValueError("history tracking is disabled for this cloud")
    recs = cloud.records
    n = len(recs)
    K, d = cloud.K, cloud.d
    times = np.array([r.time for r in recs])
    y = np.empty((K, n, d))
    psi = np.empty((K, n, d))
    idx = np.arange(K)
    for m in range(n - 1, -1, -1):
        r = recs[m]
        y[:, m, :] = r.y[idx]
        psi[:, m, :] = cloud.psi_scale[None, :] * np.exp(r.x[idx])
        if r.ancestors is not None:
            idx = r.ancestors[idx]
    return TrajectorySample(times=times, y=y, psi=psi)
