"""Online estimation of corporate-bond mid YtBs and half bid-ask spreads.

The latent mid yields of a bond universe diffuse with a known covariance
structure; dealers observe them only through trades, losing quotes and
banded inter-dealer prints. A sequential Monte-Carlo filter maintains the
joint posterior over mids and half spreads as such events arrive.
"""

from .errors import (
    AllWeightsZero,
    BondmidError,
    DegenerateBoth,
    DegenerateSpread,
    DegenerateVolatility,
    DimensionMismatch,
    EmptyInterval,
    InputFileError,
    InsufficientData,
    InvalidPrior,
    MissingSpreads,
    NonMonotoneTime,
    NonPositiveParameter,
    NoOverlap,
    NotPositiveSemiDefinite,
    TimeInPast,
    UnknownBond,
    WrongDimension,
    WrongSpreadMode,
)
from .estimation import (
    CompositeSeries,
    SpreadFit,
    SpreadProxySample,
    derive_sigma_eps,
    estimate_sigma_rho,
    fit_spread_lognormal,
    nearest_psd_correlation,
    ou_params_from_stationary,
    proxies_from_trades,
)
from .filtering import (
    FilterDiagnostics,
    ParticleCloud,
    ParticleFilter,
    TrajectorySample,
    WeightVector,
    posterior,
    trajectories,
)
from .gaussian import (
    Above,
    Below,
    Between,
    OuTransition,
    conditional_mvn_given_one,
    conditional_posterior_y,
    log_interval_prob,
    ou_transition,
    sample_mvn,
    sample_truncated_normal,
    std_normal_cdf,
    std_normal_logcdf,
    std_normal_pdf,
)
from .model import (
    DEFAULT_LEVELS,
    BondUniverse,
    EventKind,
    ModelParams,
    ObservationEvent,
    PosteriorSummary,
    Prior,
    SpreadMode,
    ValidatedModel,
    check_event_stream,
    psd_sqrt,
    validate_params,
)
from .simulator import MarketTruth, SimConfig, lognormal_from_moments, simulate

__version__ = "0.1.0"
