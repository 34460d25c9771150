"""Tail bounds, stability analysis and simulation for task replication in parallel queueing systems."""

from . import bounds, dist, stability
from .bounds import (
    BoundResult,
    DeferredConfig,
    bound_ccdf,
    deferred_bound,
    deferred_usage,
    fj_bound,
    fjr_bound,
    markov_transform,
    mm_reference,
    quantile,
    theta_bound,
    theta_cor,
    theta_ind,
    theta_mkv,
    theta_mkv_cor,
)
from .dist import (
    AdditiveCorrelated,
    Deterministic,
    Erlang,
    Exponential,
    HyperExponential,
    Independent,
    MarkovModulated,
    Pareto,
    Renewal,
    UniformZeroOne,
    Weibull,
    fit_hyperexp_to_pareto,
    parse_distribution,
)
from .errors import *  # noqa: F401,F403
from .stability import ReplicationSpec, best_k, min_mean, utilization

__version__ = "0.1.0"
