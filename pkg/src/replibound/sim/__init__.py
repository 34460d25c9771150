"""Simulation of replicated, fork-join and deferred-replication queueing systems."""

from .config import POLICIES, SystemConfig
from .engine import (
    ArrivalStream,
    make_rng,
    run_repetitions,
    simulate,
    simulate_deferred,
    simulate_fjr,
    simulate_fork_join,
    simulate_nonpurging,
    simulate_policies,
    simulate_replicated,
)
from .events import simulate_replicated_events
from .results import SimResult, empirical_ccdf, empirical_quantile, sigma_grid, tail_decay_rate

__all__ = [
    "POLICIES",
    "ArrivalStream",
    "SimResult",
    "SystemConfig",
    "empirical_ccdf",
    "empirical_quantile",
    "make_rng",
    "run_repetitions",
    "sigma_grid",
    "simulate",
    "simulate_deferred",
    "simulate_fjr",
    "simulate_fork_join",
    "simulate_nonpurging",
    "simulate_policies",
    "simulate_replicated",
    "simulate_replicated_events",
    "tail_decay_rate",
]
