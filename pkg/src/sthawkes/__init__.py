"""Spatiotemporal Hawkes process likelihood, simulation and cut-posterior fitting."""
from .diagnostics import contagion_fraction, ess, split_rank_rhat, summarize
from .engine import ParallelEngine, Partition, benchmark_eval, log_likelihood, make_partition
from .geo import Polygon, Region, RegionError, RegionTable, sample_point_in_region
from .io import RunConfig, load_events, write_events
from .mcmc import ChainConfig, ChainOutput, mh_sweep, run_cut_posterior
from .model import CONSTANT, VARYING, Catalog, Event, HawkesParams, event_contribution, pair_rate
from .simulate import SimConfig, naive_log_likelihood, simulate_catalog

__version__ = "0.1.0"
