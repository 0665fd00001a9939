"""Cut-posterior sampling.

Each iteration redraws every latent location uniformly inside its region
(never looking at times or parameters), then runs one Metropolis-Hastings
sweep over the five parameters with the locations held fixed.  The sweep
updates one parameter at a time with a Gaussian random walk on the log
scale.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ._kernels import LANES
from .engine import ParallelEngine
from .geo import RegionError, RegionTable, sample_points_in_region
from .model import PARAM_NAMES, Catalog, HawkesParams

logger = logging.getLogger(__name__)

TARGET_ACCEPT = 0.44

# which cached lane block each parameter invalidates
_LANES_FOR = {"mu0": None, "tau_t": "bg", "xi0": None, "sigma_x": "tr", "sigma_t": "tr"}


@dataclass(frozen=True)
class LogNormalPrior:
    """Independent log-normal priors on every parameter."""

    mean: float = 0.0
    sd: float = 10.0

    def logpdf(self, value: float) -> float:
        z = (math.log(value) - self.mean) / self.sd
        return -math.log(value) - 0.5 * z * z


@dataclass(frozen=True)
class FlatPrior:
    """Improper uniform prior on the positive half-line."""

    def logpdf(self, value: float) -> float:
        return 0.0


@dataclass
class ChainConfig:
    iterations: int
    initial: HawkesParams
    burn_in: int = 0
    seed: int = 0
    steps: dict = field(default_factory=lambda: {k: 0.05 for k in PARAM_NAMES})
    refresh_period: int = 1
    precision: str = "double"
    workers: int = 1
    prior: object = field(default_factory=LogNormalPrior)
    adapt: bool = True
    adapt_window: int = 25
    adapt_delta: float = 0.2
    thin: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError(f"burn_in ({self.burn_in}) must be < iterations ({self.iterations})")
        if self.refresh_period < 1:
            raise ValueError("refresh_period must be >= 1")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        steps = {k: float(self.steps.get(k, 0.05)) for k in PARAM_NAMES}
        if any(s < 0 for s in steps.values()):
            raise ValueError("step sizes must be >= 0")
        self.steps = steps

    def to_dict(self):
        d = asdict(self)
        d["initial"] = asdict(self.initial)
        d["prior"] = {"type": type(self.prior).__name__, **asdict(self.prior)}
        return d

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ChainState:
    params: HawkesParams
    lon: np.ndarray
    lat: np.ndarray
    loglik: float
    accepted: np.ndarray = field(default_factory=lambda: np.zeros(len(PARAM_NAMES), np.int64))
    proposed: np.ndarray = field(default_factory=lambda: np.zeros(len(PARAM_NAMES), np.int64))


@dataclass
class ChainOutput:
    draws: np.ndarray          # (S, 5), columns PARAM_NAMES
    loglik: np.ndarray         # (S,)
    iterations: np.ndarray     # iteration index of each retained row
    acceptance: dict
    steps: dict
    seconds: float
    seed: int
    config_hash: str
    meta: dict = field(default_factory=dict)
    locations: list = field(default_factory=list)

    def column(self, name):
        return self.draws[:, PARAM_NAMES.index(name)]


class LikelihoodTarget:
    """Log-likelihood of one catalog with cached lane sums.

    ``mu0`` and ``xi0`` moves only re-weight the cache (O(N * 256)); moves in
    ``tau_t`` recompute the background lanes and moves in ``sigma_x`` or
    ``sigma_t`` the triggering lanes.  Every value returned equals
    ``engine.log_likelihood`` at the same inputs.
    """

    def __init__(self, catalog: Catalog, engine: ParallelEngine):
        self.engine = engine
        self.catalog = catalog
        n = len(catalog)
        self.partition = engine.partition(n)
        shape = (n, LANES)
        self._bg, self._tr = np.zeros(shape, engine.dtype), np.zeros(shape, engine.dtype)
        self._spare = np.zeros(shape, engine.dtype)
        self._pending = None

    def reset(self, params: HawkesParams) -> float:
        self.engine.lane_sums(self.catalog, params, True, True, (self._bg, self._tr), self.partition)
        return self.engine.combine(self.catalog, params, (self._bg, self._tr), self.partition)

    def set_catalog(self, catalog: Catalog, params: HawkesParams) -> float:
        """Swap in new locations; only the triggering lanes depend on them."""
        self.catalog = catalog
        self.engine.lane_sums(catalog, params, False, True, (self._bg, self._tr), self.partition)
        return self.engine.combine(catalog, params, (self._bg, self._tr), self.partition)

    def propose(self, params: HawkesParams, changed: str) -> float:
        block = _LANES_FOR[changed]
        bg, tr = self._bg, self._tr
        if block == "bg":
            bg = self.engine.lane_sums(self.catalog, params, True, False,
                                       (self._spare, self._tr), self.partition)[0]
        elif block == "tr":
            tr = self.engine.lane_sums(self.catalog, params, False, True,
                                       (self._bg, self._spare), self.partition)[1]
        self._pending = block
        return self.engine.combine(self.catalog, params, (bg, tr), self.partition)

    def accept(self):
        if self._pending == "bg":
            self._bg, self._spare = self._spare, self._bg
        elif self._pending == "tr":
            self._tr, self._spare = self._spare, self._tr
        self._pending = None

    def reject(self):
        self._pending = None


def resample_locations(catalog: Catalog, regions: RegionTable, rng, groups=None):
    """Independent uniform draws of every event location within its region."""
    if groups is None:
        groups = region_groups(catalog, regions)
    lon = np.empty(len(catalog))
    lat = np.empty(len(catalog))
    for rid, idx in groups:
        try:
            pts = sample_points_in_region(regions[rid], idx.size, rng)
        except RegionError as err:
            raise RegionError(f"event {int(idx[0])}: {err}") from err
        lon[idx] = pts[:, 0]
        lat[idx] = pts[:, 1]
    return lon, lat


def region_groups(catalog: Catalog, regions: RegionTable):
    """Event indices per region, in region-table order."""
    by_region = {}
    for n, rid in enumerate(catalog.region_ids):
        by_region.setdefault(rid, []).append(n)
    for rid, idx in by_region.items():
        if rid not in regions:
            raise RegionError(f"event {idx[0]}: unknown region id {rid!r}")
    return [(rid, np.array(by_region[rid])) for rid in regions.ids() if rid in by_region]


def mh_sweep(state: ChainState, target, rng, steps: dict, prior) -> ChainState:
    """One scan over (mu0, tau_t, xi0, sigma_x, sigma_t) with log-scale random walks."""
    params, loglik = state.params, state.loglik
    for k, name in enumerate(PARAM_NAMES):
        current = getattr(params, name)
        proposed = current * math.exp(steps[name] * rng.standard_normal())
        log_u = math.log(rng.uniform())
        state.proposed[k] += 1
        try:
            candidate = params.with_values(**{name: proposed})
        except ValueError:
            continue
        new_ll = target.propose(candidate, name)
        if not math.isfinite(new_ll):
            target.reject()
            continue
        log_ratio = (new_ll - loglik + prior.logpdf(proposed) - prior.logpdf(current)
                     + math.log(proposed) - math.log(current))
        if log_u < log_ratio:
            target.accept()
            params, loglik = candidate, new_ll
            state.accepted[k] += 1
        else:
            target.reject()
    state.params, state.loglik = params, loglik
    return state


def adapt_steps(accepted, window, steps: dict, in_burn_in=True, delta=0.2, target=TARGET_ACCEPT):
    """Nudge each log-step by exp(+-delta) toward the target acceptance rate.

    ``accepted`` holds per-parameter acceptances over the last ``window``
    proposals.  After burn-in the steps are returned unchanged.
    """
    if not in_burn_in or window <= 0:
        return dict(steps)
    out = {}
    for k, name in enumerate(PARAM_NAMES):
        rate = accepted[k] / window
        s = steps[name]
        if rate > target:
            s *= math.exp(delta)
        elif rate < target:
            s *= math.exp(-delta)
        out[name] = s
    return out


def run_cut_posterior(config: ChainConfig, catalog: Catalog, regions: RegionTable | None = None,
                      record_locations=False, progress=None) -> ChainOutput:
    """Run one chain.

    With ``regions`` the locations are redrawn every ``refresh_period``
    iterations; without, the catalog locations stay fixed and this is an
    ordinary Metropolis-within-Gibbs sampler for the parameters.
    """
    mh_rng, loc_rng = (np.random.default_rng(s)
                       for s in np.random.SeedSequence(config.seed).spawn(2))
    groups = region_groups(catalog, regions) if regions is not None else None
    params = config.initial
    if regions is not None:
        catalog = catalog.with_locations(*resample_locations(catalog, regions, loc_rng, groups))
    elif catalog.locations_pending:
        raise ValueError("catalog has no locations; pass the region table")
    started = time.perf_counter()
    steps = dict(config.steps)
    retained = (config.iterations - config.burn_in + config.thin - 1) // config.thin
    draws = np.empty((retained, len(PARAM_NAMES)))
    loglik_trace = np.empty(retained)
    iteration_ids = np.empty(retained, dtype=np.int64)
    locations = []
    window_acc = np.zeros(len(PARAM_NAMES), np.int64)
    with ParallelEngine(config.workers, config.precision) as engine:
        target = LikelihoodTarget(catalog, engine)
        state = ChainState(params, catalog.lon, catalog.lat, target.reset(params))
        row = 0
        for it in range(config.iterations):
            if regions is not None and it > 0 and it % config.refresh_period == 0:
                lon, lat = resample_locations(catalog, regions, loc_rng, groups)
                if not (np.array_equal(lon, state.lon) and np.array_equal(lat, state.lat)):
                    catalog = catalog.with_locations(lon, lat)
                    state.loglik = target.set_catalog(catalog, state.params)
                    state.lon, state.lat = catalog.lon, catalog.lat
            if record_locations:
                locations.append(np.column_stack([state.lon, state.lat]))
            before = state.accepted.copy()
            state = mh_sweep(state, target, mh_rng, steps, config.prior)
            window_acc += state.accepted - before
            if config.adapt and it < config.burn_in and (it + 1) % config.adapt_window == 0:
                steps = adapt_steps(window_acc, config.adapt_window, steps, True, config.adapt_delta)
                window_acc[:] = 0
            if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
                draws[row] = state.params.as_array()
                loglik_trace[row] = state.loglik
                iteration_ids[row] = it
                row += 1
            if progress is not None:
                progress(it, state)
    seconds = time.perf_counter() - started
    rates = state.accepted / np.maximum(state.proposed, 1)
    return ChainOutput(
        draws=draws, loglik=loglik_trace, iterations=iteration_ids,
        acceptance=dict(zip(PARAM_NAMES, map(float, rates))), steps=steps,
        seconds=seconds, seed=config.seed, config_hash=config.digest(),
        meta={"N": len(catalog), "precision": config.precision, "workers": config.workers,
              "variant": config.initial.variant, "area": config.initial.area,
              "iterations": config.iterations, "burn_in": config.burn_in, "thin": config.thin,
              "refresh_period": config.refresh_period, "cut": regions is not None},
        locations=locations)


CHAIN_COLUMNS = ("iteration",) + PARAM_NAMES + ("loglik",)


def write_chain(output: ChainOutput, csv_path, json_path=None):
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CHAIN_COLUMNS)
        for it, row, ll in zip(output.iterations, output.draws, output.loglik):
            writer.writerow([int(it), *(repr(float(v)) for v in row), repr(float(ll))])
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump({"acceptance": output.acceptance, "seed": output.seed,
                       "config_hash": output.config_hash, "steps": output.steps,
                       "seconds": output.seconds, **output.meta}, fh, indent=2)


def read_chain(csv_path):
    """Return ``(iterations, draws, loglik)`` from a chain CSV."""
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        missing = [c for c in CHAIN_COLUMNS if c not in header]
        if missing:
            raise ValueError(f"{csv_path}: missing columns {missing}")
        idx = [header.index(c) for c in CHAIN_COLUMNS]
        rows = [[float(r[i]) for i in idx] for r in reader if r]
    arr = np.array(rows, dtype=np.float64).reshape(-1, len(CHAIN_COLUMNS))
    return arr[:, 0].astype(np.int64), arr[:, 1:6], arr[:, 6]
