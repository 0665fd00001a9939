"""Synthetic catalogs from the branching representation, and the brute-force oracle."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .geo import RegionError, RegionTable
from .model import CLIP, CONSTANT, VARYING, Catalog, HawkesParams

NAIVE_MAX_N = 20_000


@dataclass
class SimConfig:
    """Immigrants arrive as a homogeneous Poisson process over ``window`` x (0, T].

    Each event has Poisson(``xi0``) children, delayed by Exponential(mean
    ``sigma_t``) and displaced by an isotropic Gaussian of scale ``sigma_x``
    (divided by sqrt of the parent's density for the varying variant).
    """

    rate: float = 10.0
    horizon: float = 100.0
    window: tuple = (0.0, 0.0, 10.0, 10.0)
    xi0: float = 0.5
    sigma_x: float = 0.1
    sigma_t: float = 2.0
    variant: str = CONSTANT
    density: float | Callable | None = None
    seed: int = 0
    max_events: int = 1_000_000

    def __post_init__(self):
        if not 0 <= self.xi0 < 1:
            raise ValueError(f"xi0 must lie in [0, 1) for a finite cascade, got {self.xi0}")
        if not self.horizon > 0:
            raise ValueError("horizon must be > 0")
        x0, y0, x1, y1 = self.window
        if not (x1 > x0 and y1 > y0):
            raise ValueError("window must have positive area")
        if self.rate <= 0 or self.sigma_x < 0 or self.sigma_t <= 0:
            raise ValueError("rate and sigma_t must be > 0, sigma_x >= 0")

    @property
    def expected_count(self):
        return self.rate * self.horizon / (1.0 - self.xi0)

    @property
    def area(self):
        x0, y0, x1, y1 = self.window
        return (x1 - x0) * (y1 - y0)

    def truth(self):
        d = asdict(self)
        d["density"] = None if callable(self.density) else self.density
        d["expected_count"] = self.expected_count
        d["area"] = self.area
        return d


def _density_at(config: SimConfig, lon, lat):
    if config.density is None:
        return np.ones_like(lon)
    if callable(config.density):
        return np.asarray(config.density(lon, lat), dtype=np.float64) * np.ones_like(lon)
    return np.full_like(lon, float(config.density))


def simulate_catalog(config: SimConfig, return_parents=False):
    """Draw one catalog; optionally also the parent index of every event (-1 for immigrants)."""
    if config.expected_count > config.max_events:
        raise ValueError(f"expected {config.expected_count:.0f} events exceeds cap {config.max_events}")
    rng = np.random.default_rng(config.seed)
    x0, y0, x1, y1 = config.window
    n0 = rng.poisson(config.rate * config.horizon)
    t = [rng.uniform(0.0, config.horizon, n0)]
    lon = [rng.uniform(x0, x1, n0)]
    lat = [rng.uniform(y0, y1, n0)]
    parent = [np.full(n0, -1, dtype=np.int64)]
    gen_t, gen_x, gen_y = t[0], lon[0], lat[0]
    offset = 0
    while gen_t.size:
        kids = rng.poisson(config.xi0, gen_t.size)
        src = np.repeat(np.arange(gen_t.size), kids)
        m = src.size
        ct = gen_t[src] + rng.exponential(config.sigma_t, m)
        scale = np.full(m, config.sigma_x)
        if config.variant == VARYING:
            scale = scale / np.sqrt(_density_at(config, gen_x[src], gen_y[src]))
        cx = gen_x[src] + scale * rng.standard_normal(m)
        cy = gen_y[src] + scale * rng.standard_normal(m)
        keep = ct <= config.horizon
        pidx = src + offset
        offset += gen_t.size
        gen_t, gen_x, gen_y = ct[keep], cx[keep], cy[keep]
        t.append(gen_t)
        lon.append(gen_x)
        lat.append(gen_y)
        parent.append(pidx[keep])
        if offset + gen_t.size > 10 * config.max_events:
            raise RuntimeError("cascade exceeded the event cap")
    t, lon, lat, parent = map(np.concatenate, (t, lon, lat, parent))
    if t.size == 0:
        raise ValueError("simulation produced no events")
    order = np.argsort(t, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    density = _density_at(config, lon, lat)
    catalog = Catalog(t[order], lon[order], lat[order], density=density[order])
    if return_parents:
        p = parent[order]
        return catalog, np.where(p >= 0, rank[np.maximum(p, 0)], -1)
    return catalog


def jitter_times(catalog: Catalog, width: float, rng) -> Catalog:
    """Re-draw each time uniformly within its bin of ``width`` (e.g. days within a week)."""
    bins = np.floor(catalog.times / width)
    t = bins * width + rng.uniform(0.0, width, len(catalog))
    return Catalog.from_unsorted(t, catalog.lon, catalog.lat, catalog.region_ids,
                                 catalog.density, catalog.locations_pending, catalog.event_ids)


def naive_log_likelihood(catalog: Catalog, params: HawkesParams) -> float:
    """Reference log-likelihood: direct double loop in float64, clipped at 1e-40."""
    n = len(catalog)
    if n > NAIVE_MAX_N:
        raise ValueError(f"naive oracle limited to N <= {NAIVE_MAX_N}, got {n}")
    t = np.asarray(catalog.times, dtype=np.float64)
    x = np.asarray(catalog.lon, dtype=np.float64)
    y = np.asarray(catalog.lat, dtype=np.float64)
    if params.variant == VARYING:
        s = params.sigma_x / np.sqrt(catalog.density)
    else:
        s = np.full(n, params.sigma_x)
    two_pi = 2.0 * math.pi
    t_last = t[-1]
    total = 0.0
    for i in range(n):
        dt = t[i] - t
        bg = np.where(dt != 0, np.exp(-0.5 * (dt / params.tau_t) ** 2)
                      / (math.sqrt(two_pi) * params.tau_t), 0.0)
        past = dt > 0
        d2 = (x[i] - x[past]) ** 2 + (y[i] - y[past]) ** 2
        sp = s[past]
        trig = (np.exp(-dt[past] / params.sigma_t) / params.sigma_t
                * np.exp(-0.5 * d2 / sp ** 2) / (two_pi * sp ** 2))
        lam = params.mu0 / params.area * bg.sum() + params.xi0 * trig.sum()
        big_lambda = (params.mu0 * (ndtr((t_last - t[i]) / params.tau_t) - ndtr(-t[i] / params.tau_t))
                      + params.xi0 * (1.0 - math.exp(-(t_last - t[i]) / params.sigma_t)))
        total += math.log(max(lam, CLIP)) - big_lambda
    return total


def coarsen_catalog(catalog: Catalog, regions: RegionTable) -> Catalog:
    """Tag each event with its containing region and drop exact coordinates."""
    if len(regions) == 0:
        raise RegionError("cannot coarsen against an empty region table")
    idx = regions.locate(catalog.lon, catalog.lat)
    if np.any(idx < 0):
        bad = int(np.flatnonzero(idx < 0)[0])
        raise RegionError(f"event {bad} at ({catalog.lon[bad]}, {catalog.lat[bad]}) "
                          "lies outside every region")
    ids = regions.ids()
    region_ids = [ids[k] for k in idx]
    nan = np.full(len(catalog), np.nan)
    return Catalog(catalog.times, nan, nan, region_ids, regions.density_of(region_ids),
                   locations_pending=True, event_ids=catalog.event_ids)


def write_truth(config: SimConfig, path, **extra):
    with open(path, "w") as fh:
        json.dump({**config.truth(), **extra}, fh, indent=2)
