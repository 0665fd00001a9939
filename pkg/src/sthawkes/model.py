"""Spatiotemporal Hawkes model: events, parameters and per-event likelihood terms.

The rate at event ``n`` is a sum of pairwise terms over all other events,

    lambda_n = sum_{n'} (mu0 / A) 1[t_n' != t_n] phi1(t_n | t_n', tau_t)
               + (xi0 / sigma_t) 1[t_n' < t_n] exp(-(t_n - t_n') / sigma_t)
                 phi2(x_n | x_n', s_n'),

with ``s = sigma_x`` (constant kernel) or ``s = sigma_x / sqrt(D_n')``
(density-scaled kernel).  Each event also carries its share ``Lambda_n`` of
the compensator, and contributes ``log(max(lambda_n, 1e-40)) - Lambda_n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from ._kernels import CLIP, LANES, kernels

CONSTANT = "constant"
VARYING = "varying"
VARIANTS = (CONSTANT, VARYING)

PARAM_NAMES = ("mu0", "tau_t", "xi0", "sigma_x", "sigma_t")

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Event:
    t: float
    x: tuple[float, float]
    region_id: str = ""
    density: float = 1.0

    def __post_init__(self):
        if not self.t >= 0:
            raise ValueError(f"event time must be >= 0, got {self.t}")
        if not self.density > 0:
            raise ValueError(f"density must be > 0, got {self.density}")
        if not all(math.isfinite(c) for c in self.x):
            raise ValueError(f"location must be finite, got {self.x}")


class Catalog:
    """Immutable, time-ordered set of events stored column-wise.

    ``locations_pending`` marks coarse-only catalogs whose coordinates are
    placeholders until a sampler draws them from the event regions.
    """

    __slots__ = ("times", "lon", "lat", "region_ids", "density",
                 "locations_pending", "event_ids")

    def __init__(self, times, lon, lat, region_ids=None, density=None,
                 locations_pending=False, event_ids=None):
        times = np.array(times, dtype=np.float64)
        n = times.shape[0]
        if times.ndim != 1 or n < 1:
            raise ValueError("a catalog needs at least one event")
        lon = np.array(lon, dtype=np.float64)
        lat = np.array(lat, dtype=np.float64)
        if lon.shape != (n,) or lat.shape != (n,):
            raise ValueError("times, lon and lat must have equal length")
        if not np.all(np.isfinite(times)) or np.any(times < 0):
            bad = int(np.flatnonzero(~(np.isfinite(times) & (times >= 0)))[0])
            raise ValueError(f"event {bad}: time must be finite and >= 0")
        if np.any(np.diff(times) < 0):
            bad = int(np.flatnonzero(np.diff(times) < 0)[0]) + 1
            raise ValueError(f"event {bad}: times are not sorted ascending")
        if not locations_pending and not (np.all(np.isfinite(lon)) and np.all(np.isfinite(lat))):
            raise ValueError("locations must be finite")
        density = np.ones(n) if density is None else np.array(density, dtype=np.float64)
        if density.shape != (n,) or np.any(~(density > 0)):
            raise ValueError("densities must be positive, one per event")
        if region_ids is None:
            region_ids = [""] * n
        region_ids = tuple(str(r) for r in region_ids)
        if len(region_ids) != n:
            raise ValueError("one region id per event")
        if event_ids is None:
            event_ids = tuple(str(i) for i in range(n))
        for arr in (times, lon, lat, density):
            arr.setflags(write=False)
        self.times = times
        self.lon = lon
        self.lat = lat
        self.density = density
        self.region_ids = region_ids
        self.locations_pending = bool(locations_pending)
        self.event_ids = tuple(str(e) for e in event_ids)

    @classmethod
    def from_unsorted(cls, times, lon, lat, region_ids=None, density=None,
                      locations_pending=False, event_ids=None):
        """Build a catalog after a stable sort on time."""
        times = np.asarray(times, dtype=np.float64)
        order = np.argsort(times, kind="stable")
        pick = lambda seq: None if seq is None else [seq[i] for i in order]
        return cls(times[order], np.asarray(lon, float)[order], np.asarray(lat, float)[order],
                   pick(region_ids), None if density is None else np.asarray(density)[order],
                   locations_pending, pick(event_ids))

    @classmethod
    def from_events(cls, events: Iterable[Event]) -> "Catalog":
        events = list(events)
        return cls([e.t for e in events], [e.x[0] for e in events], [e.x[1] for e in events],
                   [e.region_id for e in events], [e.density for e in events])

    def __len__(self):
        return self.times.shape[0]

    @property
    def N(self):
        return len(self)

    def __getitem__(self, n) -> Event:
        return Event(float(self.times[n]), (float(self.lon[n]), float(self.lat[n])),
                     self.region_ids[n], float(self.density[n]))

    @property
    def events(self) -> list[Event]:
        return [self[n] for n in range(len(self))]

    @property
    def locations(self):
        return np.column_stack([self.lon, self.lat])

    def with_locations(self, lon, lat) -> "Catalog":
        return Catalog(self.times, lon, lat, self.region_ids, self.density,
                       False, self.event_ids)

    def with_density(self, density) -> "Catalog":
        return Catalog(self.times, self.lon, self.lat, self.region_ids, density,
                       self.locations_pending, self.event_ids)

    def __repr__(self):
        return f"Catalog(N={len(self)}, t=[{self.times[0]:g}, {self.times[-1]:g}])"


@dataclass(frozen=True)
class HawkesParams:
    mu0: float
    tau_t: float
    xi0: float
    sigma_x: float
    sigma_t: float
    area: float = 1.0
    variant: str = CONSTANT

    def __post_init__(self):
        for name in PARAM_NAMES + ("area",):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    # precision forms used by the kernels
    @property
    def sigma_x_prec(self):
        return 1.0 / self.sigma_x

    @property
    def tau_t_prec(self):
        return 1.0 / self.tau_t

    @property
    def omega(self):
        return 1.0 / self.sigma_t

    @property
    def theta(self):
        return self.xi0

    @property
    def area_prec(self):
        return 1.0 / self.area

    def as_array(self):
        return np.array([getattr(self, k) for k in PARAM_NAMES])

    def with_values(self, **values) -> "HawkesParams":
        return replace(self, **values)

    @classmethod
    def from_array(cls, values: Sequence[float], area=1.0, variant=CONSTANT):
        return cls(*map(float, values), area=area, variant=variant)

    def weights(self):
        """Background and triggering prefactors applied to the lane sums."""
        w_bg = self.mu0 / (self.area * self.tau_t * _SQRT_2PI)
        w_tr = self.xi0 / (self.sigma_t * 2.0 * math.pi * self.sigma_x ** 2)
        return w_bg, w_tr

    def kernel_constants(self, dtype=np.float64):
        w_bg, w_tr = self.weights()
        return np.array([w_bg, w_tr, self.tau_t_prec, self.omega,
                         self.sigma_x_prec ** 2, self.mu0, self.xi0], dtype=dtype)


def gaussian_pdf(z):
    return math.exp(-0.5 * z * z) / _SQRT_2PI


def gaussian_cdf(z):
    # erfc keeps full relative accuracy in the lower tail
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def spatial_scale(params: HawkesParams, density: float) -> float:
    if params.variant == VARYING:
        return params.sigma_x / math.sqrt(density)
    return params.sigma_x


def pair_rate(params: HawkesParams, source: Event, target: Event) -> float:
    """Contribution of ``source`` to the rate evaluated at ``target``."""
    dt = target.t - source.t
    rate = 0.0
    if dt != 0:
        rate += params.mu0 / params.area * gaussian_pdf(dt / params.tau_t) / params.tau_t
    if dt > 0:
        s = spatial_scale(params, source.density)
        d2 = (target.x[0] - source.x[0]) ** 2 + (target.x[1] - source.x[1]) ** 2
        phi2 = math.exp(-0.5 * d2 / (s * s)) / (2.0 * math.pi * s * s)
        rate += params.xi0 / params.sigma_t * math.exp(-dt / params.sigma_t) * phi2
    return rate


def integral_term(params: HawkesParams, t_n: float, t_N: float) -> float:
    """Compensator share of an event at ``t_n`` over the window (0, t_N]."""
    if t_n > t_N:
        raise ValueError(f"t_n={t_n} lies after the window end t_N={t_N}")
    background = params.mu0 * (gaussian_cdf((t_N - t_n) / params.tau_t)
                               - gaussian_cdf(-t_n / params.tau_t))
    triggered = -params.xi0 * math.expm1(-(t_N - t_n) / params.sigma_t)
    return background + triggered


def log_sum_exp(values) -> float:
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("log_sum_exp of an empty collection")
    m = values.max()
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(values - m))))


def kernel_arrays(catalog: Catalog, params: HawkesParams, dtype=np.float64):
    """Catalog columns cast to ``dtype``; the kernel scale is all ones for the constant variant."""
    scale = catalog.density if params.variant == VARYING else np.ones(len(catalog))
    return tuple(np.ascontiguousarray(a, dtype=dtype)
                 for a in (catalog.times, catalog.lon, catalog.lat, scale))


def event_contributions(catalog: Catalog, params: HawkesParams, start=0, stop=None,
                        dtype=np.float64):
    """Stabilised per-event terms for ``start <= n < stop`` (single worker)."""
    stop = len(catalog) if stop is None else stop
    k = kernels(dtype)
    out = np.zeros(len(catalog), dtype=dtype)
    k.loglik_slice(*kernel_arrays(catalog, params, dtype), start, stop,
                   params.kernel_constants(dtype), out)
    return out[start:stop]


def event_contribution(params: HawkesParams, catalog: Catalog, n: int, dtype=np.float64) -> float:
    if not 0 <= n < len(catalog):
        raise IndexError(f"event index {n} outside catalog of size {len(catalog)}")
    return float(event_contributions(catalog, params, n, n + 1, dtype)[0])


__all__ = [
    "CLIP", "LANES", "CONSTANT", "VARYING", "VARIANTS", "PARAM_NAMES",
    "Event", "Catalog", "HawkesParams", "gaussian_pdf", "gaussian_cdf",
    "spatial_scale", "pair_rate", "integral_term", "log_sum_exp",
    "kernel_arrays", "event_contributions", "event_contribution",
]
