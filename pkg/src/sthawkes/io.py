"""Events CSV ingestion and the JSON run configuration.

Times are in weeks throughout; daily data must be divided by 7 by the caller.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .geo import RegionTable, load_densities_csv, load_regions_geojson
from .model import CONSTANT, PARAM_NAMES, VARIANTS, Catalog

EVENT_COLUMNS = ("event_id", "t_weeks", "lon", "lat", "region_id")
REQUIRED_COLUMNS = ("event_id", "t_weeks", "region_id")


class ConfigError(ValueError):
    """Invalid run configuration; the CLI exits with status 2."""


class EventsError(ValueError):
    pass


def _float(text, path, line, column):
    try:
        return float(text)
    except (TypeError, ValueError):
        raise EventsError(f"{path}:{line}: {column} {text!r} is not a number") from None


def load_events(path, regions: RegionTable | None = None) -> Catalog:
    """Read an events CSV into a sorted :class:`Catalog`.

    ``lon`` and ``lat`` may be absent (as columns, or blank in every row) when
    each row names a region; the catalog is then flagged ``locations_pending``.
    Densities come from ``regions`` when given, else from an optional
    ``density`` column, else 1.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise EventsError(f"{path}: missing columns {missing}; header was {header}")
        has_xy = "lon" in header and "lat" in header
        ids, times, lon, lat, rids, dens, lines = [], [], [], [], [], [], []
        for line, row in enumerate(reader, start=2):
            t = _float(row["t_weeks"], path, line, "t_weeks")
            if not math.isfinite(t) or t < 0:
                raise EventsError(f"{path}:{line}: t_weeks must be finite and >= 0, got {t}")
            rid = (row["region_id"] or "").strip()
            x = (row.get("lon") or "").strip() if has_xy else ""
            y = (row.get("lat") or "").strip() if has_xy else ""
            if bool(x) != bool(y):
                raise EventsError(f"{path}:{line}: lon and lat must both be present or both blank")
            if not x and not rid:
                raise EventsError(f"{path}:{line}: a row without lon/lat needs a region_id")
            if regions is not None and rid not in regions:
                raise EventsError(f"{path}:{line}: unknown region_id {rid!r}")
            ids.append(row["event_id"])
            times.append(t)
            lon.append(_float(x, path, line, "lon") if x else math.nan)
            lat.append(_float(y, path, line, "lat") if y else math.nan)
            rids.append(rid)
            if regions is None and row.get("density"):
                dens.append(_float(row["density"], path, line, "density"))
            lines.append(line)
    if not times:
        raise EventsError(f"{path}: no events")
    lon, lat = np.array(lon), np.array(lat)
    blank = np.isnan(lon)
    if blank.any() and not blank.all():
        k = int(np.flatnonzero(blank != blank[0])[0])
        raise EventsError(f"{path}:{lines[k]}: mixing rows with and without coordinates")
    bad = ~np.isfinite(lon) | ~np.isfinite(lat)
    if not blank.all() and bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise EventsError(f"{path}:{lines[k]}: coordinates must be finite")
    if regions is not None:
        density = regions.density_of(rids)
    elif dens:
        if len(dens) != len(times):
            raise EventsError(f"{path}: density column is blank on some rows")
        density = np.array(dens)
        if np.any(~(density > 0)):
            k = int(np.flatnonzero(~(density > 0))[0])
            raise EventsError(f"{path}:{lines[k]}: density must be > 0")
    else:
        density = None
    return Catalog.from_unsorted(times, lon, lat, rids, density,
                                 locations_pending=bool(blank.all()), event_ids=ids)


def write_events(catalog: Catalog, path, coarse=None):
    """Write the events CSV (plus a ``density`` column); floats round-trip exactly.

    ``coarse`` defaults to ``catalog.locations_pending`` and leaves lon/lat blank.
    """
    coarse = catalog.locations_pending if coarse is None else coarse
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVENT_COLUMNS + ("density",))
        for n in range(len(catalog)):
            xy = ("", "") if coarse else (repr(float(catalog.lon[n])), repr(float(catalog.lat[n])))
            writer.writerow([catalog.event_ids[n], repr(float(catalog.times[n])), *xy,
                             catalog.region_ids[n], repr(float(catalog.density[n]))])


@dataclass
class RunConfig:
    """Everything a CLI command needs; loaded from one JSON document.

    Command-line flags override the matching keys.  ``initial`` maps parameter
    names to starting values, ``steps`` to proposal scales, ``simulate`` and
    ``bench`` hold the settings of those commands.
    """

    events: str | None = None
    regions: str | None = None
    densities: str | None = None
    out: str = "out"
    variant: str = CONSTANT
    precision: str = "double"
    workers: int = 1
    seed: int = 0
    area: float | None = None
    region_id_key: str = "region_id"
    region_density_key: str = "density"
    chains: int = 4
    jobs: int = 1
    iterations: int = 5000
    burn_in: int = 1000
    thin: int = 1
    refresh_period: int = 1
    adapt: bool = True
    prior_sd: float = 10.0
    fixed_locations: bool = False
    initial: dict = field(default_factory=dict)
    steps: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)
    bench: dict = field(default_factory=dict)

    def validate(self, need_events=False):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.precision not in ("single", "double"):
            raise ConfigError(f"precision must be single or double, got {self.precision!r}")
        if self.workers < 1 or self.chains < 1 or self.jobs < 1:
            raise ConfigError("workers, chains and jobs must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigError(f"burn_in ({self.burn_in}) must be < iterations ({self.iterations})")
        if self.area is not None and not self.area > 0:
            raise ConfigError("area must be > 0")
        bad = set(self.initial) - set(PARAM_NAMES)
        if bad or set(self.steps) - set(PARAM_NAMES):
            raise ConfigError(f"unknown parameter names in initial/steps: {sorted(bad)}")
        if need_events and not self.events:
            raise ConfigError("an events CSV is required (--events)")
        for name in ("events", "regions", "densities"):
            p = getattr(self, name)
            if p is not None and not os.path.isfile(p):
                raise ConfigError(f"{name} file not found: {p}")
        try:
            os.makedirs(self.out, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory {self.out!r} is not writable: {exc}") from None
        if not os.access(self.out, os.W_OK):
            raise ConfigError(f"output directory {self.out!r} is not writable")
        return self

    def to_dict(self):
        return asdict(self)

    def load_regions(self) -> RegionTable | None:
        if self.regions is None:
            return None
        densities = load_densities_csv(self.densities) if self.densities else None
        return load_regions_geojson(self.regions, self.region_id_key,
                                    self.region_density_key, densities)


def load_config(path=None, overrides=None) -> RunConfig:
    """Read a JSON config (optional) and apply non-None ``overrides``."""
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    try:
        return RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
