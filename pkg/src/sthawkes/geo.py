"""Region geometry: polygon sampling, containment, unit conversion, domain area."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

MILES_PER_DEGREE = 69.17
ATTEMPT_BUDGET = 10_000
PAD_DEGREES = 1e-6

CONVENTIONS = ("latitudinal", "longitudinal", "averaged")
SCALINGS = ("eq3_sqrt", "table2_linear")


class RegionError(ValueError):
    pass


def ring_area(ring) -> float:
    """Signed shoelace area of a closed or open ring."""
    ring = np.asarray(ring, dtype=np.float64)
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _close(ring):
    ring = np.asarray(ring, dtype=np.float64)
    if ring.ndim != 2 or ring.shape[1] != 2 or ring.shape[0] < 3:
        raise RegionError("a ring needs at least three (lon, lat) vertices")
    if not np.array_equal(ring[0], ring[-1]):
        ring = np.vstack([ring, ring[:1]])
    return ring


def _on_segment(px, py, ax, ay, bx, by, tol):
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    scale = np.hypot(bx - ax, by - ay)
    dot = (px - ax) * (bx - ax) + (py - ay) * (by - ay)
    return (np.abs(cross) <= tol * np.maximum(scale, 1e-300)) & (dot >= -tol) & (
        dot <= scale * scale + tol)


def points_in_rings(px, py, rings, boundary=True, tol=1e-12):
    """Even-odd containment of points in a polygon given as rings (shell + holes).

    Points on an edge count as inside when ``boundary`` is true.
    """
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    inside = np.zeros(px.shape, dtype=bool)
    edge = np.zeros(px.shape, dtype=bool)
    for ring in rings:
        ax, ay = ring[:-1, 0], ring[:-1, 1]
        bx, by = ring[1:, 0], ring[1:, 1]
        for k in range(ax.shape[0]):
            crosses = (ay[k] > py) != (by[k] > py)
            with np.errstate(divide="ignore", invalid="ignore"):
                xcross = ax[k] + (py - ay[k]) * (bx[k] - ax[k]) / (by[k] - ay[k])
            inside ^= crosses & (px < xcross)
            if boundary:
                edge |= _on_segment(px, py, ax[k], ay[k], bx[k], by[k], tol)
    return inside | edge


@dataclass
class Polygon:
    rings: list  # shell first, then holes; each closed (k, 2)

    def __post_init__(self):
        self.rings = [_close(r) for r in self.rings]
        shell = abs(ring_area(self.rings[0]))
        holes = sum(abs(ring_area(r)) for r in self.rings[1:])
        self.area = max(shell - holes, 0.0)
        self.bbox = (*self.rings[0].min(axis=0), *self.rings[0].max(axis=0))

    def contains(self, px, py, boundary=True):
        return points_in_rings(px, py, self.rings, boundary)

    def centroid(self):
        # holes enter with negative weight
        cx = cy = total = 0.0
        for k, ring in enumerate(self.rings):
            x, y = ring[:-1, 0], ring[:-1, 1]
            x1, y1 = ring[1:, 0], ring[1:, 1]
            cross = x * y1 - x1 * y
            a = 0.5 * cross.sum()
            if a == 0:
                continue
            w = abs(a) if k == 0 else -abs(a)
            cx += w * ((x + x1) * cross).sum() / (6.0 * a)
            cy += w * ((y + y1) * cross).sum() / (6.0 * a)
            total += w
        if total == 0:
            return tuple(self.rings[0][:-1].mean(axis=0))
        return cx / total, cy / total


@dataclass
class Region:
    """A coarse region: one or more polygons, or a single exact point."""

    region_id: str
    density: float = 1.0
    polygons: list = field(default_factory=list)
    point: tuple | None = None

    def __post_init__(self):
        if not self.density > 0:
            raise RegionError(f"region {self.region_id}: density must be > 0")
        if self.point is None and not self.polygons:
            raise RegionError(f"region {self.region_id}: no geometry")
        self.polygons = [p if isinstance(p, Polygon) else Polygon(p) for p in self.polygons]

    @property
    def area(self) -> float:
        return sum(p.area for p in self.polygons)

    @property
    def bbox(self):
        if self.point is not None:
            return (*self.point, *self.point)
        boxes = np.array([p.bbox for p in self.polygons])
        return (boxes[:, 0].min(), boxes[:, 1].min(), boxes[:, 2].max(), boxes[:, 3].max())

    @property
    def latitude(self) -> float:
        """Representative latitude (area-weighted polygon centroid)."""
        if self.point is not None:
            return float(self.point[1])
        w = np.array([p.area for p in self.polygons])
        lats = np.array([p.centroid()[1] for p in self.polygons])
        return float(np.average(lats, weights=w) if w.sum() > 0 else lats.mean())

    def contains(self, px, py, boundary=True):
        px = np.asarray(px, dtype=np.float64)
        py = np.asarray(py, dtype=np.float64)
        if self.point is not None:
            return (px == self.point[0]) & (py == self.point[1])
        out = np.zeros(np.broadcast(px, py).shape, dtype=bool)
        for p in self.polygons:
            out |= p.contains(px, py, boundary)
        return out


def _draw_in_polygon(polygon: Polygon, k: int, rng, budget=ATTEMPT_BUDGET, region_id=""):
    """Bounding-box rejection for ``k`` points; returns (points, proposals used)."""
    x0, y0, x1, y1 = polygon.bbox
    out = np.empty((k, 2))
    filled, proposals = 0, 0
    # every point gets the same per-draw budget
    limit = budget * k
    while filled < k:
        if proposals >= limit:
            raise RegionError(f"region {region_id}: rejection sampling exhausted "
                              f"{budget} attempts per draw")
        m = max(16, int(1.3 * (k - filled) * (x1 - x0) * (y1 - y0) / polygon.area))
        m = min(m, limit - proposals)
        xs = rng.uniform(x0, x1, m)
        ys = rng.uniform(y0, y1, m)
        ok = polygon.contains(xs, ys, boundary=False)
        take = np.flatnonzero(ok)[: k - filled]
        used = m if take.size < k - filled else int(take[-1]) + 1
        proposals += used
        out[filled:filled + take.size, 0] = xs[take]
        out[filled:filled + take.size, 1] = ys[take]
        filled += take.size
    return out, proposals


def sample_points_in_region(region: Region, k: int, rng, budget=ATTEMPT_BUDGET):
    """``k`` independent uniform draws over the region, shape ``(k, 2)``."""
    if region.point is not None:
        return np.tile(np.asarray(region.point, dtype=np.float64), (k, 1))
    areas = np.array([p.area for p in region.polygons])
    if not areas.sum() > 0:
        raise RegionError(f"region {region.region_id}: zero area, cannot sample uniformly")
    counts = rng.multinomial(k, areas / areas.sum()) if len(areas) > 1 else np.array([k])
    parts = []
    for polygon, c in zip(region.polygons, counts):
        if c:
            pts, _ = _draw_in_polygon(polygon, int(c), rng, budget, region.region_id)
            parts.append(pts)
    pts = np.vstack(parts)
    # part blocks are contiguous; shuffle so draw order carries no part label
    return pts[rng.permutation(k)] if len(parts) > 1 else pts


def sample_point_in_region(region: Region, rng, budget=ATTEMPT_BUDGET):
    x, y = sample_points_in_region(region, 1, rng, budget)[0]
    return float(x), float(y)


class RegionTable:
    """Ordered, immutable mapping of region id to :class:`Region`."""

    def __init__(self, regions):
        self._regions = {}
        for r in regions:
            if r.region_id in self._regions:
                raise RegionError(f"duplicate region id {r.region_id!r}")
            self._regions[r.region_id] = r

    def __getitem__(self, region_id) -> Region:
        try:
            return self._regions[str(region_id)]
        except KeyError:
            raise RegionError(f"unknown region id {region_id!r}") from None

    def __contains__(self, region_id):
        return str(region_id) in self._regions

    def __iter__(self):
        return iter(self._regions.values())

    def __len__(self):
        return len(self._regions)

    def ids(self):
        return list(self._regions)

    def density_of(self, region_ids):
        return np.array([self[r].density for r in region_ids], dtype=np.float64)

    def bounds(self):
        boxes = np.array([r.bbox for r in self])
        return (boxes[:, 0].min(), boxes[:, 1].min(), boxes[:, 2].max(), boxes[:, 3].max())

    def locate(self, lon, lat):
        """Index into ``ids()`` of the first region containing each point, or -1."""
        lon = np.asarray(lon, dtype=np.float64)
        lat = np.asarray(lat, dtype=np.float64)
        found = np.full(lon.shape, -1, dtype=np.int64)
        for k, region in enumerate(self):
            todo = found < 0
            if not todo.any():
                break
            x0, y0, x1, y1 = region.bbox
            cand = todo & (lon >= x0) & (lon <= x1) & (lat >= y0) & (lat <= y1)
            idx = np.flatnonzero(cand)
            if idx.size:
                hit = region.contains(lon[idx], lat[idx])
                found[idx[hit]] = k
        return found

    def with_densities(self, densities: dict) -> "RegionTable":
        out = []
        for r in self:
            d = densities.get(r.region_id, r.density)
            out.append(Region(r.region_id, d, r.polygons, r.point))
        return RegionTable(out)


def point_regions(lon, lat, density=None, prefix="p"):
    """One exact-point region per location; ids are ``f"{prefix}{k}"``."""
    density = np.ones(len(lon)) if density is None else np.asarray(density, float)
    return RegionTable(Region(f"{prefix}{k}", float(density[k]), point=(float(x), float(y)))
                       for k, (x, y) in enumerate(zip(lon, lat)))


def grid_regions(bounds, nx, ny, density=None):
    """Rectangular ``nx`` by ``ny`` tiling of ``bounds = (lon0, lat0, lon1, lat1)``."""
    x0, y0, x1, y1 = bounds
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    regions = []
    for j in range(ny):
        for i in range(nx):
            d = 1.0 if density is None else float(density(0.5 * (xs[i] + xs[i + 1]),
                                                             0.5 * (ys[j] + ys[j + 1])))
            ring = [(xs[i], ys[j]), (xs[i + 1], ys[j]), (xs[i + 1], ys[j + 1]), (xs[i], ys[j + 1])]
            regions.append(Region(f"g{j}_{i}", d, [Polygon([ring])]))
    return RegionTable(regions)


# --- units --------------------------------------------------------------------


def degree_mile_factors(latitude: float):
    """Miles per degree of latitude and of longitude at ``latitude``."""
    if not abs(latitude) < 90:
        raise ValueError(f"latitude must satisfy |lat| < 90, got {latitude}")
    return MILES_PER_DEGREE, math.cos(latitude * math.pi / 180.0) * MILES_PER_DEGREE


def effective_lengthscale_degrees(sigma_x, density, scaling="eq3_sqrt", variant="varying"):
    """Triggering spatial scale at a given population density, in degrees."""
    if variant == "constant":
        return sigma_x
    if not np.all(np.asarray(density) > 0):
        raise ValueError("density must be > 0")
    if scaling == "eq3_sqrt":
        return sigma_x / np.sqrt(density)
    if scaling == "table2_linear":
        return sigma_x / density
    raise ValueError(f"scaling must be one of {SCALINGS}, got {scaling!r}")


def lengthscale_to_miles(deg, latitude, convention="averaged"):
    lat_f, lon_f = degree_mile_factors(latitude)
    if convention == "latitudinal":
        factor = lat_f
    elif convention == "longitudinal":
        factor = lon_f
    elif convention == "averaged":
        factor = 0.5 * (lat_f + lon_f)
    else:
        raise ValueError(f"convention must be one of {CONVENTIONS}, got {convention!r}")
    return deg * factor


def domain_area(catalog=None, override=None, bounds=None) -> float:
    """Area of the spatial domain in square degrees.

    Uses ``override`` when given, otherwise the bounding box of ``bounds`` or
    of the catalog locations; a flat side is padded by 1e-6 degrees each way.
    """
    if override is not None:
        if not override > 0:
            raise ValueError("area override must be > 0")
        return float(override)
    if bounds is None:
        bounds = (catalog.lon.min(), catalog.lat.min(), catalog.lon.max(), catalog.lat.max())
    x0, y0, x1, y1 = map(float, bounds)
    w = x1 - x0 if x1 > x0 else 2 * PAD_DEGREES
    h = y1 - y0 if y1 > y0 else 2 * PAD_DEGREES
    return w * h


# --- files --------------------------------------------------------------------


def _polygons_from_geometry(geom):
    kind = geom.get("type")
    coords = geom.get("coordinates")
    if kind == "Polygon":
        return [Polygon(coords)], None
    if kind == "MultiPolygon":
        return [Polygon(p) for p in coords], None
    if kind == "Point":
        return [], (float(coords[0]), float(coords[1]))
    raise RegionError(f"unsupported geometry type {kind!r}")


def load_regions_geojson(path, id_key="region_id", density_key="density", densities=None):
    """Read a FeatureCollection; densities may come from properties or ``densities``."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("type") != "FeatureCollection":
        raise RegionError(f"{path}: expected a GeoJSON FeatureCollection")
    densities = densities or {}
    regions = []
    for k, feat in enumerate(doc.get("features", [])):
        props = feat.get("properties") or {}
        if id_key not in props:
            raise RegionError(f"{path}: feature {k} lacks property {id_key!r}")
        rid = str(props[id_key])
        density = densities.get(rid, props.get(density_key))
        if density is None:
            raise RegionError(f"{path}: region {rid} has no density")
        polygons, point = _polygons_from_geometry(feat["geometry"])
        regions.append(Region(rid, float(density), polygons, point))
    return RegionTable(regions)


def load_densities_csv(path):
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"region_id", "density"} <= set(reader.fieldnames):
            raise RegionError(f"{path}: header must contain region_id,density")
        for line, row in enumerate(reader, start=2):
            try:
                out[row["region_id"]] = float(row["density"])
            except ValueError:
                raise RegionError(f"{path}:{line}: bad density {row['density']!r}") from None
    return out


def write_regions_geojson(table: RegionTable, path, id_key="region_id", density_key="density"):
    features = []
    for r in table:
        if r.point is not None:
            geom = {"type": "Point", "coordinates": list(r.point)}
        else:
            polys = [[ring.tolist() for ring in p.rings] for p in r.polygons]
            geom = ({"type": "Polygon", "coordinates": polys[0]} if len(polys) == 1
                    else {"type": "MultiPolygon", "coordinates": polys})
        features.append({"type": "Feature", "geometry": geom,
                         "properties": {id_key: r.region_id, density_key: r.density}})
    with open(path, "w") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh)
