import csv
import math
import os

import numpy as np
import pytest
import shapely
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from conftest import DATA
from sthawkes.geo import (MILES_PER_DEGREE, Polygon, Region, RegionError, RegionTable, _draw_in_polygon,
                          degree_mile_factors, domain_area, effective_lengthscale_degrees, grid_regions,
                          lengthscale_to_miles, load_densities_csv, load_regions_geojson, point_regions,
                          ring_area, sample_point_in_region, sample_points_in_region, write_regions_geojson)
from sthawkes.model import Catalog

SQUARE = [(0, 0), (1, 0), (1, 1), (0, 1)]
L_SHAPE = [(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]
DONUT = [[(0, 0), (4, 0), (4, 4), (0, 4)], [(1, 1), (3, 1), (3, 3), (1, 3)]]


def county_rows():
    with open(os.path.join(DATA, "county_lengthscales.csv"), newline="") as fh:
        return [dict(r) for r in csv.DictReader(fh)]


class TestPolygon:
    def test_area_and_bbox(self):
        assert ring_area(SQUARE) == 1.0
        p = Polygon([L_SHAPE])
        assert p.area == 3.0 and p.bbox == (0, 0, 2, 2)
        assert Polygon(DONUT).area == 12.0

    def test_centroid_matches_shapely(self):
        for rings in ([L_SHAPE], DONUT, [[(0, 0), (5, 1), (3, 4)]]):
            ref = shapely.Polygon(rings[0], rings[1:]).centroid
            got = Polygon(rings).centroid()
            assert got == pytest.approx((ref.x, ref.y), abs=1e-12)

    @given(st.integers(0, 2**32 - 1))
    def test_contains_matches_shapely(self, seed):
        rng = np.random.default_rng(seed)
        # random star-shaped polygon around the origin
        k = int(rng.integers(3, 12))
        ang = np.sort(rng.uniform(0, 2 * np.pi, k))
        rad = rng.uniform(0.5, 2.0, k)
        ring = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        poly = Polygon([ring])
        ref = shapely.Polygon(ring)
        pts = rng.uniform(-2.2, 2.2, (400, 2))
        got = poly.contains(pts[:, 0], pts[:, 1], boundary=False)
        want = shapely.contains_xy(ref, pts[:, 0], pts[:, 1])
        assert np.array_equal(got, want)


class TestSampling:
    def test_unit_square_uniform(self):
        rng = np.random.default_rng(0)
        pts = sample_points_in_region(Region("sq", polygons=[[SQUARE]]), 100_000, rng)
        assert pts.min() >= 0 and pts.max() <= 1
        counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=10, range=[[0, 1], [0, 1]])
        assert stats.chisquare(counts.ravel()).pvalue > 0.01

    def test_l_shape_acceptance_matches_area_ratio(self):
        rng = np.random.default_rng(1)
        pts, proposals = _draw_in_polygon(Polygon([L_SHAPE]), 75_000, rng)
        assert 75_000 / proposals == pytest.approx(0.75, abs=0.01)

    def test_points_pass_independent_containment(self):
        rng = np.random.default_rng(2)
        for rings in ([L_SHAPE], DONUT):
            pts = sample_points_in_region(Region("r", polygons=[rings]), 5000, rng)
            ref = shapely.Polygon(rings[0], rings[1:])
            assert shapely.intersects_xy(ref, pts[:, 0], pts[:, 1]).all()

    def test_multipolygon_part_frequency(self):
        rng = np.random.default_rng(3)
        small = [(0, 0), (1, 0), (1, 1), (0, 1)]
        big = [(10, 0), (13, 0), (13, 1), (10, 1)]
        pts = sample_points_in_region(Region("m", polygons=[[small], [big]]), 100_000, rng)
        assert np.mean(pts[:, 0] < 5) == pytest.approx(0.25, abs=0.01)

    def test_zero_area_rejected(self):
        flat = Region("flat", polygons=[[[(0, 0), (1, 1), (2, 2)]]])
        with pytest.raises(RegionError, match="zero area"):
            sample_point_in_region(flat, np.random.default_rng(0))

    def test_budget_exhaustion_names_region(self):
        sliver = Region("sliver", polygons=[[[(0, 0), (1000, 1000), (1000, 1000.001)]]])
        with pytest.raises(RegionError, match="sliver"):
            sample_point_in_region(sliver, np.random.default_rng(0), budget=3)

    def test_point_region_is_deterministic(self):
        r = Region("p", point=(3.5, -1.25))
        assert sample_point_in_region(r, np.random.default_rng(0)) == (3.5, -1.25)
        assert r.area == 0 and r.latitude == -1.25


class TestRegionTable:
    def test_locate_first_region_wins_on_shared_edge(self):
        table = grid_regions((0, 0, 2, 1), 2, 1)
        idx = table.locate(np.array([0.5, 1.0, 1.5, 5.0]), np.array([0.5, 0.5, 0.5, 0.5]))
        assert idx.tolist() == [0, 0, 1, -1]

    def test_duplicate_and_unknown_ids(self):
        with pytest.raises(RegionError):
            RegionTable([Region("a", point=(0, 0)), Region("a", point=(1, 1))])
        with pytest.raises(RegionError):
            point_regions([0.0], [0.0])["missing"]

    def test_geojson_round_trip(self, tmp_path):
        table = RegionTable([Region("donut", 5.0, [DONUT]), Region("pt", 2.0, point=(1.0, 2.0)),
                             Region("two", 3.0, [[SQUARE], [L_SHAPE]])])
        path = tmp_path / "r.geojson"
        write_regions_geojson(table, path)
        again = load_regions_geojson(path)
        assert again.ids() == table.ids()
        assert [r.area for r in again] == [r.area for r in table]
        assert again.density_of(["pt", "donut"]).tolist() == [2.0, 5.0]

    def test_densities_from_csv(self, tmp_path):
        (tmp_path / "d.csv").write_text("region_id,density\npt,7.5\n")
        table = RegionTable([Region("pt", 2.0, point=(1.0, 2.0))])
        write_regions_geojson(table, tmp_path / "r.geojson")
        again = load_regions_geojson(tmp_path / "r.geojson", densities=load_densities_csv(tmp_path / "d.csv"))
        assert again["pt"].density == 7.5

    def test_bad_geojson(self, tmp_path):
        (tmp_path / "bad.geojson").write_text('{"type": "Feature"}')
        with pytest.raises(RegionError):
            load_regions_geojson(tmp_path / "bad.geojson")


class TestUnits:
    def test_mile_factors(self):
        assert degree_mile_factors(0) == (69.17, 69.17)
        lat_f, lon_f = degree_mile_factors(34.20)
        assert lat_f == 69.17 and lon_f == pytest.approx(57.21, abs=0.01)
        assert degree_mile_factors(60)[1] == pytest.approx(34.585, rel=1e-12)
        with pytest.raises(ValueError):
            degree_mile_factors(90)

    def test_effective_lengthscale(self):
        assert effective_lengthscale_degrees(1.479, 2467.79, "eq3_sqrt") == pytest.approx(0.029772, abs=1e-6)
        for scaling in ("eq3_sqrt", "table2_linear"):
            assert effective_lengthscale_degrees(1.479, 1.0, scaling) == 1.479
        assert effective_lengthscale_degrees(0.0798, 5000.0, variant="constant") == 0.0798
        with pytest.raises(ValueError):
            effective_lengthscale_degrees(1.0, 2.0, "other")

    def test_published_constant_column(self):
        for row in county_rows():
            miles = lengthscale_to_miles(0.0798, float(row["latitude"]), "averaged")
            assert miles == pytest.approx(float(row["constant_mi"]), abs=0.05)

    def test_published_varying_column_follows_linear_scaling(self):
        # the published varying column is reproduced by sigma_x / D, not sigma_x / sqrt(D)
        for row in county_rows():
            deg = effective_lengthscale_degrees(1.479, float(row["density"]), "table2_linear")
            miles = lengthscale_to_miles(deg, float(row["latitude"]), "averaged")
            # published to three decimals from a rounded sigma_x median
            assert miles == pytest.approx(float(row["varying_mi"]), rel=0.01, abs=0.0005)

    def test_example_rows(self):
        assert lengthscale_to_miles(0.0798, 34.20) == pytest.approx(5.04, abs=0.005)
        assert lengthscale_to_miles(0.0798, 40.78) == pytest.approx(4.85, abs=0.005)
        for convention in ("latitudinal", "longitudinal", "averaged"):
            assert lengthscale_to_miles(1.0, 0.0, convention) == MILES_PER_DEGREE

    @given(st.floats(0, 10), st.floats(-89.9, 89.9))
    def test_averaged_between_the_others(self, deg, lat):
        lo = lengthscale_to_miles(deg, lat, "longitudinal")
        hi = lengthscale_to_miles(deg, lat, "latitudinal")
        mid = lengthscale_to_miles(deg, lat, "averaged")
        assert lo - 1e-12 <= mid <= hi + 1e-12


class TestDomainArea:
    def test_examples(self):
        c = Catalog([0.0, 1.0], [-10.0, 0.0], [0.0, 5.0])
        assert domain_area(c) == 50.0
        assert domain_area(c, override=3000) == 3000
        assert domain_area(Catalog([0.0], [1.0], [1.0])) == pytest.approx(4e-12, rel=1e-9)
        with pytest.raises(ValueError):
            domain_area(c, override=0)

    def test_from_bounds(self):
        assert domain_area(bounds=grid_regions((0, 0, 3, 2), 3, 2).bounds()) == 6.0
        assert math.isclose(domain_area(bounds=(0, 0, 0, 2)), 4e-6)
