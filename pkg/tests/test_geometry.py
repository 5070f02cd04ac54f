import math

import numpy as np
import pytest

from bsdloc.geometry import (
    EARTH_RADIUS_M,
    DirectedLocation,
    GeoPoint,
    SectorSpec,
    SemanticMap,
    angular_sep_deg,
    bsd_from_str,
    bsd_str,
    gap_bit,
    ground_truth_bsd,
    ground_truth_bsd_at,
    junc_bit,
    local_to_latlon,
    pack_bsd,
    project_to_local,
    rays_covered,
    reverse_bsd,
    sector_contains,
    unpack_bsd,
)
from tests.conftest import random_building_map

ORIGIN = (51.5, -0.1)


def dloc(x, y, heading, uid=0, sid=0):
    return DirectedLocation(uid, sid, GeoPoint(x, y), heading)


class TestProjection:
    def test_origin_maps_to_zero(self):
        assert project_to_local(*ORIGIN, ORIGIN) == (0.0, 0.0)

    def test_latitude_step(self):
        # Independent evaluation of R * dlat_rad for dlat = 1e-3 deg.
        expected = EARTH_RADIUS_M * math.radians(1e-3)
        p = project_to_local(ORIGIN[0] + 1e-3, ORIGIN[1], ORIGIN)
        assert p.x == pytest.approx(0.0, abs=1e-9)
        assert p.y == pytest.approx(expected, rel=1e-9)
        assert expected == pytest.approx(111.19, abs=0.01)

    def test_longitude_step_scales_with_cos_lat(self):
        origin = (60.0, 10.0)
        expected = EARTH_RADIUS_M * math.cos(math.radians(60.0)) * math.radians(1e-3)
        p = project_to_local(60.0, 10.0 + 1e-3, origin)
        assert p.x == pytest.approx(expected, rel=1e-9)
        assert p.y == pytest.approx(0.0, abs=1e-9)
        assert expected == pytest.approx(55.60, abs=0.01)

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            lat = ORIGIN[0] + rng.uniform(-0.02, 0.02)
            lon = ORIGIN[1] + rng.uniform(-0.02, 0.02)
            p = project_to_local(lat, lon, ORIGIN)
            back = local_to_latlon(p, ORIGIN)
            assert back[0] == pytest.approx(lat, abs=1e-12)
            assert back[1] == pytest.approx(lon, abs=1e-12)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            project_to_local(float("nan"), 0.0, ORIGIN)
        with pytest.raises(ValueError):
            project_to_local(91.0, 0.0, ORIGIN)


class TestSectorSpec:
    def test_defaults(self):
        spec = SectorSpec()
        assert spec.radius == 30.0
        assert spec.half_angle == 45.0

    @pytest.mark.parametrize("kwargs", [{"radius": 0}, {"radius": -1}, {"half_angle": 0}, {"half_angle": 91}])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SectorSpec(**kwargs)


class TestBsdPacking:
    def test_round_trip_all_patterns(self):
        for d in range(16):
            assert pack_bsd(*unpack_bsd(d)) == d
            assert bsd_from_str(bsd_str(d)) == d

    def test_string_order_front_back_left_right(self):
        assert bsd_str(pack_bsd(1, 0, 0, 0)) == "1000"
        assert bsd_str(pack_bsd(0, 0, 0, 1)) == "0001"

    def test_reverse_examples(self):
        assert reverse_bsd(bsd_from_str("0000")) == bsd_from_str("0000")
        assert reverse_bsd(bsd_from_str("1010")) == bsd_from_str("0101")

    def test_reverse_is_involution(self):
        for d in range(16):
            assert reverse_bsd(reverse_bsd(d)) == d


class TestSectorContains:
    spec = SectorSpec(radius=30.0)

    def test_interior_point_ahead(self):
        assert sector_contains(GeoPoint(0, 0), 0.0, "front", self.spec, GeoPoint(10, 0))

    def test_boundary_distance_inclusive(self):
        assert sector_contains(GeoPoint(0, 0), 0.0, "front", self.spec, GeoPoint(30, 0))
        assert not sector_contains(GeoPoint(0, 0), 0.0, "front", self.spec, GeoPoint(30.001, 0))

    def test_side_point_belongs_to_left(self):
        p = GeoPoint(0, 10)  # bearing 90 = heading + 90 for heading 0
        assert not sector_contains(GeoPoint(0, 0), 0.0, "front", self.spec, p)
        assert sector_contains(GeoPoint(0, 0), 0.0, "left", self.spec, p)

    def test_partition_away_from_boundaries(self):
        rng = np.random.default_rng(2)
        center = GeoPoint(0, 0)
        hits = 0
        for _ in range(500):
            heading = rng.uniform(0, 360)
            r = rng.uniform(0.5, 29.5)
            ang = rng.uniform(0, 360)
            # skip points within 0.1 deg of a quadrant boundary
            rel = (ang - heading) % 90.0
            if min(rel % 90, 90 - rel % 90) < 0.1:
                continue
            p = GeoPoint(r * math.cos(math.radians(ang)), r * math.sin(math.radians(ang)))
            inside = [v for v in ("front", "back", "left", "right")
                      if sector_contains(center, heading, v, self.spec, p)]
            assert len(inside) == 1
            hits += 1
        assert hits > 400


class TestJuncBit:
    spec = SectorSpec()

    def make_map(self, *junctions):
        return SemanticMap([GeoPoint(*j) for j in junctions], [])

    def test_junction_ahead(self):
        smap = self.make_map((15, 0))
        assert junc_bit(dloc(0, 0, 0.0), smap, "front", self.spec) == 1

    def test_junction_beyond_radius(self):
        smap = self.make_map((40, 0))
        assert junc_bit(dloc(0, 0, 0.0), smap, "front", self.spec) == 0

    def test_junction_to_the_side_not_front(self):
        smap = self.make_map((0, 15))
        assert junc_bit(dloc(0, 0, 0.0), smap, "front", self.spec) == 0

    def test_self_junction_excluded(self):
        smap = self.make_map((0.2, 0))
        assert junc_bit(dloc(0, 0, 0.0), smap, "front", self.spec) == 0

    def test_rejects_side_views(self):
        with pytest.raises(ValueError):
            junc_bit(dloc(0, 0, 0.0), self.make_map((5, 5)), "left", self.spec)


def oracle_covered_mask(x, y, angles_deg, radius, edges):
    """Exact per-ray coverage via disk clipping and interval membership.

    Independent of the vectorized segment-intersection kernel: each edge is
    clipped to the viewing disk analytically and the subtended bearing
    interval tested per ray.
    """
    intervals = []
    for x1, y1, x2, y2 in edges:
        # Clip segment to circle of the given radius centered at (x, y).
        dx, dy = x2 - x1, y2 - y1
        fx, fy = x1 - x, y1 - y
        a = dx * dx + dy * dy
        if a < 1e-18:
            continue
        b = 2 * (fx * dx + fy * dy)
        c = fx * fx + fy * fy - radius * radius
        disc = b * b - 4 * a * c
        if disc < 0:
            continue
        sq = math.sqrt(disc)
        t0 = max(0.0, (-b - sq) / (2 * a))
        t1 = min(1.0, (-b + sq) / (2 * a))
        if t0 > t1:
            continue
        px0, py0 = x1 + t0 * dx - x, y1 + t0 * dy - y
        px1, py1 = x1 + t1 * dx - x, y1 + t1 * dy - y
        a0 = math.degrees(math.atan2(py0, px0)) % 360.0
        a1 = math.degrees(math.atan2(py1, px1)) % 360.0
        # The chord subtends the short way around.
        if (a1 - a0) % 360.0 <= 180.0:
            intervals.append((a0, (a1 - a0) % 360.0))
        else:
            intervals.append((a1, (a0 - a1) % 360.0))
    mask = np.zeros(len(angles_deg), dtype=bool)
    for i, ang in enumerate(angles_deg):
        for start, width in intervals:
            if (ang - start) % 360.0 <= width:
                mask[i] = True
                break
    return mask


class TestGapBit:
    spec = SectorSpec()

    def test_solid_wall_blocks_sector(self):
        wall = [np.array([(5, 4), (5, 6), (-5, 6), (-5, 4)]) * np.array([10, 1])]
        smap = SemanticMap([], wall)  # wall spans x in [-50, 50], y in [4, 6]
        assert gap_bit(dloc(0, 0, 0.0), smap, "left", self.spec) == 0

    def test_open_land_is_a_gap(self):
        smap = SemanticMap([], [])
        assert gap_bit(dloc(0, 0, 0.0), smap, "left", self.spec) == 1

    def test_street_between_buildings(self):
        # Two buildings 20 m apart at ~20 m range: angular gap well over 15 deg.
        left = np.array([(-40, 18), (-10, 18), (-10, 30), (-40, 30)])
        right = np.array([(10, 18), (40, 18), (40, 30), (10, 30)])
        smap = SemanticMap([], [left, right])
        assert gap_bit(dloc(0, 0, 0.0), smap, "left", self.spec) == 1

    def test_degenerate_ring_dropped_with_counter(self):
        degenerate = np.array([(0, 10), (5, 10), (0, 10)])
        smap = SemanticMap([], [degenerate])
        assert smap.dropped_buildings == 1
        assert gap_bit(dloc(0, 0, 0.0), smap, "left", self.spec) == 1

    def test_ray_cast_matches_exact_coverage_oracle(self):
        rng = np.random.default_rng(42)
        spec = self.spec
        mismatches = 0
        for trial in range(300):
            smap = random_building_map(rng, n_buildings=int(rng.integers(1, 8)))
            heading = float(rng.uniform(0, 360))
            view = "left" if trial % 2 else "right"
            axis = (heading + (90.0 if view == "left" else 270.0)) % 360.0
            angles = axis - 45.0 + np.arange(91.0)
            got = rays_covered(0.0, 0.0, angles, spec.radius, smap.building_edges)
            want = oracle_covered_mask(0.0, 0.0, angles, spec.radius, smap.building_edges)
            mismatches += int((got != want).sum())
        assert mismatches == 0


class TestGroundTruthBsd:
    def test_midblock_fully_walled_is_0000(self):
        top = np.array([(-60, 5), (60, 5), (60, 20), (-60, 20)])
        bottom = np.array([(-60, -20), (60, -20), (60, -5), (-60, -5)])
        smap = SemanticMap([GeoPoint(100, 0)], [top, bottom])
        assert bsd_str(ground_truth_bsd(dloc(0, 0, 0.0), smap)) == "0000"

    def test_t_junction_ahead_is_1000(self):
        top = np.array([(-60, 5), (60, 5), (60, 20), (-60, 20)])
        bottom = np.array([(-60, -20), (60, -20), (60, -5), (-60, -5)])
        smap = SemanticMap([GeoPoint(15, 0)], [top, bottom])
        assert bsd_str(ground_truth_bsd(dloc(0, 0, 0.0), smap)) == "1000"

    def test_open_land_with_junctions_both_ways_is_1111(self):
        smap = SemanticMap([GeoPoint(20, 0), GeoPoint(-25, 0)], [])
        assert bsd_str(ground_truth_bsd(dloc(0, 0, 0.0), smap)) == "1111"

    def test_heading_reversal_matches_bit_swap(self):
        rng = np.random.default_rng(3)
        for _ in range(60):
            smap = random_building_map(rng, n_buildings=5)
            junctions = [GeoPoint(*rng.uniform(-40, 40, 2)) for _ in range(3)]
            smap = SemanticMap(junctions, [r for r in smap.buildings])
            heading = float(rng.uniform(0, 360))
            d_fwd = ground_truth_bsd_at(0.0, 0.0, heading, smap)
            d_bwd = ground_truth_bsd_at(0.0, 0.0, (heading + 180.0) % 360.0, smap)
            assert d_bwd == reverse_bsd(d_fwd)

    def test_angular_sep_wraps(self):
        assert angular_sep_deg(350.0, 10.0) == pytest.approx(20.0)
        assert angular_sep_deg(0.0, 180.0) == pytest.approx(180.0)
