import itertools

import numpy as np
import pytest

from bsdloc.geometry import bsd_from_str, reverse_bsd
from bsdloc.mapio import SyntheticCityParams, synthesize_bundle
from bsdloc.routes import (
    Adjacency,
    BsdTable,
    DatabaseFormatError,
    MissingBsdError,
    RouteCodec,
    RouteDatabase,
    RouteLimitExceeded,
    RouteSlice,
    SliceBuilder,
    build_adjacency,
    build_database_files,
    descriptor_payload_bytes,
    enumerate_routes,
    load_slice,
    record_bytes,
    reverse_descriptor,
    route_descriptor,
    save_slice,
    turn_bit,
    turn_pattern,
    turn_payload_bytes,
)


def dfs_count_oracle(neighbors, length):
    """Independent recursive enumeration of simple directed paths."""

    def extend(path):
        if len(path) == length:
            return 1
        total = 0
        for v in neighbors.get(path[-1], ()):
            if v not in path:
                total += extend(path + [v])
        return total

    return sum(extend([start]) for start in neighbors)


def random_adjacency(rng, n, p):
    neighbors = {i: set() for i in range(n)}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                neighbors[i].add(j)
                neighbors[j].add(i)
    return {i: tuple(sorted(v)) for i, v in neighbors.items()}


class TestAdjacency:
    def test_straight_chain_is_a_path(self):
        adj = build_adjacency([[1, 2, 3, 4, 5]])
        assert adj.neighbors[1] == (2,)
        assert adj.neighbors[3] == (2, 4)
        assert (2, 3) in adj and (3, 2) in adj

    def test_crossroads_connects_all_arms(self):
        adj = build_adjacency([[1, 0], [2, 0], [3, 0], [4, 0]])
        assert adj.neighbors[0] == (1, 2, 3, 4)

    def test_parallel_roads_not_connected(self):
        adj = build_adjacency([[1, 2], [3, 4]])
        assert (1, 3) not in adj and (2, 4) not in adj


class TestEnumerateRoutes:
    def test_path_graph_both_directions(self):
        adj = build_adjacency([[0, 1, 2]])
        routes = list(enumerate_routes(adj, 3))
        assert routes == [(0, 1, 2), (2, 1, 0)]

    def test_matches_dfs_oracle_on_grid(self):
        # 3x3 grid graph.
        chains = []
        for r in range(3):
            chains.append([3 * r + c for c in range(3)])
        for c in range(3):
            chains.append([3 * r + c for r in range(3)])
        adj = build_adjacency(chains)
        for length in range(1, 6):
            got = sum(1 for _ in enumerate_routes(adj, length))
            assert got == dfs_count_oracle(adj.neighbors, length)

    def test_matches_dfs_oracle_on_random_graphs(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            n = int(rng.integers(4, 16))
            neighbors = random_adjacency(rng, n, 0.25)
            adj = Adjacency(neighbors)
            for length in (2, 4, 6):
                got = sum(1 for _ in enumerate_routes(adj, length))
                assert got == dfs_count_oracle(neighbors, length)

    def test_routes_are_simple_and_adjacent(self):
        adj = build_adjacency([[0, 1, 2, 3], [4, 1], [5, 2]])
        for route in enumerate_routes(adj, 4):
            assert len(set(route)) == len(route)
            for a, b in zip(route, route[1:]):
                assert (a, b) in adj

    def test_deterministic_lexicographic_order(self):
        adj = build_adjacency([[2, 0, 1], [3, 0]])
        routes = list(enumerate_routes(adj, 2))
        assert routes == sorted(routes)

    def test_limit_raises_not_silent(self):
        adj = build_adjacency([[0, 1, 2, 3, 4]])
        seen = []
        with pytest.raises(RouteLimitExceeded) as exc:
            for r in enumerate_routes(adj, 2, limit=3):
                seen.append(r)
        assert len(seen) == 3
        assert exc.value.limit == 3


class TestTurnBit:
    def test_right_angle_is_a_turn(self):
        assert turn_bit(0.0, 90.0) == 1

    def test_wraparound_small_angle(self):
        assert turn_bit(350.0, 10.0) == 0

    def test_threshold_inclusive(self):
        assert turn_bit(0.0, 60.0) == 1
        assert turn_bit(0.0, 59.999) == 0

    def test_symmetric(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            a, b = rng.uniform(0, 360, 2)
            assert turn_bit(a, b) == turn_bit(b, a)


class TestLiteralDescriptorOps:
    def test_single_location_descriptor(self):
        assert route_descriptor((7,), {7: bsd_from_str("1010")}) == bsd_from_str("1010")

    def test_missing_bsd_names_location(self):
        with pytest.raises(MissingBsdError, match="9"):
            route_descriptor((7, 9), {7: 0})

    def test_concatenation_order(self):
        table = {1: 0b0001, 2: 0b0010, 3: 0b0100}
        desc = route_descriptor((1, 2, 3), table)
        assert (desc >> 0) & 0xF == 0b0001
        assert (desc >> 4) & 0xF == 0b0010
        assert (desc >> 8) & 0xF == 0b0100

    def test_turn_pattern_from_headings(self):
        headings = {1: 0.0, 2: 0.0, 3: 90.0, 4: 90.0}
        assert turn_pattern((1, 2, 3, 4), headings) == 0b010

    def test_straight_route_all_zeros(self):
        headings = {i: 45.0 for i in range(5)}
        assert turn_pattern(tuple(range(5)), headings) == 0


@pytest.fixture(scope="module")
def city_db(small_city):
    table = BsdTable(small_city)
    return RouteDatabase(small_city, table)


class TestRouteCodec:
    def test_descriptor_bits_per_position(self, city_db):
        sl = city_db.slice(5)
        assert sl.descriptor_bits == 20
        assert sl.turn_bits == 4
        for desc in sl.descriptors[:50]:
            assert desc.bit_length() <= 20

    def test_forty_locations_give_160_bits(self):
        assert descriptor_payload_bytes(40) * 8 == 160

    def test_reversed_route_identity(self, city_db):
        codec = city_db.codec
        sl = city_db.slice(7)
        rng = np.random.default_rng(8)
        for idx in rng.choice(len(sl.routes), size=40, replace=False):
            route = sl.routes[idx]
            fwd = codec.descriptor(route)
            bwd = codec.descriptor(tuple(reversed(route)))
            assert bwd == reverse_descriptor(fwd, len(route))

    def test_straight_route_turns_zero(self, city_db):
        sl = city_db.slice(6)
        codec = city_db.codec
        pts = city_db.bundle.points
        for route in sl.routes[:200]:
            xy = pts[list(route)]
            if np.allclose(xy[:, 1], xy[0, 1]) or np.allclose(xy[:, 0], xy[0, 0]):
                assert codec.turn_pattern(route) == 0

    def test_single_corner_sets_single_bit(self, city_db):
        codec = city_db.codec
        sl = city_db.slice(7)
        pts = city_db.bundle.points
        found = 0
        for route, turns in zip(sl.routes, sl.turns):
            if turns and turns.bit_count() == 1:
                k = turns.bit_length() - 1
                xy = pts[list(route)]
                # heading change happens while passing position k
                before = np.degrees(np.arctan2(*(xy[k] - xy[k - 1])[::-1]))
                after = np.degrees(np.arctan2(*(xy[k + 1] - xy[k])[::-1]))
                sep = abs(before - after) % 360
                assert min(sep, 360 - sep) >= 60.0
                found += 1
                if found > 20:
                    break
        assert found > 0

    def test_slice_builder_matches_enumeration_and_full_recompute(self, city_db):
        bundle = city_db.bundle
        codec = city_db.codec
        adj = build_adjacency(bundle.chains)
        for L in (2, 4, 6):
            sl = city_db.slice(L)
            assert sorted(sl.routes) == sorted(enumerate_routes(adj, L))
            rng = np.random.default_rng(L)
            for idx in rng.choice(len(sl.routes), size=min(30, len(sl.routes)), replace=False):
                route = sl.routes[idx]
                assert sl.descriptors[idx] == codec.descriptor(route)
                assert sl.turns[idx] == codec.turn_pattern(route)

    def test_length_one_slice_covers_directed_locations(self, city_db):
        sl = city_db.slice(1)
        assert len(sl) == len(city_db.bundle.directed)
        assert all(len(r) == 1 for r in sl.routes)
        assert all(t == 0 for t in sl.turns)


class TestPersistence:
    def test_round_trip_exact(self, city_db, tmp_path):
        sl = city_db.slice(6)
        path = tmp_path / "len6.bin"
        save_slice(sl, path, city_db.bundle.map_hash())
        loaded = load_slice(path, city_db.bundle.map_hash())
        assert loaded.length == sl.length
        assert loaded.routes == sl.routes
        assert loaded.descriptors == sl.descriptors
        assert loaded.turns == sl.turns

    def test_wrong_map_hash_rejected(self, city_db, tmp_path):
        sl = city_db.slice(2)
        path = tmp_path / "len2.bin"
        save_slice(sl, path, city_db.bundle.map_hash())
        with pytest.raises(DatabaseFormatError, match="different map"):
            load_slice(path, "ab" * 32)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + bytes(40))
        with pytest.raises(DatabaseFormatError, match="magic"):
            load_slice(path)

    def test_build_database_files_report(self, city_db, tmp_path):
        report = build_database_files(city_db, tmp_path / "db", [2, 3])
        assert report["lengths"] == [2, 3]
        assert report["counts"]["2" if False else 2] == len(city_db.slice(2))
        for L in (2, 3):
            assert (tmp_path / "db" / f"routes_len{L:03d}.bin").exists()

    def test_empty_map_database_valid(self, tmp_path):
        empty = RouteSlice(3, [], [], [])
        path = tmp_path / "empty.bin"
        save_slice(empty, path, "00" * 32)
        loaded = load_slice(path)
        assert loaded.routes == []


class TestAccounting:
    def test_payload_for_40_locations_is_20_bytes(self):
        assert descriptor_payload_bytes(40) == 20

    def test_extrapolated_payload_is_800_mb(self):
        assert 40_000_000 * descriptor_payload_bytes(40) == 800_000_000

    def test_record_layout_arithmetic(self):
        assert record_bytes(40) == 4 * 40 + 20 + turn_payload_bytes(40)
        assert turn_payload_bytes(40) == 5

    def test_measured_file_size_matches_prediction(self, city_db, tmp_path):
        sl = city_db.slice(8)
        path = tmp_path / "len8.bin"
        written = save_slice(sl, path, city_db.bundle.map_hash())
        assert path.stat().st_size == written
        predicted = 36 + len(sl) * record_bytes(8)
        assert written == predicted
