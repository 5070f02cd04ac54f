"""Map construction: OSM-XML import, road graphs, resampling, synthetic cities.

The canonical interchange artifact is a :class:`MapBundle`: sample points at
fixed spacing along roads (with per-sample directed travel headings), the
road chains connecting them, building polygons, and junction ids.  Bundles
round-trip through a versioned JSON format; OSM-XML is one importer and the
synthetic city generator is another source.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from bsdloc.geometry import (
    DirectedLocation,
    GeoPoint,
    SemanticMap,
    bearing_deg,
    normalize_deg,
    project_to_local,
)

log = logging.getLogger(__name__)

MAP_JSON_VERSION = 1

# Drivable ways, motorway through residential; footpaths excluded.
DEFAULT_HIGHWAYS = frozenset(
    {
        "motorway", "motorway_link", "trunk", "trunk_link",
        "primary", "primary_link", "secondary", "secondary_link",
        "tertiary", "tertiary_link", "unclassified", "residential",
        "living_street",
    }
)


class MapFormatError(ValueError):
    """Raised for malformed or version-mismatched map inputs."""


class OsmParseError(MapFormatError):
    pass


# ---------------------------------------------------------------------------
# OSM-XML import
# ---------------------------------------------------------------------------


@dataclass
class OsmData:
    """Projected OSM extract: node points, road ways, building rings."""

    points: dict[int, GeoPoint]
    road_ways: list[list[int]]
    buildings: list[np.ndarray]
    origin: tuple[float, float]
    skipped_ways: int = 0


def parse_osm(source: str | Path | IO, highways: frozenset[str] = DEFAULT_HIGHWAYS) -> OsmData:
    """Parse an OSM-XML extract into projected roads and building polygons.

    Ways referencing a missing node are skipped and counted; malformed XML
    raises :class:`OsmParseError` naming the line.
    """
    try:
        tree = ET.parse(source)
    except ET.ParseError as exc:
        line, col = exc.position
        raise OsmParseError(f"malformed OSM XML at line {line}, column {col}: {exc}") from exc
    root = tree.getroot()

    raw_nodes: dict[str, tuple[float, float]] = {}
    for node in root.iter("node"):
        raw_nodes[node.attrib["id"]] = (float(node.attrib["lat"]), float(node.attrib["lon"]))
    if not raw_nodes:
        raise OsmParseError("no node elements found")

    lats = [ll[0] for ll in raw_nodes.values()]
    lons = [ll[1] for ll in raw_nodes.values()]
    origin = (sum(lats) / len(lats), sum(lons) / len(lons))

    ids = sorted(raw_nodes)
    remap = {osm_id: i for i, osm_id in enumerate(ids)}
    points = {remap[osm_id]: project_to_local(*raw_nodes[osm_id], origin) for osm_id in ids}

    road_ways: list[list[int]] = []
    buildings: list[np.ndarray] = []
    skipped = 0
    for way in root.iter("way"):
        tags = {t.attrib["k"]: t.attrib["v"] for t in way.iter("tag")}
        refs = [nd.attrib["ref"] for nd in way.iter("nd")]
        if any(r not in remap for r in refs):
            skipped += 1
            continue
        node_ids = [remap[r] for r in refs]
        # Drop consecutive duplicates so no zero-length edges survive.
        dedup = [node_ids[i] for i in range(len(node_ids)) if i == 0 or node_ids[i] != node_ids[i - 1]]
        if tags.get("highway") in highways and len(dedup) >= 2:
            road_ways.append(dedup)
        elif "building" in tags and len(dedup) >= 3:
            ring = np.array([points[i] for i in dedup], dtype=float)
            buildings.append(ring)
    if skipped:
        log.warning("skipped %d way(s) referencing missing nodes", skipped)

    referenced = {i for w in road_ways for i in w}
    points = {i: p for i, p in points.items() if i in referenced}
    return OsmData(points, road_ways, buildings, origin, skipped)


# ---------------------------------------------------------------------------
# Road graph
# ---------------------------------------------------------------------------


@dataclass
class RoadGraph:
    """Undirected road network; chains are split so shared nodes sit at chain ends."""

    points: dict[int, GeoPoint]
    chains: list[list[int]]
    degree: dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.degree:
            self.degree = _node_degrees(self.chains)

    @property
    def junction_ids(self) -> list[int]:
        return sorted(n for n, d in self.degree.items() if d >= 3)


def _node_degrees(chains: Iterable[Sequence[int]]) -> dict[int, int]:
    edges: set[tuple[int, int]] = set()
    for chain in chains:
        for a, b in zip(chain, chain[1:]):
            edges.add((a, b) if a < b else (b, a))
    degree: dict[int, int] = {}
    for a, b in edges:
        degree[a] = degree.get(a, 0) + 1
        degree[b] = degree.get(b, 0) + 1
    return degree


def build_road_graph(points: dict[int, GeoPoint], ways: Sequence[Sequence[int]]) -> RoadGraph:
    """Merge shared nodes, split ways at them, and compute degrees/junctions."""
    usage: dict[int, int] = {}
    for way in ways:
        for i, n in enumerate(way):
            # Endpoints always count as breakpoints; interiors need >1 use.
            usage[n] = usage.get(n, 0) + (2 if i in (0, len(way) - 1) else 1)
    chains: list[list[int]] = []
    for way in ways:
        cur = [way[0]]
        for n in way[1:]:
            cur.append(n)
            if usage.get(n, 0) >= 2 and len(cur) >= 2 and n != way[-1]:
                chains.append(cur)
                cur = [n]
        if len(cur) >= 2:
            chains.append(cur)
    used = {n for c in chains for n in c}
    return RoadGraph({n: points[n] for n in used}, chains)


# ---------------------------------------------------------------------------
# Resampling into directed locations
# ---------------------------------------------------------------------------


def _chain_geometry(points: dict[int, GeoPoint], chain: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    xy = np.array([points[n] for n in chain], dtype=float)
    seg = np.hypot(*(xy[1:] - xy[:-1]).T)
    return xy, seg


def _sample_arclengths(total: float, spacing: float) -> list[float]:
    n = int(math.floor(total / spacing + 1e-9))
    ticks = [i * spacing for i in range(n + 1)]
    if total - ticks[-1] > 1e-9:
        ticks.append(total)
    return ticks


@dataclass
class ResampleResult:
    sample_xy: np.ndarray                  # (S, 2); row index = sample id
    sample_chains: list[list[int]]         # chains over sample ids
    directed: list[DirectedLocation]
    node_to_sample: dict[int, int]         # graph node id -> sample id


def resample_locations(graph: RoadGraph, spacing: float = 10.0) -> ResampleResult:
    """Place samples along each chain at arc-length multiples of ``spacing``.

    Both chain endpoints are always emitted; endpoint samples are shared
    between chains meeting at the same graph node.  Each sample event yields
    two directed locations (segment tangent and tangent + 180).
    """
    if spacing <= 0:
        raise ValueError(f"spacing must be > 0, got {spacing}")
    node_to_sample: dict[int, int] = {}
    positions: list[GeoPoint] = []
    sample_chains: list[list[int]] = []
    headings: dict[int, set[float]] = {}

    def sample_for_node(node: int) -> int:
        sid = node_to_sample.get(node)
        if sid is None:
            sid = len(positions)
            node_to_sample[node] = sid
            positions.append(graph.points[node])
        return sid

    for chain in graph.chains:
        xy, seg = _chain_geometry(graph.points, chain)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        total = float(cum[-1])
        if total <= 0:
            continue
        ids: list[int] = []
        for s in _sample_arclengths(total, spacing):
            k = int(np.searchsorted(cum, s, side="right") - 1)
            k = min(k, len(seg) - 1)
            if s <= 1e-9:
                sid = sample_for_node(chain[0])
            elif total - s <= 1e-9:
                sid = sample_for_node(chain[-1])
            else:
                frac = (s - cum[k]) / seg[k]
                p = GeoPoint(
                    float(xy[k, 0] + frac * (xy[k + 1, 0] - xy[k, 0])),
                    float(xy[k, 1] + frac * (xy[k + 1, 1] - xy[k, 1])),
                )
                sid = len(positions)
                positions.append(p)
            tangent = bearing_deg(GeoPoint(*xy[k]), GeoPoint(*xy[k + 1]))
            headings.setdefault(sid, set()).update((tangent, normalize_deg(tangent + 180.0)))
            if not ids or ids[-1] != sid:
                ids.append(sid)
        if len(ids) >= 2:
            sample_chains.append(ids)

    directed: list[DirectedLocation] = []
    uid = 0
    for sid in range(len(positions)):
        for h in sorted(headings.get(sid, ())):
            directed.append(DirectedLocation(uid, sid, positions[sid], h))
            uid += 1
    return ResampleResult(
        np.array(positions, dtype=float) if positions else np.empty((0, 2)),
        sample_chains,
        directed,
        node_to_sample,
    )


# ---------------------------------------------------------------------------
# Map bundle: the canonical artifact
# ---------------------------------------------------------------------------


@dataclass
class MapBundle:
    """Sampled map: everything route construction and BSD generation need."""

    points: np.ndarray                     # (S, 2) sample positions
    chains: list[list[int]]                # sample-id polylines
    buildings: list[np.ndarray]
    directed: list[DirectedLocation]
    junction_ids: list[int]
    origin: tuple[float, float] | None = None
    meta: dict = field(default_factory=dict)

    _smap: SemanticMap | None = None
    _hash: str | None = None

    @property
    def sample_count(self) -> int:
        return len(self.points)

    def position(self, sample_id: int) -> GeoPoint:
        return GeoPoint(float(self.points[sample_id, 0]), float(self.points[sample_id, 1]))

    def semantic_map(self) -> SemanticMap:
        if self._smap is None:
            junctions = [self.position(i) for i in self.junction_ids]
            roads = [self.points[c] for c in self.chains]
            self._smap = SemanticMap(junctions, self.buildings, roads)
        return self._smap

    def directed_by_sample(self) -> dict[int, list[DirectedLocation]]:
        out: dict[int, list[DirectedLocation]] = {}
        for dl in self.directed:
            out.setdefault(dl.sample_id, []).append(dl)
        return out

    def to_json_dict(self) -> dict:
        return {
            "version": MAP_JSON_VERSION,
            "origin": None if self.origin is None else {"lat": self.origin[0], "lon": self.origin[1]},
            "points": {str(i): [float(x), float(y)] for i, (x, y) in enumerate(self.points)},
            "roads": [list(map(int, c)) for c in self.chains],
            "buildings": [[[float(x), float(y)] for x, y in ring] for ring in self.buildings],
            "locations": [
                {
                    "id": dl.uid,
                    "sample": dl.sample_id,
                    "x": float(dl.position.x),
                    "y": float(dl.position.y),
                    "heading": float(dl.heading),
                }
                for dl in self.directed
            ],
            "junctions": list(map(int, self.junction_ids)),
            "meta": self.meta,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "MapBundle":
        version = data.get("version")
        if version != MAP_JSON_VERSION:
            raise MapFormatError(
                f"unsupported map schema version: expected {MAP_JSON_VERSION}, found {version!r}"
            )
        origin = None
        if data.get("origin") is not None:
            origin = (float(data["origin"]["lat"]), float(data["origin"]["lon"]))
        n = len(data["points"])
        points = np.empty((n, 2), dtype=float)
        for key, (x, y) in data["points"].items():
            points[int(key)] = (x, y)
        directed = [
            DirectedLocation(
                int(loc["id"]), int(loc["sample"]), GeoPoint(float(loc["x"]), float(loc["y"])),
                float(loc["heading"]),
            )
            for loc in data["locations"]
        ]
        return cls(
            points=points,
            chains=[list(map(int, c)) for c in data["roads"]],
            buildings=[np.array(ring, dtype=float) for ring in data["buildings"]],
            directed=directed,
            junction_ids=list(map(int, data.get("junctions", []))),
            origin=origin,
            meta=data.get("meta", {}),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), separators=(",", ":")))

    @classmethod
    def load(cls, path: str | Path) -> "MapBundle":
        return cls.from_json_dict(json.loads(Path(path).read_text()))

    def map_hash(self) -> str:
        """Stable content hash used to tie databases and reports to their map."""
        if self._hash is None:
            payload = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
            self._hash = hashlib.sha256(payload.encode()).hexdigest()
        return self._hash


def save_map_json(bundle: MapBundle, path: str | Path) -> None:
    bundle.save(path)


def load_map_json(path: str | Path) -> MapBundle:
    return MapBundle.load(path)


def build_map_bundle(
    graph: RoadGraph,
    buildings: Sequence[np.ndarray] = (),
    origin: tuple[float, float] | None = None,
    spacing: float = 10.0,
    meta: dict | None = None,
) -> MapBundle:
    """Resample a road graph and assemble the canonical map artifact."""
    res = resample_locations(graph, spacing)
    junction_ids = sorted(
        res.node_to_sample[n] for n in graph.junction_ids if n in res.node_to_sample
    )
    meta = dict(meta or {})
    meta.setdefault("spacing", spacing)
    return MapBundle(
        points=res.sample_xy,
        chains=res.sample_chains,
        buildings=list(buildings),
        directed=res.directed,
        junction_ids=junction_ids,
        origin=origin,
        meta=meta,
    )


def ingest_osm(source: str | Path | IO, spacing: float = 10.0,
               highways: frozenset[str] = DEFAULT_HIGHWAYS) -> MapBundle:
    """Full OSM pipeline: parse, graph, resample."""
    osm = parse_osm(source, highways)
    graph = build_road_graph(osm.points, osm.road_ways)
    return build_map_bundle(
        graph, osm.buildings, osm.origin, spacing,
        meta={"source": "osm", "skipped_ways": osm.skipped_ways},
    )


# ---------------------------------------------------------------------------
# Synthetic cities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticCityParams:
    """Grid city: ``rows`` horizontal and ``cols`` vertical streets.

    ``coverage`` is the probability a block face carries buildings at all;
    ``gap_frequency`` the probability of a gap after each building run.
    Three irregularity knobs (all default 0 for a perfectly regular grid):
    ``block_jitter`` randomizes per-row/column block sizes (fraction of
    ``block_size``); ``node_jitter`` displaces each intersection
    independently (fraction of ``block_size``), staggering junctions so
    parallel streets stop sharing crossing phases; ``edge_removal`` knocks
    out street segments.
    """

    rows: int = 5
    cols: int = 5
    block_size: float = 100.0
    coverage: float = 1.0
    gap_frequency: float = 0.0
    seed: int = 0
    block_jitter: float = 0.0
    node_jitter: float = 0.0
    edge_removal: float = 0.0
    setback: float = 6.0
    building_depth: float = 14.0
    corner_margin: float = 8.0
    # "grid" keeps rectilinear streets; "voronoi" grows an organic network
    # with arbitrary street angles; "slices" recursively subdivides the
    # extent into irregular rectangular blocks (staggered T-junctions,
    # right-angle turns) like a land-parcel city.
    layout: str = "grid"

    def __post_init__(self) -> None:
        if self.rows < 2 or self.cols < 2 or self.block_size <= 0:
            raise ValueError("rows/cols must be >= 2 and block_size > 0")
        if self.layout not in ("grid", "voronoi", "slices"):
            raise ValueError(f"layout must be 'grid', 'voronoi' or 'slices', got {self.layout!r}")
        for name in ("coverage", "gap_frequency", "edge_removal"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


def _grid_axis(count: int, block: float, jitter: float, rng: random.Random) -> list[float]:
    ticks = [0.0]
    for _ in range(count - 1):
        step = block * (1.0 + jitter * rng.uniform(-1.0, 1.0))
        ticks.append(ticks[-1] + step)
    return ticks


def _largest_component(n_nodes: int, edges: list[tuple[int, int]]) -> set[int]:
    adj: dict[int, list[int]] = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    seen: set[int] = set()
    best: set[int] = set()
    for start in adj:
        if start in seen:
            continue
        comp = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in comp:
                    comp.add(v)
                    stack.append(v)
        seen |= comp
        if len(comp) > len(best):
            best = comp
    return best


def _grid_network(params: SyntheticCityParams, rng: random.Random) -> tuple[dict[int, GeoPoint], list[tuple[int, int]]]:
    ys = _grid_axis(params.rows, params.block_size, params.block_jitter, rng)
    xs = _grid_axis(params.cols, params.block_size, params.block_jitter, rng)

    def node_id(r: int, c: int) -> int:
        return r * params.cols + c

    half_jog = params.node_jitter * params.block_size / 2.0
    points = {}
    for r in range(params.rows):
        for c in range(params.cols):
            jx = rng.uniform(-half_jog, half_jog) if half_jog else 0.0
            jy = rng.uniform(-half_jog, half_jog) if half_jog else 0.0
            points[node_id(r, c)] = GeoPoint(xs[c] + jx, ys[r] + jy)
    edges: list[tuple[int, int]] = []
    for r in range(params.rows):
        for c in range(params.cols):
            if c + 1 < params.cols:
                edges.append((node_id(r, c), node_id(r, c + 1)))
            if r + 1 < params.rows:
                edges.append((node_id(r, c), node_id(r + 1, c)))
    return points, edges


_MIN_STREET_SEGMENT_M = 18.0


def _voronoi_network(params: SyntheticCityParams, rng: random.Random) -> tuple[dict[int, GeoPoint], list[tuple[int, int]]]:
    """Street network from the Voronoi diagram of jittered grid seeds.

    Cell boundaries become streets and cell corners become (mostly
    three-way) junctions, giving naturally irregular block shapes.  Sliver
    segments are dropped and everything is clipped to the seeded extent.
    """
    from scipy.spatial import Voronoi

    s = params.block_size
    seeds = []
    for r in range(params.rows):
        for c in range(params.cols):
            seeds.append(
                (c * s + rng.uniform(-0.45, 0.45) * s, r * s + rng.uniform(-0.45, 0.45) * s)
            )
    vor = Voronoi(np.array(seeds))
    xmax, ymax = (params.cols - 1) * s, (params.rows - 1) * s

    def inside(p: np.ndarray) -> bool:
        return -0.5 * s <= p[0] <= xmax + 0.5 * s and -0.5 * s <= p[1] <= ymax + 0.5 * s

    remap: dict[int, int] = {}
    points: dict[int, GeoPoint] = {}
    edges: set[tuple[int, int]] = set()
    for v1, v2 in vor.ridge_vertices:
        if v1 < 0 or v2 < 0:
            continue
        p1, p2 = vor.vertices[v1], vor.vertices[v2]
        if not (inside(p1) and inside(p2)):
            continue
        if math.hypot(p1[0] - p2[0], p1[1] - p2[1]) < _MIN_STREET_SEGMENT_M:
            continue
        for v in (v1, v2):
            if v not in remap:
                remap[v] = len(remap)
                points[remap[v]] = GeoPoint(float(vor.vertices[v][0]), float(vor.vertices[v][1]))
        a, b = remap[v1], remap[v2]
        edges.add((a, b) if a < b else (b, a))
    return points, sorted(edges)


def _slice_network(params: SyntheticCityParams, rng: random.Random) -> tuple[dict[int, GeoPoint], list[tuple[int, int]]]:
    """Street network from recursive rectangle slicing.

    Each split line spans its parent block and ends on older streets, so
    junctions are mostly staggered three-way crossings at right angles and
    block sizes vary around ``block_size``.  ``node_jitter`` then displaces
    the junction points, bending streets slightly at every crossing.
    """
    width = (params.cols - 1) * params.block_size
    height = (params.rows - 1) * params.block_size
    segments: list[tuple[float, float, float, float]] = [
        (0.0, 0.0, width, 0.0),
        (0.0, height, width, height),
        (0.0, 0.0, 0.0, height),
        (width, 0.0, width, height),
    ]
    stop = params.block_size * 1.6
    stack = [(0.0, 0.0, width, height)]
    while stack:
        x0, y0, x1, y1 = stack.pop()
        w, h = x1 - x0, y1 - y0
        if max(w, h) <= stop:
            continue
        if w >= h:
            x = x0 + w * rng.uniform(0.35, 0.65)
            segments.append((x, y0, x, y1))
            stack.append((x0, y0, x, y1))
            stack.append((x, y0, x1, y1))
        else:
            y = y0 + h * rng.uniform(0.35, 0.65)
            segments.append((x0, y, x1, y))
            stack.append((x0, y0, x1, y))
            stack.append((x0, y, x1, y1))

    def key(x: float, y: float) -> tuple[float, float]:
        return (round(x, 6), round(y, 6))

    node_of: dict[tuple[float, float], int] = {}

    def node(x: float, y: float) -> int:
        k = key(x, y)
        if k not in node_of:
            node_of[k] = len(node_of)
        return node_of[k]

    # Subdivide each segment where other segments' endpoints touch it.
    touches: list[list[tuple[float, float]]] = [[(s[0], s[1]), (s[2], s[3])] for s in segments]
    for i, (ax0, ay0, ax1, ay1) in enumerate(segments):
        vertical = abs(ax0 - ax1) < 1e-9
        for j, seg in enumerate(segments):
            if i == j:
                continue
            for px, py in ((seg[0], seg[1]), (seg[2], seg[3])):
                if vertical:
                    if abs(px - ax0) < 1e-6 and min(ay0, ay1) - 1e-6 < py < max(ay0, ay1) + 1e-6:
                        touches[i].append((px, py))
                else:
                    if abs(py - ay0) < 1e-6 and min(ax0, ax1) - 1e-6 < px < max(ax0, ax1) + 1e-6:
                        touches[i].append((px, py))
    points: dict[int, GeoPoint] = {}
    edges: set[tuple[int, int]] = set()
    half_jog = params.node_jitter * params.block_size / 2.0
    jitter: dict[int, tuple[float, float]] = {}
    for i, pts in enumerate(touches):
        uniq = sorted(set(key(x, y) for x, y in pts))
        ids = []
        for x, y in uniq:
            n = node(x, y)
            if n not in jitter:
                jitter[n] = (
                    (rng.uniform(-half_jog, half_jog), rng.uniform(-half_jog, half_jog))
                    if half_jog
                    else (0.0, 0.0)
                )
                points[n] = GeoPoint(x + jitter[n][0], y + jitter[n][1])
            ids.append(n)
        for a, b in zip(ids, ids[1:]):
            if a != b:
                edges.add((a, b) if a < b else (b, a))
    return points, sorted(edges)


def generate_synthetic_city(params: SyntheticCityParams) -> tuple[RoadGraph, list[np.ndarray]]:
    """Deterministic synthetic city with building strips along every street.

    Returns the road graph plus building rings; feed both through
    :func:`build_map_bundle` to get the sampled artifact.
    """
    rng = random.Random(params.seed)
    if params.layout == "voronoi":
        points, edges = _voronoi_network(params, rng)
    elif params.layout == "slices":
        points, edges = _slice_network(params, rng)
    else:
        points, edges = _grid_network(params, rng)
    if params.edge_removal > 0:
        edges = [e for e in edges if rng.random() >= params.edge_removal]
    comp = _largest_component(len(points), list(edges))
    edges = [e for e in edges if e[0] in comp and e[1] in comp]

    buildings: list[np.ndarray] = []
    for a, b in edges:
        pa, pb = points[a], points[b]
        ex, ey = pb.x - pa.x, pb.y - pa.y
        length = math.hypot(ex, ey)
        ux, uy = ex / length, ey / length
        nx, ny = -uy, ux
        for side in (+1.0, -1.0):
            if rng.random() >= params.coverage:
                continue
            t = params.corner_margin
            end = length - params.corner_margin
            while t < end - 4.0:
                run = rng.uniform(14.0, 42.0)
                b_end = min(t + run, end)
                # Per-building frontage and depth variation around the
                # configured values keeps facades from looking alike.
                off_near = side * (params.setback * rng.uniform(0.7, 1.5))
                off_far = off_near + side * (params.building_depth * rng.uniform(0.7, 1.3))
                ring = [
                    (pa.x + ux * t + nx * off_near, pa.y + uy * t + ny * off_near),
                    (pa.x + ux * b_end + nx * off_near, pa.y + uy * b_end + ny * off_near),
                    (pa.x + ux * b_end + nx * off_far, pa.y + uy * b_end + ny * off_far),
                    (pa.x + ux * t + nx * off_far, pa.y + uy * t + ny * off_far),
                ]
                buildings.append(np.array(ring, dtype=float))
                t = b_end
                if rng.random() < params.gap_frequency:
                    t += rng.uniform(8.0, 24.0)

    chains = [[a, b] for a, b in edges]
    used = {n for c in chains for n in c}
    graph = RoadGraph({n: p for n, p in points.items() if n in used}, chains)
    return graph, buildings


def synthesize_bundle(params: SyntheticCityParams, spacing: float = 10.0) -> MapBundle:
    graph, buildings = generate_synthetic_city(params)
    return build_map_bundle(
        graph, buildings, origin=None, spacing=spacing,
        meta={"source": "synthetic", "params": params.__dict__.copy()},
    )
