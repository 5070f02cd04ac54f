"""Planar map geometry and ground-truth binary semantic descriptors.

A location on a road is described by 4 bits: junction in the front sector,
junction in the back sector, building gap in the left sector, building gap in
the right sector.  Sectors are quadrants of a viewing circle (default 30 m
radius) oriented by the travel heading.  Junction bits test for junction
points inside the sector; gap bits cast rays across the sector and look for a
contiguous angular run not blocked by any building polygon.

Angles are degrees, measured counterclockwise from the +x axis (east), and
normalized to [0, 360).  ``left`` is ``heading + 90``, ``right`` is
``heading + 270``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

log = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0

# Sector axis offsets relative to the travel heading, degrees CCW.
VIEW_OFFSETS = {"front": 0.0, "back": 180.0, "left": 90.0, "right": 270.0}
VIEWS = ("front", "back", "left", "right")

# A junction node closer than this to the location itself is "underfoot" and
# belongs to no viewing direction.
SELF_JUNCTION_RADIUS_M = 1.0

_DEGENERATE_RING_AREA_M2 = 1e-6


class GeoPoint(NamedTuple):
    """Local metric coordinates: meters east / north of the map origin."""

    x: float
    y: float


def normalize_deg(angle: float) -> float:
    return angle % 360.0


def angular_sep_deg(a: float, b: float) -> float:
    """Smallest absolute angle between two directions, in [0, 180]."""
    d = abs(a - b) % 360.0
    return 360.0 - d if d > 180.0 else d


def bearing_deg(origin: GeoPoint, target: GeoPoint) -> float:
    """Direction from origin to target, degrees CCW from +x, in [0, 360)."""
    return math.degrees(math.atan2(target[1] - origin[1], target[0] - origin[0])) % 360.0


def project_to_local(lat: float, lon: float, origin: tuple[float, float]) -> GeoPoint:
    """Equirectangular projection about ``origin = (lat, lon)``.

    Millimeter-accurate for extents of a few kilometers; invertible via
    :func:`local_to_latlon`.
    """
    olat, olon = origin
    if not all(math.isfinite(v) for v in (lat, lon, olat, olon)):
        raise ValueError("non-finite coordinate")
    if abs(lat) > 90.0 or abs(olat) > 90.0:
        raise ValueError(f"latitude out of range: {lat!r} / {olat!r}")
    x = EARTH_RADIUS_M * math.cos(math.radians(olat)) * math.radians(lon - olon)
    y = EARTH_RADIUS_M * math.radians(lat - olat)
    return GeoPoint(x, y)


def local_to_latlon(point: GeoPoint, origin: tuple[float, float]) -> tuple[float, float]:
    """Inverse of :func:`project_to_local` within the map extent."""
    olat, olon = origin
    lat = olat + math.degrees(point[1] / EARTH_RADIUS_M)
    lon = olon + math.degrees(point[0] / (EARTH_RADIUS_M * math.cos(math.radians(olat))))
    return lat, lon


@dataclass(frozen=True)
class SectorSpec:
    """Viewing sector: radius in meters, half opening angle in degrees."""

    radius: float = 30.0
    half_angle: float = 45.0

    def __post_init__(self) -> None:
        if not (self.radius > 0):
            raise ValueError(f"radius must be > 0, got {self.radius}")
        if not (0 < self.half_angle <= 90):
            raise ValueError(f"half_angle must be in (0, 90], got {self.half_angle}")


# ---------------------------------------------------------------------------
# 4-bit descriptors
# ---------------------------------------------------------------------------

# A Bsd is an int in [0, 16).  Bit layout, most significant first:
#   bit 3 junction-front, bit 2 junction-back, bit 1 gap-left, bit 0 gap-right
# so that bsd_str() reads (front, back, left, right) left to right.
Bsd = int

BSD_BIT_NAMES = ("junction_front", "junction_back", "gap_left", "gap_right")
ALL_BSDS = tuple(range(16))


def pack_bsd(junction_front: int, junction_back: int, gap_left: int, gap_right: int) -> Bsd:
    for b in (junction_front, junction_back, gap_left, gap_right):
        if b not in (0, 1):
            raise ValueError(f"descriptor bits must be 0 or 1, got {b!r}")
    return junction_front << 3 | junction_back << 2 | gap_left << 1 | gap_right


def unpack_bsd(d: Bsd) -> tuple[int, int, int, int]:
    if not 0 <= d < 16:
        raise ValueError(f"descriptor out of range: {d!r}")
    return (d >> 3 & 1, d >> 2 & 1, d >> 1 & 1, d & 1)


def bsd_str(d: Bsd) -> str:
    """Render as e.g. '1010' in (front, back, left, right) order."""
    if not 0 <= d < 16:
        raise ValueError(f"descriptor out of range: {d!r}")
    return format(d, "04b")


def bsd_from_str(s: str) -> Bsd:
    if len(s) != 4 or set(s) - {"0", "1"}:
        raise ValueError(f"expected 4 chars of 0/1, got {s!r}")
    return int(s, 2)


def reverse_bsd(d: Bsd) -> Bsd:
    """Descriptor seen when traveling the opposite way: swap front/back and left/right."""
    jf, jb, gl, gr = unpack_bsd(d)
    return pack_bsd(jb, jf, gr, gl)


@dataclass(frozen=True)
class DirectedLocation:
    """A road sample point paired with a travel heading.

    ``uid`` is unique per (sample, heading); ``sample_id`` identifies the
    underlying undirected sample point shared by both travel senses.
    """

    uid: int
    sample_id: int
    position: GeoPoint
    heading: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "heading", normalize_deg(self.heading))


# ---------------------------------------------------------------------------
# Semantic map and spatial indexing
# ---------------------------------------------------------------------------


class EdgeGrid:
    """Uniform-grid bucket index over line segments for radius queries."""

    def __init__(self, edges: np.ndarray, cell: float = 30.0):
        self.edges = edges
        self.cell = cell
        self._cells: dict[tuple[int, int], list[int]] = {}
        for i, (x1, y1, x2, y2) in enumerate(edges):
            cx0, cx1 = sorted((int(x1 // cell), int(x2 // cell)))
            cy0, cy1 = sorted((int(y1 // cell), int(y2 // cell)))
            for cx in range(cx0, cx1 + 1):
                for cy in range(cy0, cy1 + 1):
                    self._cells.setdefault((cx, cy), []).append(i)

    def query(self, x: float, y: float, radius: float) -> np.ndarray:
        """Indices of edges whose grid cells overlap the query disk's bbox."""
        cell = self.cell
        cx0 = int((x - radius) // cell)
        cx1 = int((x + radius) // cell)
        cy0 = int((y - radius) // cell)
        cy1 = int((y + radius) // cell)
        found: set[int] = set()
        for cx in range(cx0, cx1 + 1):
            for cy in range(cy0, cy1 + 1):
                hit = self._cells.get((cx, cy))
                if hit:
                    found.update(hit)
        return np.fromiter(found, dtype=np.int64) if found else np.empty(0, dtype=np.int64)


class SemanticMap:
    """Immutable bundle of junction points, building polygons and road polylines.

    Degenerate building rings (fewer than 3 distinct vertices or ~zero area)
    are dropped at construction and counted in ``dropped_buildings``.
    """

    def __init__(
        self,
        junctions: Iterable[GeoPoint],
        buildings: Iterable[Sequence[Sequence[float]]],
        roads: Iterable[Sequence[Sequence[float]]] = (),
    ):
        self.junctions = tuple(GeoPoint(float(p[0]), float(p[1])) for p in junctions)
        kept: list[np.ndarray] = []
        dropped = 0
        for ring in buildings:
            arr = np.asarray(ring, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2:
                raise ValueError(f"building ring must be (k, 2), got shape {arr.shape}")
            if len(arr) > 1 and np.allclose(arr[0], arr[-1]):
                arr = arr[:-1]
            if len(arr) < 3 or abs(_ring_area(arr)) < _DEGENERATE_RING_AREA_M2:
                dropped += 1
                continue
            kept.append(arr)
        if dropped:
            log.warning("dropped %d degenerate building ring(s)", dropped)
        self.buildings = tuple(kept)
        self.dropped_buildings = dropped
        self.roads = tuple(np.asarray(r, dtype=float) for r in roads)
        self._junction_xy: np.ndarray | None = None
        self._edges: np.ndarray | None = None
        self._edge_ring: np.ndarray | None = None
        self._grid: EdgeGrid | None = None

    @property
    def junction_xy(self) -> np.ndarray:
        if self._junction_xy is None:
            self._junction_xy = (
                np.array(self.junctions, dtype=float) if self.junctions else np.empty((0, 2))
            )
        return self._junction_xy

    @property
    def building_edges(self) -> np.ndarray:
        """All building wall segments as rows (x1, y1, x2, y2)."""
        if self._edges is None:
            segs = []
            ring_ids = []
            for ri, ring in enumerate(self.buildings):
                nxt = np.roll(ring, -1, axis=0)
                segs.append(np.hstack([ring, nxt]))
                ring_ids.append(np.full(len(ring), ri))
            if segs:
                self._edges = np.vstack(segs)
                self._edge_ring = np.concatenate(ring_ids)
            else:
                self._edges = np.empty((0, 4))
                self._edge_ring = np.empty(0, dtype=int)
        return self._edges

    @property
    def edge_ring(self) -> np.ndarray:
        self.building_edges
        assert self._edge_ring is not None
        return self._edge_ring

    @property
    def edge_grid(self) -> EdgeGrid:
        if self._grid is None:
            self._grid = EdgeGrid(self.building_edges)
        return self._grid


def _ring_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def point_in_ring(x: float, y: float, ring: np.ndarray) -> bool:
    """Even-odd crossing test."""
    inside = False
    n = len(ring)
    for i in range(n):
        x1, y1 = ring[i]
        x2, y2 = ring[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            t = (y - y1) / (y2 - y1)
            if x < x1 + t * (x2 - x1):
                inside = not inside
    return inside


# ---------------------------------------------------------------------------
# Sector tests
# ---------------------------------------------------------------------------


def sector_axis(heading: float, view: str) -> float:
    try:
        return (heading + VIEW_OFFSETS[view]) % 360.0
    except KeyError:
        raise ValueError(f"unknown view {view!r}, expected one of {VIEWS}") from None


def sector_contains(
    center: GeoPoint,
    heading: float,
    view: str,
    spec: SectorSpec,
    point: GeoPoint,
) -> bool:
    """True iff ``point`` lies in the sector (distance and angle boundaries inclusive)."""
    axis = sector_axis(heading, view)
    dx = point[0] - center[0]
    dy = point[1] - center[1]
    dist = math.hypot(dx, dy)
    if dist > spec.radius:
        return False
    if dist < 1e-12:
        return True
    brg = math.degrees(math.atan2(dy, dx)) % 360.0
    return angular_sep_deg(brg, axis) <= spec.half_angle


def junc_bit(loc: DirectedLocation, smap: SemanticMap, view: str, spec: SectorSpec) -> int:
    """1 iff some junction point lies in the front/back sector.

    The junction the location itself sits on (closer than 1 m) is excluded.
    """
    if view not in ("front", "back"):
        raise ValueError(f"junction bit is defined for front/back, got {view!r}")
    return _junc_bit_at(loc.position[0], loc.position[1], loc.heading, smap, view, spec)


def _junc_bit_at(
    x: float, y: float, heading: float, smap: SemanticMap, view: str, spec: SectorSpec
) -> int:
    pts = smap.junction_xy
    if not len(pts):
        return 0
    axis = sector_axis(heading, view)
    dx = pts[:, 0] - x
    dy = pts[:, 1] - y
    dist = np.hypot(dx, dy)
    cand = (dist <= spec.radius) & (dist >= SELF_JUNCTION_RADIUS_M)
    if not cand.any():
        return 0
    brg = np.degrees(np.arctan2(dy[cand], dx[cand])) % 360.0
    sep = np.abs(brg - axis) % 360.0
    sep = np.minimum(sep, 360.0 - sep)
    return int((sep <= spec.half_angle).any())


def rays_covered(
    x: float,
    y: float,
    angles_deg: np.ndarray,
    radius: float,
    edges: np.ndarray,
) -> np.ndarray:
    """Per-ray: does the segment from (x, y) of the given length hit any edge?

    Rays exactly parallel to an edge are treated as non-intersecting (building
    walls never pass through road centerline locations in practice).
    """
    if not len(edges):
        return np.zeros(len(angles_deg), dtype=bool)
    rad = np.radians(angles_deg)
    dirx = np.cos(rad)[:, None]
    diry = np.sin(rad)[:, None]
    ax = edges[None, :, 0] - x
    ay = edges[None, :, 1] - y
    ex = (edges[:, 2] - edges[:, 0])[None, :]
    ey = (edges[:, 3] - edges[:, 1])[None, :]
    denom = dirx * ey - diry * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ax * ey - ay * ex) / denom
        u = (ax * diry - ay * dirx) / denom
    hit = (np.abs(denom) > 1e-12) & (t >= 0.0) & (t <= radius) & (u >= 0.0) & (u <= 1.0)
    return hit.any(axis=1)


def _sector_ray_angles(axis: float, half_angle: float, step: float) -> np.ndarray:
    n = int(round(2 * half_angle / step))
    return axis - half_angle + step * np.arange(n + 1)


def _max_false_run(mask: np.ndarray) -> int:
    """Length of the longest run of False values."""
    best = cur = 0
    for covered in mask:
        if covered:
            cur = 0
        else:
            cur += 1
            if cur > best:
                best = cur
    return best


def gap_bit(
    loc: DirectedLocation,
    smap: SemanticMap,
    view: str,
    spec: SectorSpec,
    gap_min_degrees: float = 15.0,
    ray_step_degrees: float = 1.0,
) -> int:
    """1 iff ray casting across the left/right sector finds an unblocked run.

    Rays are cast every ``ray_step_degrees`` across the full sector (both
    boundary angles included) and clipped to the sector radius.  A gap is
    present when some run of consecutive uncovered rays spans at least
    ``gap_min_degrees``, where a run of n rays spans (n - 1) * step degrees.
    Open land (no buildings in range) therefore counts as a gap.
    """
    if view not in ("left", "right"):
        raise ValueError(f"gap bit is defined for left/right, got {view!r}")
    return _gap_bit_at(
        loc.position[0], loc.position[1], loc.heading, smap, view, spec,
        gap_min_degrees, ray_step_degrees,
    )


def _gap_bit_at(
    x: float,
    y: float,
    heading: float,
    smap: SemanticMap,
    view: str,
    spec: SectorSpec,
    gap_min_degrees: float = 15.0,
    ray_step_degrees: float = 1.0,
) -> int:
    axis = sector_axis(heading, view)
    angles = _sector_ray_angles(axis, spec.half_angle, ray_step_degrees)
    near = smap.edge_grid.query(x, y, spec.radius)
    if len(near):
        edges = smap.building_edges[near]
        covered = rays_covered(x, y, angles, spec.radius, edges)
        # A location inside a building sees walls in every direction.
        for ri in np.unique(smap.edge_ring[near]):
            ring = smap.buildings[ri]
            if point_in_ring(x, y, ring):
                covered[:] = True
                break
    else:
        covered = np.zeros(len(angles), dtype=bool)
    run = _max_false_run(covered)
    return int(run >= 1 and (run - 1) * ray_step_degrees >= gap_min_degrees)


def ground_truth_bsd(
    loc: DirectedLocation,
    smap: SemanticMap,
    spec: SectorSpec = SectorSpec(),
    gap_min_degrees: float = 15.0,
    ray_step_degrees: float = 1.0,
) -> Bsd:
    """Assemble (junction front, junction back, gap left, gap right) from the map."""
    return ground_truth_bsd_at(
        loc.position[0], loc.position[1], loc.heading, smap, spec,
        gap_min_degrees, ray_step_degrees,
    )


def ground_truth_bsd_at(
    x: float,
    y: float,
    heading: float,
    smap: SemanticMap,
    spec: SectorSpec = SectorSpec(),
    gap_min_degrees: float = 15.0,
    ray_step_degrees: float = 1.0,
) -> Bsd:
    jf = _junc_bit_at(x, y, heading, smap, "front", spec)
    jb = _junc_bit_at(x, y, heading, smap, "back", spec)
    gl = _gap_bit_at(x, y, heading, smap, "left", spec, gap_min_degrees, ray_step_degrees)
    gr = _gap_bit_at(x, y, heading, smap, "right", spec, gap_min_degrees, ray_step_degrees)
    return jf << 3 | jb << 2 | gl << 1 | gr
