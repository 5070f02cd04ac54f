"""Route enumeration, route descriptors, turn patterns and the route database.

A route is a simple directed path over sample points (adjacent = consecutive
along a road chain, or meeting at a shared chain node).  Its descriptor is
the concatenation of per-position 4-bit BSDs; its turn pattern marks heading
changes of at least ``tau`` degrees between consecutive positions.

Bit packing (little-end first, documented byte-exactly in
docs/database-format.md):

* route descriptor: position i occupies bits [4i, 4i+4) of an int, i.e. the
  first location is the least significant nibble;
* turn pattern: bit i of the int is the turn bit between positions i and
  i+1; bit 0 is structurally 0 (no bend is observable at the first location).

Per-position headings use the chord rule: interior positions face from their
predecessor toward their successor, endpoints face along their single
incident step.  This is the one local rule under which reversing a route
maps every per-position descriptor to its front/back + left/right swap.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Sequence

from bsdloc.geometry import (
    Bsd,
    GeoPoint,
    SectorSpec,
    angular_sep_deg,
    bearing_deg,
    ground_truth_bsd_at,
    reverse_bsd,
)
from bsdloc.mapio import MapBundle

log = logging.getLogger(__name__)

DEFAULT_TURN_THRESHOLD_DEG = 60.0

Route = tuple[int, ...]

DB_MAGIC = b"BSDB"
DB_VERSION = 1
_HEADER = struct.Struct("<4sHH16sIQ")  # magic, version, reserved, map hash, length, count


class MissingBsdError(KeyError):
    """A route position has no descriptor available."""


class DatabaseFormatError(ValueError):
    """Bad magic, version, or map hash in a route database file."""


class RouteLimitExceeded(RuntimeError):
    def __init__(self, length: int, limit: int):
        super().__init__(f"route enumeration at length {length} truncated at limit {limit}")
        self.length = length
        self.limit = limit


# ---------------------------------------------------------------------------
# Adjacency
# ---------------------------------------------------------------------------


@dataclass
class Adjacency:
    """Sparse symmetric adjacency over sample points."""

    neighbors: dict[int, tuple[int, ...]]

    @property
    def size(self) -> int:
        return len(self.neighbors)

    def __contains__(self, pair: tuple[int, int]) -> bool:
        a, b = pair
        return b in self.neighbors.get(a, ())


def build_adjacency(chains: Iterable[Sequence[int]]) -> Adjacency:
    """Consecutive samples along each chain are adjacent; chains sharing
    endpoint samples connect through them."""
    nbrs: dict[int, set[int]] = {}
    for chain in chains:
        for a, b in zip(chain, chain[1:]):
            if a == b:
                continue
            nbrs.setdefault(a, set()).add(b)
            nbrs.setdefault(b, set()).add(a)
    return Adjacency({n: tuple(sorted(v)) for n, v in sorted(nbrs.items())})


def enumerate_routes(
    adj: Adjacency, length: int, limit: int | None = None
) -> Iterator[Route]:
    """Yield every simple directed path of exactly ``length`` locations.

    Emission order is lexicographic by location id.  Both traversal
    directions of a physical path are emitted.  If ``limit`` is given,
    :class:`RouteLimitExceeded` is raised once it would be passed, so
    truncation is never silent.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    emitted = 0
    path: list[int] = []
    on_path: set[int] = set()
    for start in sorted(adj.neighbors):
        # Stack of iterators, one per depth; explicit to avoid recursion.
        path.append(start)
        on_path.add(start)
        if length == 1:
            emitted += 1
            if limit is not None and emitted > limit:
                raise RouteLimitExceeded(length, limit)
            yield (start,)
            path.pop()
            on_path.remove(start)
            continue
        iters = [iter(adj.neighbors[start])]
        while iters:
            try:
                nxt = next(iters[-1])
            except StopIteration:
                iters.pop()
                on_path.remove(path.pop())
                continue
            if nxt in on_path:
                continue
            path.append(nxt)
            on_path.add(nxt)
            if len(path) == length:
                emitted += 1
                if limit is not None and emitted > limit:
                    raise RouteLimitExceeded(length, limit)
                yield tuple(path)
                on_path.remove(path.pop())
            else:
                iters.append(iter(adj.neighbors[nxt]))


# ---------------------------------------------------------------------------
# Turn bits
# ---------------------------------------------------------------------------


def turn_bit(theta_i: float, theta_j: float, tau: float = DEFAULT_TURN_THRESHOLD_DEG) -> int:
    """1 iff the smallest absolute angle between the headings is >= tau."""
    return int(angular_sep_deg(theta_i, theta_j) >= tau)


def route_descriptor(route: Route, bsd_table: Mapping[int, Bsd]) -> int:
    """Concatenate per-location descriptors in route order (4 bits each)."""
    desc = 0
    for i, loc in enumerate(route):
        try:
            b = bsd_table[loc]
        except KeyError:
            raise MissingBsdError(f"no descriptor for location {loc}") from None
        desc |= b << (4 * i)
    return desc


def turn_pattern(route: Route, headings: Mapping[int, float],
                 tau: float = DEFAULT_TURN_THRESHOLD_DEG) -> int:
    """(N-1)-bit pattern from per-location front headings."""
    pattern = 0
    for i in range(len(route) - 1):
        if turn_bit(headings[route[i]], headings[route[i + 1]], tau):
            pattern |= 1 << i
    return pattern


# ---------------------------------------------------------------------------
# Ground-truth BSD table and route encoding
# ---------------------------------------------------------------------------


class BsdTable:
    """Ground-truth BSDs per (sample, heading), computed lazily and cached.

    Route construction needs descriptors at chord headings that are not
    always one of a sample's tangent directions, so the cache is keyed by the
    exact heading used.
    """

    def __init__(
        self,
        bundle: MapBundle,
        spec: SectorSpec = SectorSpec(),
        gap_min_degrees: float = 15.0,
        ray_step_degrees: float = 1.0,
    ):
        self.bundle = bundle
        self.spec = spec
        self.gap_min_degrees = gap_min_degrees
        self.ray_step_degrees = ray_step_degrees
        self._smap = bundle.semantic_map()
        self._cache: dict[tuple[int, float], Bsd] = {}

    def bsd(self, sample_id: int, heading: float) -> Bsd:
        heading = heading % 360.0
        key = (sample_id, heading)
        got = self._cache.get(key)
        if got is None:
            x, y = self.bundle.points[sample_id]
            got = ground_truth_bsd_at(
                float(x), float(y), heading, self._smap, self.spec,
                self.gap_min_degrees, self.ray_step_degrees,
            )
            self._cache[key] = got
        return got

    def directed_table(self) -> dict[int, Bsd]:
        """Ground truth per directed location id (both travel senses)."""
        return {dl.uid: self.bsd(dl.sample_id, dl.heading) for dl in self.bundle.directed}


class RouteCodec:
    """Builds descriptors, turn patterns and headings for routes on one map."""

    def __init__(self, bundle: MapBundle, table: BsdTable,
                 tau: float = DEFAULT_TURN_THRESHOLD_DEG):
        self.bundle = bundle
        self.table = table
        self.tau = tau
        self._pts = bundle.points

    def _bearing(self, a: int, b: int) -> float:
        pa, pb = self._pts[a], self._pts[b]
        return bearing_deg(GeoPoint(pa[0], pa[1]), GeoPoint(pb[0], pb[1]))

    def heading_at(self, route: Route, i: int) -> float:
        """Chord-rule heading for route position i."""
        n = len(route)
        if n < 2:
            raise ValueError("headings are undefined for single-location routes")
        if i == 0:
            return self._bearing(route[0], route[1])
        if i == n - 1:
            return self._bearing(route[n - 2], route[n - 1])
        return self._bearing(route[i - 1], route[i + 1])

    def arrival_heading(self, route: Route, i: int) -> float:
        """Travel bearing when arriving at position i (departure for i == 0)."""
        if i == 0:
            return self._bearing(route[0], route[1])
        return self._bearing(route[i - 1], route[i])

    def descriptor(self, route: Route, bsd_for: Callable[[int, float], Bsd] | None = None) -> int:
        """Full 4*N-bit descriptor; position i sits at bits [4i, 4i+4)."""
        if len(route) < 2:
            raise ValueError("use directed-location descriptors for single locations")
        lookup = bsd_for or self.table.bsd
        desc = 0
        for i in range(len(route)):
            b = lookup(route[i], self.heading_at(route, i))
            if b is None:
                raise MissingBsdError(f"no descriptor for location {route[i]}")
            desc |= b << (4 * i)
        return desc

    def turn_pattern(self, route: Route) -> int:
        """(N-1)-bit pattern; bit i marks a bend of >= tau at position i."""
        n = len(route)
        pattern = 0
        prev = self.arrival_heading(route, 0) if n > 1 else 0.0
        for i in range(1, n):
            arr = self._bearing(route[i - 1], route[i])
            if turn_bit(prev, arr, self.tau):
                pattern |= 1 << (i - 1)
            prev = arr
        return pattern

    def true_observations(self, route: Route) -> list[tuple[Bsd, Bsd | None, int | None]]:
        """Per-step ground truth for replaying a route through a session.

        Step i yields (BSD at the arrival heading of position i, finalized
        chord-heading BSD for position i-1 or None, turn bit or None).  The
        finalized value exists from step 2 on: reaching position i reveals
        the chord direction through position i-1.
        """
        n = len(route)
        if n < 2:
            raise ValueError("cannot replay a single-location route")
        out: list[tuple[Bsd, Bsd | None, int | None]] = []
        prev_arr = self._bearing(route[0], route[1])
        for i in range(n):
            arr = prev_arr if i == 0 else self._bearing(route[i - 1], route[i])
            prov = self.table.bsd(route[i], arr)
            final_prev: Bsd | None = None
            if i >= 2:
                final_prev = self.table.bsd(route[i - 1], self._bearing(route[i - 2], route[i]))
            tbit = None if i == 0 else turn_bit(prev_arr, arr, self.tau)
            out.append((prov, final_prev, tbit))
            prev_arr = arr
        return out


def descriptor_nibbles(desc: int, length: int) -> list[Bsd]:
    return [(desc >> (4 * i)) & 0xF for i in range(length)]


def reverse_descriptor(desc: int, length: int) -> int:
    """Reference reversal: reversed order of per-position front/back+left/right swaps."""
    out = 0
    for j, nib in enumerate(reversed(descriptor_nibbles(desc, length))):
        out |= reverse_bsd(nib) << (4 * j)
    return out


# ---------------------------------------------------------------------------
# Per-length slices and the streaming builder
# ---------------------------------------------------------------------------


@dataclass
class RouteSlice:
    """All routes of one length with their descriptors and turn patterns."""

    length: int
    routes: list[Route]
    descriptors: list[int]
    turns: list[int]

    @property
    def descriptor_bits(self) -> int:
        return 4 * self.length

    @property
    def turn_bits(self) -> int:
        return self.length - 1

    def __len__(self) -> int:
        return len(self.routes)


class SliceBuilder:
    """Extends all simple paths one location at a time, keeping state O(|S_L|).

    Descriptor heads only ever append: extending a path finalizes exactly the
    old tail position (its chord heading becomes known) and adds a new
    provisional tail at the arrival heading.
    """

    def __init__(self, bundle: MapBundle, codec: RouteCodec):
        self.bundle = bundle
        self.codec = codec
        self.adj = build_adjacency(bundle.chains)
        # state: (route, desc_head, tail_bsd, turns, arr_bearing)
        self._states: list[tuple[Route, int, int, int, float]] | None = None
        self.length = 0

    def _slice_one(self) -> RouteSlice:
        # Single locations carry no travel direction: one record per directed
        # location, so a query made in either sense finds its sample.
        routes: list[Route] = []
        descs: list[int] = []
        for dl in self.bundle.directed:
            routes.append((dl.sample_id,))
            descs.append(self.codec.table.bsd(dl.sample_id, dl.heading))
        return RouteSlice(1, routes, descs, [0] * len(routes))

    def advance(self) -> RouteSlice:
        """Build and return the next length's slice."""
        table = self.codec.table
        bearing = self.codec._bearing
        tau = self.codec.tau
        if self._states is None:
            self._states = [((s,), 0, -1, 0, 0.0) for s in sorted(self.adj.neighbors)]
            self.length = 1
            return self._slice_one()

        new_states: list[tuple[Route, int, int, int, float]] = []
        k = self.length
        for route, desc_head, _tail, turns, arr_last in self._states:
            last = route[-1]
            for v in self.adj.neighbors[last]:
                if v in route:
                    continue
                arr_new = bearing(last, v)
                chord = arr_new if k == 1 else bearing(route[-2], v)
                head = desc_head | (table.bsd(last, chord) << (4 * (k - 1)))
                tail_new = table.bsd(v, arr_new)
                t = turns
                if k >= 2 and turn_bit(arr_last, arr_new, tau):
                    t |= 1 << (k - 1)
                new_states.append((route + (v,), head, tail_new, t, arr_new))
        self._states = new_states
        self.length = k + 1

        routes = [st[0] for st in new_states]
        descs = [st[1] | (st[2] << (4 * k)) for st in new_states]
        turns = [st[3] for st in new_states]
        return RouteSlice(self.length, routes, descs, turns)

    def iter_slices(self, max_length: int) -> Iterator[RouteSlice]:
        while self.length < max_length:
            yield self.advance()


# ---------------------------------------------------------------------------
# Database: memoized slices plus binary persistence
# ---------------------------------------------------------------------------


def descriptor_payload_bytes(length: int) -> int:
    return (4 * length + 7) // 8


def turn_payload_bytes(length: int) -> int:
    return (max(length - 1, 0) + 7) // 8


def record_bytes(length: int) -> int:
    return 4 * length + descriptor_payload_bytes(length) + turn_payload_bytes(length)


class RouteDatabase:
    """Per-length route collections over one map, built lazily and memoized."""

    def __init__(self, bundle: MapBundle, table: BsdTable | None = None,
                 tau: float = DEFAULT_TURN_THRESHOLD_DEG,
                 spec: SectorSpec = SectorSpec()):
        self.bundle = bundle
        self.table = table or BsdTable(bundle, spec)
        self.codec = RouteCodec(bundle, self.table, tau)
        self._slices: dict[int, RouteSlice] = {}
        self._builder: SliceBuilder | None = None

    def slice(self, length: int) -> RouteSlice:
        if length not in self._slices:
            if self._builder is None or self._builder.length >= length:
                self._builder = SliceBuilder(self.bundle, self.codec)
            while self._builder.length < length:
                sl = self._builder.advance()
                self._slices[sl.length] = sl
        return self._slices[length]

    def release(self, length: int) -> None:
        self._slices.pop(length, None)

    def counts(self, lengths: Iterable[int]) -> dict[int, int]:
        return {L: len(self.slice(L)) for L in lengths}

    def accounting(self, counts: Mapping[int, int]) -> list[dict]:
        """Payload vs full record sizes per length (payload excludes ids)."""
        rows = []
        for L, n in sorted(counts.items()):
            rows.append(
                {
                    "length": L,
                    "routes": n,
                    "descriptor_bytes_per_route": descriptor_payload_bytes(L),
                    "descriptor_payload_bytes": n * descriptor_payload_bytes(L),
                    "record_bytes_per_route": record_bytes(L),
                    "total_bytes": n * record_bytes(L),
                }
            )
        return rows


def save_slice(sl: RouteSlice, path: str | Path, map_hash: str) -> int:
    """Write one length's records in the fixed little-endian layout.

    Returns bytes written.  Record layout: length u32 ids, descriptor payload,
    turn payload (see docs/database-format.md).
    """
    L = sl.length
    dbytes = descriptor_payload_bytes(L)
    tbytes = turn_payload_bytes(L)
    id_packer = struct.Struct(f"<{L}I")
    raw_hash = bytes.fromhex(map_hash)[:16]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DB_MAGIC, DB_VERSION, 0, raw_hash, L, len(sl.routes)))
        written = _HEADER.size
        for route, desc, turns in zip(sl.routes, sl.descriptors, sl.turns):
            fh.write(id_packer.pack(*route))
            fh.write(desc.to_bytes(dbytes, "little"))
            fh.write(turns.to_bytes(tbytes, "little"))
            written += id_packer.size + dbytes + tbytes
    return written


def load_slice(path: str | Path, expect_map_hash: str | None = None) -> RouteSlice:
    data = Path(path).read_bytes()
    magic, version, _, raw_hash, L, count = _HEADER.unpack_from(data, 0)
    if magic != DB_MAGIC:
        raise DatabaseFormatError(f"bad magic {magic!r} in {path}")
    if version != DB_VERSION:
        raise DatabaseFormatError(f"unsupported db version {version} in {path}")
    if expect_map_hash is not None and bytes.fromhex(expect_map_hash)[:16] != raw_hash:
        raise DatabaseFormatError(f"database {path} was built for a different map")
    dbytes = descriptor_payload_bytes(L)
    tbytes = turn_payload_bytes(L)
    id_packer = struct.Struct(f"<{L}I")
    off = _HEADER.size
    routes: list[Route] = []
    descs: list[int] = []
    turns: list[int] = []
    for _ in range(count):
        routes.append(id_packer.unpack_from(data, off))
        off += id_packer.size
        descs.append(int.from_bytes(data[off : off + dbytes], "little"))
        off += dbytes
        turns.append(int.from_bytes(data[off : off + tbytes], "little"))
        off += tbytes
    return RouteSlice(L, routes, descs, turns)


def build_database_files(
    db: RouteDatabase,
    out_dir: str | Path,
    lengths: Sequence[int],
    limit: int | None = None,
) -> dict:
    """Persist slices for the requested lengths; returns an accounting report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    map_hash = db.bundle.map_hash()
    counts: dict[int, int] = {}
    files: dict[int, str] = {}
    measured: dict[int, int] = {}
    truncated = False
    for L in sorted(lengths):
        sl = db.slice(L)
        if limit is not None and len(sl) > limit:
            sl = RouteSlice(L, sl.routes[:limit], sl.descriptors[:limit], sl.turns[:limit])
            truncated = True
        counts[L] = len(sl)
        path = out / f"routes_len{L:03d}.bin"
        measured[L] = save_slice(sl, path, map_hash)
        files[L] = str(path)
    report = {
        "map_hash": map_hash,
        "lengths": sorted(counts),
        "counts": counts,
        "files": files,
        "measured_bytes": measured,
        "accounting": db.accounting(counts),
        "truncated": truncated,
    }
    return report


def slice_content_hash(sl: RouteSlice) -> str:
    h = hashlib.sha256()
    for route, desc, turns in zip(sl.routes, sl.descriptors, sl.turns):
        h.update(repr((route, desc, turns)).encode())
    return h.hexdigest()
