"""Exact nearest-neighbor search over bit-packed descriptors.

The metric tree is a Burkhard-Keller tree: each node stores one descriptor
(with a bucket of route ids for duplicates) and children keyed by their exact
Hamming distance to the node.  Triangle-inequality pruning makes searches
exact: results always equal a linear scan.

Route matching partitions the database by turn pattern (the pattern must
match exactly), keeping one tree per pattern, which shrinks each search space
drastically compared to a single tree.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from bsdloc.routes import RouteSlice


def hamming(a: int, b: int) -> int:
    """Popcount of XOR over bit-packed descriptors of equal length."""
    return (a ^ b).bit_count()


@dataclass
class MatchResult:
    """Candidates ranked ascending by (distance, route id).

    With default search depth the entries are exactly the minimum-distance
    tier; ``status`` is "empty" when the turn filter eliminated every
    candidate.
    """

    entries: list[tuple[int, int]] = field(default_factory=list)
    status: str = "ok"

    @property
    def tie_count(self) -> int:
        if not self.entries:
            return 0
        best = self.entries[0][1]
        return sum(1 for _, d in self.entries if d == best)

    @property
    def unique_best(self) -> bool:
        return self.tie_count == 1

    @property
    def best_distance(self) -> int | None:
        return self.entries[0][1] if self.entries else None

    @property
    def best_ids(self) -> list[int]:
        if not self.entries:
            return []
        best = self.entries[0][1]
        return [rid for rid, d in self.entries if d == best]


class _Node:
    __slots__ = ("desc", "ids", "children")

    def __init__(self, desc: int, rid: int):
        self.desc = desc
        self.ids = [rid]
        self.children: dict[int, _Node] = {}


class BkIndex:
    """BK-tree over equal-length bit strings; duplicate descriptors share a node."""

    def __init__(self, bits: int):
        if bits < 1:
            raise ValueError(f"bits must be >= 1, got {bits}")
        self.bits = bits
        self.root: _Node | None = None
        self.size = 0
        self.node_count = 0

    def insert(self, desc: int, rid: int) -> None:
        if desc < 0 or desc.bit_length() > self.bits:
            raise ValueError(f"descriptor does not fit in {self.bits} bits")
        self.size += 1
        if self.root is None:
            self.root = _Node(desc, rid)
            self.node_count = 1
            return
        node = self.root
        while True:
            d = hamming(node.desc, desc)
            if d == 0:
                node.ids.append(rid)
                return
            child = node.children.get(d)
            if child is None:
                node.children[d] = _Node(desc, rid)
                self.node_count += 1
                return
            node = child

    def nearest(self, query: int, tiers: int = 1) -> MatchResult:
        """All entries within the best ``tiers`` distinct distances.

        Pruning keeps any subtree that could still contain a candidate at the
        current worst accepted tier, so the result set is identical to a
        linear scan.
        """
        if self.root is None:
            raise ValueError("nearest() on an empty index")
        if query < 0 or query.bit_length() > self.bits:
            raise ValueError(f"query does not fit in {self.bits} bits")
        if tiers < 1:
            raise ValueError("tiers must be >= 1")
        found: dict[int, list[int]] = {}
        bound = self.bits + 1
        stack = [self.root]
        while stack:
            node = stack.pop()
            d = hamming(query, node.desc)
            if d <= bound:
                if d not in found:
                    found[d] = []
                    if len(found) > tiers:
                        del found[max(found)]
                    if len(found) == tiers:
                        bound = max(found)
                if d in found:
                    found[d].extend(node.ids)
            for key, child in node.children.items():
                if abs(key - d) <= bound:
                    stack.append(child)
        entries = [
            (rid, d) for d in sorted(found) for rid in sorted(found[d])
        ]
        return MatchResult(entries)

    def within(self, query: int, radius: int) -> list[tuple[int, int]]:
        """All (route id, distance) with distance <= radius."""
        if self.root is None:
            return []
        out: list[tuple[int, int]] = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            d = hamming(query, node.desc)
            if d <= radius:
                out.extend((rid, d) for rid in node.ids)
            for key, child in node.children.items():
                if abs(key - d) <= radius:
                    stack.append(child)
        out.sort(key=lambda e: (e[1], e[0]))
        return out


def linear_scan_nearest(descriptors: list[int], query: int) -> MatchResult:
    """Reference search: full scan for the minimum-distance tier."""
    best = None
    ids: list[int] = []
    for rid, desc in enumerate(descriptors):
        d = hamming(query, desc)
        if best is None or d < best:
            best, ids = d, [rid]
        elif d == best:
            ids.append(rid)
    return MatchResult([(rid, best) for rid in ids]) if best is not None else MatchResult()


class SliceIndex:
    """Search structures over one route slice.

    ``by_turns`` backs the combined descriptor+turn matcher; the single
    ``global`` tree (built on demand) backs descriptor-only matching, and the
    raw pattern groups back turns-only matching.
    """

    def __init__(self, sl: RouteSlice, build_global: bool = False):
        self.slice = sl
        self.bits = max(sl.descriptor_bits, 1)
        t0 = time.perf_counter()
        self.by_turns: dict[int, BkIndex] = {}
        self.turn_groups: dict[int, list[int]] = {}
        for rid, (desc, turns) in enumerate(zip(sl.descriptors, sl.turns)):
            idx = self.by_turns.get(turns)
            if idx is None:
                idx = self.by_turns[turns] = BkIndex(self.bits)
                self.turn_groups[turns] = []
            idx.insert(desc, rid)
            self.turn_groups[turns].append(rid)
        self._global: BkIndex | None = None
        if build_global:
            self.ensure_global()
        self.build_seconds = time.perf_counter() - t0

    def ensure_global(self) -> BkIndex:
        if self._global is None:
            idx = BkIndex(self.bits)
            for rid, desc in enumerate(self.slice.descriptors):
                idx.insert(desc, rid)
            self._global = idx
        return self._global

    def match(self, query_desc: int, query_turns: int) -> MatchResult:
        """Exact-turn-pattern filter, then nearest descriptors (all ties)."""
        idx = self.by_turns.get(query_turns)
        if idx is None:
            return MatchResult([], status="empty")
        return idx.nearest(query_desc)

    def match_bsd_only(self, query_desc: int) -> MatchResult:
        return self.ensure_global().nearest(query_desc)

    def match_turns_only(self, query_turns: int) -> MatchResult:
        rids = self.turn_groups.get(query_turns)
        if not rids:
            return MatchResult([], status="empty")
        return MatchResult([(rid, 0) for rid in sorted(rids)])


def match_route(index: SliceIndex, query_desc: int, query_turns: int) -> MatchResult:
    """Most likely routes: turn pattern equal, descriptor Hamming minimal."""
    return index.match(query_desc, query_turns)
