"""Experiment drivers: descriptor statistics, localization accuracy sweeps,
Hamming-distance histograms and localization snapshots.

Everything is deterministic given (config, seed): test routes are reservoir-
sampled from the lexicographic route enumeration, and detector noise is keyed
by (seed, route index, step).  Results are emitted as CSV (one header row,
preceded by a comment row recording the config hash) plus GeoJSON for map
snapshots.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from bsdloc.detector import BsdChannel, DetectorModel
from bsdloc.geometry import Bsd, SectorSpec, local_to_latlon
from bsdloc.hamming import SliceIndex, hamming
from bsdloc.localizer import (
    LOCALIZED,
    LocalizationSession,
    SessionConfig,
    StepResult,
)
from bsdloc.mapio import MapBundle
from bsdloc.routes import (
    BsdTable,
    Route,
    RouteCodec,
    RouteDatabase,
    SliceBuilder,
    build_adjacency,
    enumerate_routes,
)

log = logging.getLogger(__name__)

DEFAULT_BUCKETS = (5, 10, 15, 20, 25, 30, 35, 40)
METHODS = ("turns_only", "bsd_only", "bsd_turns")


class InsufficientRoutesError(RuntimeError):
    def __init__(self, requested: int, achievable: int, length: int):
        super().__init__(
            f"requested {requested} test routes of length {length}, "
            f"but only {achievable} exist"
        )
        self.achievable = achievable


@dataclass(frozen=True)
class ExperimentConfig:
    spacing: float = 10.0
    radius: float = 30.0
    half_angle: float = 45.0
    gap_min_degrees: float = 15.0
    tau: float = 60.0
    max_route_length: int = 40
    buckets: tuple[int, ...] = DEFAULT_BUCKETS
    q_values: tuple[float, ...] = (0.6, 0.75, 0.9, 1.0)
    q: float = 0.75
    num_test_routes: int = 100
    seed: int = 0
    overlap_threshold: float = 0.8
    streak: int = 5

    def __post_init__(self) -> None:
        if self.num_test_routes < 1 or self.max_route_length < 1:
            raise ValueError("counts must be positive")
        for v in self.q_values + (self.q,):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"q values must be in [0, 1], got {v}")

    def sector(self) -> SectorSpec:
        return SectorSpec(self.radius, self.half_angle)

    def session_config(self) -> SessionConfig:
        return SessionConfig(self.overlap_threshold, self.streak, self.max_route_length)

    def to_dict(self) -> dict:
        return {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in self.__dict__.items()
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        fields = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        return cls(**fields)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        text = Path(path).read_text()
        if str(path).endswith(".toml"):
            import tomllib

            data = tomllib.loads(text)
        else:
            data = json.loads(text)
        return cls.from_dict(data)

    def config_hash(self, map_hash: str = "") -> str:
        payload = json.dumps({"config": self.to_dict(), "map": map_hash}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence],
              config_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


# ---------------------------------------------------------------------------
# Test route sampling
# ---------------------------------------------------------------------------


def sample_test_routes(bundle: MapBundle, length: int, count: int, seed: int) -> list[Route]:
    """Uniform reservoir sample over all routes of the given length."""
    adj = build_adjacency(bundle.chains)
    rng = np.random.default_rng((seed, length))
    chosen: list[Route] = []
    seen = 0
    for route in enumerate_routes(adj, length):
        if seen < count:
            chosen.append(route)
        else:
            j = int(rng.integers(0, seen + 1))
            if j < count:
                chosen[j] = route
        seen += 1
    if seen < count:
        raise InsufficientRoutesError(count, seen, length)
    return chosen


# ---------------------------------------------------------------------------
# Descriptor distribution (16-bin histogram)
# ---------------------------------------------------------------------------


def bsd_distribution(bundle: MapBundle, table: BsdTable, model: DetectorModel) -> list[dict]:
    """Counts of ground-truth vs one noisy-estimate pass per 4-bit pattern."""
    channel = BsdChannel(model)
    gt = np.zeros(16, dtype=int)
    est = np.zeros(16, dtype=int)
    for dl in bundle.directed:
        d = table.bsd(dl.sample_id, dl.heading)
        gt[d] += 1
        est[channel.observe(dl.uid, 0, d)] += 1
    return [
        {"pattern": format(p, "04b"), "ground_truth": int(gt[p]), "estimated": int(est[p])}
        for p in range(16)
    ]


# ---------------------------------------------------------------------------
# Accuracy experiments (lockstep over query lengths)
# ---------------------------------------------------------------------------


@dataclass
class RouteOutcome:
    route_index: int
    declared_step: int | None = None
    correct: bool = False
    declared_route: tuple[int, ...] | None = None


@dataclass
class _Task:
    outcome: RouteOutcome
    route: Route
    truth: list[tuple[Bsd, Bsd | None, int | None]]
    session: LocalizationSession
    channel: BsdChannel
    done: bool = False


@dataclass
class Variant:
    """One experimental arm: a detector accuracy and a matching method."""

    label: str
    q: float
    method: str = "bsd_turns"


def run_accuracy_experiment(
    bundle: MapBundle,
    table: BsdTable,
    config: ExperimentConfig,
    variants: Sequence[Variant],
    test_routes: Sequence[Route] | None = None,
) -> dict[str, list[RouteOutcome]]:
    """Run sessions for every (variant, test route) pair.

    All variants advance in lockstep over the query length so only one
    database slice is resident at a time.  A session stops at its first
    localization declaration; the outcome records the step and whether the
    declared route's current location was the true one.
    """
    M = config.max_route_length
    if test_routes is None:
        test_routes = sample_test_routes(bundle, M, config.num_test_routes, config.seed)
    codec = RouteCodec(bundle, table, config.tau)
    session_cfg = config.session_config()

    tasks: dict[str, list[_Task]] = {}
    current_index: dict[int, SliceIndex] = {}

    def index_for(length: int) -> SliceIndex:
        return current_index[length]

    for variant in variants:
        model = DetectorModel(q_junc=variant.q, q_gap=variant.q, seed=config.seed)
        channel = BsdChannel(model)
        arm = []
        for ri, route in enumerate(test_routes):
            arm.append(
                _Task(
                    outcome=RouteOutcome(ri),
                    route=route,
                    truth=codec.true_observations(route),
                    session=LocalizationSession(index_for, session_cfg, variant.method),
                    channel=channel,
                )
            )
        tasks[variant.label] = arm

    need_global = any(v.method == "bsd_only" for v in variants)
    builder = SliceBuilder(bundle, codec)
    t_start = time.perf_counter()
    for L in range(1, M + 1):
        sl = builder.advance()
        index = SliceIndex(sl, build_global=need_global)
        current_index.clear()
        current_index[L] = index
        step = L - 1
        for arm in tasks.values():
            for task in arm:
                if task.done:
                    continue
                prov, final_prev, tbit = task.truth[step]
                noisy = task.channel.observe(task.outcome.route_index, step, prov)
                noisy_final = None
                if final_prev is not None:
                    noisy_final = task.channel.observe(
                        task.outcome.route_index, step - 1, final_prev
                    )
                result = task.session.step(noisy, tbit, noisy_final)
                if result.status == LOCALIZED:
                    task.outcome.declared_step = L
                    task.outcome.correct = (
                        result.record.current_location == task.route[step]
                    )
                    task.outcome.declared_route = result.record.top
                    task.done = True
        log.debug(
            "length %d: %d routes, %.1fs elapsed", L, len(sl), time.perf_counter() - t_start
        )
    return {label: [t.outcome for t in arm] for label, arm in tasks.items()}


def bucket_accuracy(outcomes: Sequence[RouteOutcome], buckets: Sequence[int]) -> dict[int, float]:
    """Cumulative percentage of routes correctly localized by each step bound."""
    n = len(outcomes)
    out = {}
    for b in buckets:
        hits = sum(
            1 for o in outcomes if o.correct and o.declared_step is not None and o.declared_step <= b
        )
        out[b] = 100.0 * hits / n if n else 0.0
    return out


def accuracy_vs_length_rows(
    results: dict[str, list[RouteOutcome]], buckets: Sequence[int]
) -> list[tuple]:
    rows = []
    for label in sorted(results):
        acc = bucket_accuracy(results[label], buckets)
        for b in buckets:
            rows.append((label, f"0-{b}", round(acc[b], 3)))
    return rows


def accuracy_vs_q_rows(
    results: dict[str, list[RouteOutcome]], q_values: Sequence[float], buckets: Sequence[int]
) -> list[tuple]:
    rows = []
    for q in q_values:
        acc = bucket_accuracy(results[f"q={q}"], buckets)
        for b in buckets:
            rows.append((q, f"0-{b}", round(acc[b], 3)))
    return rows


# ---------------------------------------------------------------------------
# Hamming-distance histograms
# ---------------------------------------------------------------------------


def hamming_histogram(
    bundle: MapBundle,
    table: BsdTable,
    config: ExperimentConfig,
    lengths: Sequence[int] = (15, 30),
    route: Route | None = None,
) -> tuple[list[tuple], dict]:
    """Distance distribution from a query route to every candidate.

    Returns CSV rows (route_length, turn_filter, hamming_distance,
    candidate_count, is_correct_distance) and a summary with the correct
    route's distance and candidate totals per filter setting.
    """
    top = max(lengths)
    if route is None:
        route = sample_test_routes(bundle, top, 1, config.seed)[0]
    codec = RouteCodec(bundle, table, config.tau)
    model = DetectorModel(q_junc=config.q, q_gap=config.q, seed=config.seed)
    channel = BsdChannel(model)
    truth = codec.true_observations(route)

    builder = SliceBuilder(bundle, codec)
    wanted = set(lengths)
    rows: list[tuple] = []
    summary: dict = {"route": list(route), "lengths": {}}
    for L in range(1, top + 1):
        sl = builder.advance()
        if L not in wanted:
            continue
        prefix = route[:L]
        desc = 0
        for i in range(L):
            # Interior positions use their finalized (through-travel) value,
            # revealed on arrival at position i+1; the tail stays provisional.
            if i + 1 < L and truth[i + 1][1] is not None:
                true_b = truth[i + 1][1]
            else:
                true_b = truth[i][0]
            desc |= channel.observe(0, i, true_b) << (4 * i)
        turns = codec.turn_pattern(prefix)
        true_rid = sl.routes.index(prefix)
        correct_d = hamming(desc, sl.descriptors[true_rid])

        dists_all = [hamming(desc, d) for d in sl.descriptors]
        group = [i for i, t in enumerate(sl.turns) if t == turns]
        dists_on = [dists_all[i] for i in group]
        for flag, dists in (("off", dists_all), ("on", dists_on)):
            counts = np.bincount(dists) if dists else np.zeros(1, dtype=int)
            for d, c in enumerate(counts):
                if c:
                    rows.append((L, flag, d, int(c), int(d == correct_d)))
        summary["lengths"][L] = {
            "correct_distance": correct_d,
            "candidates_all": len(dists_all),
            "candidates_turn_filtered": len(dists_on),
            "min_distance_all": int(min(dists_all)),
            "min_distance_turn_filtered": int(min(dists_on)) if dists_on else None,
        }
    return rows, summary


# ---------------------------------------------------------------------------
# Snapshots (GeoJSON)
# ---------------------------------------------------------------------------


def _coords(bundle: MapBundle, sample_id: int) -> list[float]:
    x, y = bundle.points[sample_id]
    if bundle.origin is not None:
        lat, lon = local_to_latlon((float(x), float(y)), bundle.origin)
        return [lon, lat]
    return [float(x), float(y)]


def snapshot_geojson(
    bundle: MapBundle,
    index: SliceIndex,
    query_desc: int,
    query_turns: int,
    status: str,
    current_sample: int | None,
    best_route: Route | None,
    turn_filtered: bool = True,
) -> dict:
    """Per-location best containing-route distance plus the current best route."""
    sl = index.slice
    if turn_filtered:
        rids = index.turn_groups.get(query_turns, [])
    else:
        rids = range(len(sl.routes))
    closeness: dict[int, int] = {}
    for rid in rids:
        d = hamming(query_desc, sl.descriptors[rid])
        for loc in sl.routes[rid]:
            if loc not in closeness or d < closeness[loc]:
                closeness[loc] = d
    features = []
    for sid in range(bundle.sample_count):
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": _coords(bundle, sid)},
                "properties": {
                    "location_id": sid,
                    "closeness": closeness.get(sid),
                    "is_current": bool(current_sample == sid),
                    "status": status if current_sample == sid else None,
                },
            }
        )
    if best_route:
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [_coords(bundle, sid) for sid in best_route],
                },
                "properties": {"role": "best_route", "status": status},
            }
        )
    return {"type": "FeatureCollection", "features": features}


# ---------------------------------------------------------------------------
# Single-session replay (event log)
# ---------------------------------------------------------------------------


class IndexCache:
    """Memoized SliceIndex per length over a route database."""

    def __init__(self, db: RouteDatabase, build_global: bool = False):
        self.db = db
        self.build_global = build_global
        self._cache: dict[int, SliceIndex] = {}

    def __call__(self, length: int) -> SliceIndex:
        if length not in self._cache:
            self._cache[length] = SliceIndex(self.db.slice(length), self.build_global)
        return self._cache[length]


def replay_session(
    index_for,
    codec: RouteCodec,
    route: Route,
    model: DetectorModel,
    session_config: SessionConfig,
    method: str = "bsd_turns",
    stream_key: int = 0,
) -> tuple[LocalizationSession, list[StepResult]]:
    """Feed a full test route through a fresh session, noisy per the model."""
    channel = BsdChannel(model)
    session = LocalizationSession(index_for, session_config, method)
    results = []
    truth = codec.true_observations(route)
    for step, (prov, final_prev, tbit) in enumerate(truth):
        noisy = channel.observe(stream_key, step, prov)
        noisy_final = (
            channel.observe(stream_key, step - 1, final_prev) if final_prev is not None else None
        )
        results.append(session.step(noisy, tbit, noisy_final))
    return session, results


def session_log_rows(results: Sequence[StepResult]) -> list[tuple]:
    """Event log: one row per step, the localizer's external interface."""
    rows = []
    for r in results:
        rid = r.match.entries[0][0] if r.match.entries else ""
        rows.append(
            (
                r.record.step,
                r.record.query_length,
                r.record.status,
                rid,
                r.record.distance if r.record.distance is not None else "",
                r.record.tie_count,
            )
        )
    return rows


SESSION_LOG_HEADER = ("step", "query_length", "status", "best_route_id", "hamming_distance", "tie_count")
