"""Localization sessions: bootstrapping, consistency checking, tracking.

A session grows its query route one observation at a time (bootstrapping),
matching the concatenated descriptor estimate plus the exact turn pattern
against the database slice of the current length.  Localization is declared
once the best-matched routes are consistent: for a window of successive
steps, each step has a unique best match and consecutive best routes share
enough of their locations.  After that the query length is frozen and slides
(tracking).

Also here: the probabilistic reading of a match.  With per-bit detector
accuracy q, a candidate route at Hamming distance H from the estimated
descriptor has likelihood proportional to q^(4*N - H) * (1 - q)^H, so ranking
by ascending distance equals ranking by descending likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from bsdloc.geometry import Bsd
from bsdloc.hamming import MatchResult, SliceIndex, hamming

# Remembering every co-minimal route is pointless past this; a capped record
# still counts as a tie (and therefore as not consistent).
TIE_STORE_CAP = 64

BOOTSTRAPPING = "bootstrapping"
LOCALIZED = "localized"
LOST = "lost"


class SessionError(RuntimeError):
    """Observation fed to a session that requires a reset."""


@dataclass(frozen=True)
class SessionConfig:
    overlap_threshold: float = 0.8
    streak: int = 5
    max_length: int = 40
    # Stricter variant: every pair in the window must overlap, not just
    # consecutive ones.
    mutual_overlap: bool = False
    # Tied best matches never extend the streak; with the freeze rule they
    # only reset it when some tied route fails the overlap test against the
    # last unique best.  Disable to require strictly consecutive unique wins.
    freeze_on_overlapping_ties: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.overlap_threshold <= 1.0:
            raise ValueError(f"overlap_threshold must be in (0, 1], got {self.overlap_threshold}")
        if self.streak < 1 or self.max_length < 1:
            raise ValueError("streak and max_length must be >= 1")


@dataclass
class StepRecord:
    step: int
    query_length: int
    status: str
    best_routes: tuple[tuple[int, ...], ...]
    distance: int | None
    tie_count: int
    ties_truncated: bool = False

    @property
    def unique(self) -> bool:
        return self.tie_count == 1 and not self.ties_truncated

    @property
    def top(self) -> tuple[int, ...] | None:
        return self.best_routes[0] if self.best_routes else None

    @property
    def current_location(self) -> int | None:
        return self.best_routes[0][-1] if self.best_routes else None


def route_overlap(a: Sequence[int], b: Sequence[int]) -> float:
    """Shared locations as a fraction of the shorter route."""
    if not a or not b:
        return 0.0
    return len(set(a) & set(b)) / min(len(a), len(b))


def consistency_check(
    history: Sequence[StepRecord],
    overlap_threshold: float = 0.8,
    streak: int = 5,
    mutual: bool = False,
) -> bool:
    """True iff the last ``streak`` steps each had a unique best match and
    successive best routes overlap by at least the threshold (inclusive)."""
    if len(history) < streak:
        return False
    window = history[-streak:]
    if not all(rec.unique for rec in window):
        return False
    tops = [rec.top for rec in window]
    if mutual:
        pairs = [(i, j) for i in range(len(tops)) for j in range(i + 1, len(tops))]
    else:
        pairs = [(i, i + 1) for i in range(len(tops) - 1)]
    return all(route_overlap(tops[i], tops[j]) >= overlap_threshold for i, j in pairs)


@dataclass
class StepResult:
    status: str
    match: MatchResult
    record: StepRecord
    localized_route: tuple[int, ...] | None = None


class LocalizationSession:
    """Strictly ordered observation consumer over one immutable database.

    ``index_for`` maps a query length to the :class:`SliceIndex` for that
    length.  ``method`` selects how candidates are matched: descriptors with
    exact turn patterns (default), descriptors only, or turn patterns only.
    """

    def __init__(
        self,
        index_for: Callable[[int], SliceIndex],
        config: SessionConfig = SessionConfig(),
        method: str = "bsd_turns",
    ):
        if method not in ("bsd_turns", "bsd_only", "turns_only"):
            raise ValueError(f"unknown matching method {method!r}")
        self.index_for = index_for
        self.config = config
        self.method = method
        self.reset()

    def reset(self) -> None:
        self.status = BOOTSTRAPPING
        self.observations: list[Bsd] = []
        self.turn_bits: list[int] = []
        self.history: list[StepRecord] = []
        self.window_length: int | None = None
        self.localized_route: tuple[int, ...] | None = None
        self.steps_taken = 0
        self._streak = 0
        self._ref_top: tuple[int, ...] | None = None

    def _update_streak(self, record: StepRecord) -> None:
        """Streak of consistent steps; ties freeze it while every tied route
        still overlaps the last unique best, and reset it otherwise."""
        t = self.config.overlap_threshold
        if record.unique:
            top = record.top
            if self._ref_top is None or route_overlap(top, self._ref_top) >= t:
                self._streak += 1
            else:
                self._streak = 1
            self._ref_top = top
        else:
            overlapping_tie = (
                self.config.freeze_on_overlapping_ties
                and self._ref_top is not None
                and not record.ties_truncated
                and record.best_routes
                and all(route_overlap(r, self._ref_top) >= t for r in record.best_routes)
            )
            if not overlapping_tie:
                self._streak = 0
                self._ref_top = None

    # -- query assembly ----------------------------------------------------

    def _query(self) -> tuple[int, int, int]:
        length = min(len(self.observations), self.config.max_length)
        if self.status == LOCALIZED and self.window_length is not None:
            length = self.window_length
        obs = self.observations[-length:]
        turns = self.turn_bits[-(length - 1):] if length > 1 else []
        desc = 0
        for i, b in enumerate(obs):
            desc |= b << (4 * i)
        pattern = 0
        for i, t in enumerate(turns):
            pattern |= t << i
        return length, desc, pattern

    def _match(self, index: SliceIndex, desc: int, pattern: int) -> MatchResult:
        if self.method == "bsd_turns":
            return index.match(desc, pattern)
        if self.method == "bsd_only":
            return index.match_bsd_only(desc)
        return index.match_turns_only(pattern)

    # -- stepping ----------------------------------------------------------

    def step(
        self,
        new_bsd: Bsd,
        new_turn_bit: int | None = None,
        finalized_prev_bsd: Bsd | None = None,
    ) -> StepResult:
        """Consume one observation.

        ``new_turn_bit`` is required for every step after the first (ground
        truth; the turn pattern is assumed exact).  ``finalized_prev_bsd``
        replaces the previous observation once the new position reveals its
        through-travel heading; omit it when nothing changed.
        """
        if self.status == LOST:
            raise SessionError("session is lost; call reset() before observing again")
        if self.observations and new_turn_bit is None:
            raise ValueError("a turn bit is required for every step after the first")
        if finalized_prev_bsd is not None and self.observations:
            self.observations[-1] = finalized_prev_bsd
        self.observations.append(new_bsd)
        if new_turn_bit is not None:
            self.turn_bits.append(int(new_turn_bit))
        self.steps_taken += 1

        length, desc, pattern = self._query()
        index = self.index_for(length)
        result = self._match(index, desc, pattern)

        routes = tuple(index.slice.routes[rid] for rid in result.best_ids[:TIE_STORE_CAP])
        record = StepRecord(
            step=self.steps_taken,
            query_length=length,
            status=self.status,
            best_routes=routes,
            distance=result.best_distance,
            tie_count=result.tie_count,
            ties_truncated=result.tie_count > TIE_STORE_CAP,
        )

        if result.status == "empty":
            if self.status == LOCALIZED:
                # Tracking lost every candidate: restart bootstrapping from
                # this observation with history cleared.
                self.reset()
                self.observations.append(new_bsd)
                self.steps_taken = 1
            else:
                self.status = LOST
                self.history.append(record)
            record.status = self.status
            return StepResult(self.status, result, record, None)

        self.history.append(record)
        if self.status == BOOTSTRAPPING:
            if self.config.mutual_overlap:
                done = consistency_check(
                    self.history, self.config.overlap_threshold, self.config.streak, True
                )
            else:
                self._update_streak(record)
                done = self._streak >= self.config.streak
            if done:
                self.status = LOCALIZED
                self.window_length = length
                self.localized_route = record.top
        else:
            self.localized_route = record.top
        record.status = self.status
        return StepResult(self.status, result, record, self.localized_route)


# ---------------------------------------------------------------------------
# Probabilistic reading
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LikelihoodModel:
    """Detector accuracy for likelihood weighting; requires 0 < q < 1."""

    q: float = 0.75

    def __post_init__(self) -> None:
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must be strictly inside (0, 1), got {self.q}")


def log_posterior_weight(h: int, n_locations: int, model: LikelihoodModel) -> float:
    """log of q^(4N - H) * (1 - q)^H for a route of N locations at distance H."""
    total = 4 * n_locations
    if not 0 <= h <= total:
        raise ValueError(f"distance {h} out of range for {n_locations} locations")
    return (total - h) * math.log(model.q) + h * math.log(1.0 - model.q)


def posterior_weight(h: int, n_locations: int, model: LikelihoodModel) -> float:
    return math.exp(log_posterior_weight(h, n_locations, model))


def log_likelihood_ratio(h_i: int, h_j: int, model: LikelihoodModel) -> float:
    """log of P(route_i | estimate) / P(route_j | estimate)."""
    return (h_i - h_j) * (math.log(1.0 - model.q) - math.log(model.q))


def likelihood_ratio(h_i: int, h_j: int, model: LikelihoodModel) -> float:
    return math.exp(log_likelihood_ratio(h_i, h_j, model))


def single_location_posterior(
    d_hat: Bsd, bsd_table: Mapping[int, Bsd], model: LikelihoodModel
) -> dict[int, float]:
    """Posterior over locations from one estimated descriptor, normalized to 1."""
    if not bsd_table:
        raise ValueError("empty descriptor table")
    logs = {
        loc: log_posterior_weight(hamming(d_hat, d), 1, model)
        for loc, d in bsd_table.items()
    }
    peak = max(logs.values())
    weights = {loc: math.exp(v - peak) for loc, v in logs.items()}
    total = sum(weights.values())
    return {loc: w / total for loc, w in weights.items()}
