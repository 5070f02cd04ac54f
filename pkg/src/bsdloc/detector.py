"""Simulated semantic detectors: a per-bit noisy channel over true BSDs.

Each junction bit of a descriptor is reported correctly with probability
``q_junc`` and flipped otherwise; gap bits use ``q_gap``.  Flips are
independent across bits and locations.  Draws are indexed by
(seed, stream key, step) so experiment runs are reproducible and any route
can be replayed, including re-reads of the same step.

Externally computed descriptor estimates can be loaded from CSV instead,
replacing the channel entirely.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from bsdloc.geometry import Bsd

log = logging.getLogger(__name__)

ESTIMATES_COLUMNS = ("location_id", "junction_front", "junction_back", "gap_left", "gap_right")


@dataclass(frozen=True)
class DetectorModel:
    """Per-bit accuracy of the simulated detectors."""

    q_junc: float = 0.75
    q_gap: float = 0.75
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("q_junc", "q_gap"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


def estimate_bsd(true_bsd: Bsd, model: DetectorModel, rng: np.random.Generator) -> Bsd:
    """One noisy read of a descriptor; draws one uniform per bit."""
    draws = rng.random(4)
    out = 0
    for j in range(4):
        bit = (true_bsd >> (3 - j)) & 1
        q = model.q_junc if j < 2 else model.q_gap
        if draws[j] >= q:
            bit ^= 1
        out |= bit << (3 - j)
    return out


class BsdChannel:
    """Deterministic keyed channel: the same (key, step) always draws alike.

    Re-reading a step with a different true descriptor reuses the same
    uniforms, so finalizing an observation never injects fresh noise.
    """

    def __init__(self, model: DetectorModel):
        self.model = model

    def observe(self, stream_key: int, step: int, true_bsd: Bsd) -> Bsd:
        rng = np.random.default_rng((self.model.seed, stream_key, step))
        return estimate_bsd(true_bsd, self.model, rng)


class EstimatesFormatError(ValueError):
    """Malformed row in an estimates CSV; carries the 1-based row number."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


@dataclass
class EstimatesTable:
    bsds: dict[int, Bsd]
    missing: list[int]
    unknown: list[int]
    empty: bool = False


def load_estimates(source: str | Path | IO, expected_ids: Iterable[int] | None = None) -> EstimatesTable:
    """Load externally computed descriptor estimates.

    Expects a header row followed by ``location_id,junction_front,
    junction_back,gap_left,gap_right`` with bits in {0, 1}.  Unknown location
    ids are collected, not fatal; a malformed row raises
    :class:`EstimatesFormatError` with its row number.
    """
    own = isinstance(source, (str, Path))
    fh = open(source, newline="") if own else source
    try:
        reader = csv.reader(fh)
        rows = [r for r in reader if r and not r[0].startswith("#")]
    finally:
        if own:
            fh.close()
    if not rows:
        log.warning("estimates file is empty")
        missing = sorted(expected_ids) if expected_ids is not None else []
        return EstimatesTable({}, missing, [], empty=True)
    header = [c.strip() for c in rows[0]]
    if header != list(ESTIMATES_COLUMNS):
        raise EstimatesFormatError(1, f"expected header {','.join(ESTIMATES_COLUMNS)}, got {','.join(header)}")
    expected = set(expected_ids) if expected_ids is not None else None
    bsds: dict[int, Bsd] = {}
    unknown: list[int] = []
    for rownum, row in enumerate(rows[1:], start=2):
        if len(row) != 5:
            raise EstimatesFormatError(rownum, f"expected 5 fields, got {len(row)}")
        try:
            loc = int(row[0])
            bits = [int(v) for v in row[1:]]
        except ValueError as exc:
            raise EstimatesFormatError(rownum, str(exc)) from None
        if any(b not in (0, 1) for b in bits):
            raise EstimatesFormatError(rownum, f"bits must be 0/1, got {row[1:]}")
        if expected is not None and loc not in expected:
            unknown.append(loc)
            continue
        bsds[loc] = bits[0] << 3 | bits[1] << 2 | bits[2] << 1 | bits[3]
    missing = sorted(expected - bsds.keys()) if expected is not None else []
    if missing:
        log.warning("estimates file is missing %d location(s)", len(missing))
    return EstimatesTable(bsds, missing, unknown)


def write_estimates(path: str | Path, bsds: dict[int, Bsd]) -> None:
    """Write a descriptor table in the estimates CSV format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ESTIMATES_COLUMNS)
        for loc in sorted(bsds):
            d = bsds[loc]
            writer.writerow([loc, d >> 3 & 1, d >> 2 & 1, d >> 1 & 1, d & 1])
