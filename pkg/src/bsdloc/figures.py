"""Render experiment outputs as PNG figures alongside their CSVs."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_METHOD_COLORS = {"turns_only": "0.6", "bsd_only": "#d8b832", "bsd_turns": "#2060c0"}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_bsd_distribution(rows: Sequence[Mapping], path: str | Path) -> Path:
    patterns = [r["pattern"] for r in rows]
    gt = [r["ground_truth"] for r in rows]
    est = [r["estimated"] for r in rows]
    x = np.arange(len(patterns))
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(x - 0.2, gt, width=0.4, label="ground truth", color="#2060c0")
    ax.bar(x + 0.2, est, width=0.4, label="estimated", color="#c03030")
    ax.set_xticks(x)
    ax.set_xticklabels(patterns, rotation=60, fontsize=8)
    ax.set_xlabel("descriptor pattern (front, back, left, right)")
    ax.set_ylabel("locations")
    ax.set_title("Descriptor distribution")
    ax.legend()
    return _save(fig, path)


def plot_accuracy_vs_length(rows: Sequence[tuple], path: str | Path) -> Path:
    """rows: (method, bucket, pct)."""
    methods = sorted({r[0] for r in rows}, key=lambda m: list(_METHOD_COLORS).index(m) if m in _METHOD_COLORS else 99)
    buckets = sorted({r[1] for r in rows}, key=lambda b: int(b.split("-")[1]))
    x = np.arange(len(buckets))
    width = 0.8 / max(len(methods), 1)
    fig, ax = plt.subplots(figsize=(8, 4))
    for i, m in enumerate(methods):
        pct = [next(r[2] for r in rows if r[0] == m and r[1] == b) for b in buckets]
        ax.bar(x + (i - (len(methods) - 1) / 2) * width, pct, width=width,
               label=m, color=_METHOD_COLORS.get(m))
    ax.set_xticks(x)
    ax.set_xticklabels(buckets)
    ax.set_xlabel("route length range")
    ax.set_ylabel("% correctly localized")
    ax.set_ylim(0, 100)
    ax.set_title("Localization accuracy vs route length")
    ax.legend()
    return _save(fig, path)


def plot_accuracy_vs_q(rows: Sequence[tuple], path: str | Path) -> Path:
    """rows: (q, bucket, pct)."""
    qs = sorted({r[0] for r in rows})
    buckets = sorted({r[1] for r in rows}, key=lambda b: int(b.split("-")[1]))
    fig, ax = plt.subplots(figsize=(8, 4))
    for b in buckets:
        pct = [next(r[2] for r in rows if r[0] == q and r[1] == b) for q in qs]
        ax.plot(qs, pct, marker="o", label=b)
    ax.set_xlabel("detector accuracy q")
    ax.set_ylabel("% correctly localized")
    ax.set_ylim(0, 102)
    ax.set_title("Localization accuracy vs detector accuracy")
    ax.legend(title="route length", fontsize=8)
    return _save(fig, path)


def plot_hamming_histogram(rows: Sequence[tuple], summary: Mapping, path: str | Path) -> Path:
    """rows: (route_length, turn_filter, distance, count, is_correct)."""
    lengths = sorted({r[0] for r in rows})
    fig, axes = plt.subplots(2, len(lengths), figsize=(5 * len(lengths), 6), squeeze=False)
    for col, L in enumerate(lengths):
        for row_i, flag in enumerate(("off", "on")):
            ax = axes[row_i][col]
            sub = [(r[2], r[3]) for r in rows if r[0] == L and r[1] == flag]
            if sub:
                dists, counts = zip(*sub)
                ax.bar(dists, counts, width=1.0, color="#2060c0")
            correct = summary["lengths"][L]["correct_distance"]
            ax.axvline(correct, color="#c03030", linestyle="--", label=f"correct route (H={correct})")
            ax.set_title(f"length {L}, turn filter {flag}")
            ax.set_xlabel("Hamming distance")
            ax.set_ylabel("routes")
            ax.legend(fontsize=8)
    return _save(fig, path)


def plot_snapshot(geojson: Mapping, path: str | Path) -> Path:
    """Scatter the per-location closeness; highlight the current best route."""
    xs, ys, vals = [], [], []
    cur = None
    line = None
    for feat in geojson["features"]:
        geom = feat["geometry"]
        props = feat["properties"]
        if geom["type"] == "Point":
            x, y = geom["coordinates"]
            xs.append(x)
            ys.append(y)
            vals.append(props.get("closeness"))
            if props.get("is_current"):
                cur = (x, y, props.get("status"))
        elif geom["type"] == "LineString":
            line = np.array(geom["coordinates"])
    finite = [v for v in vals if v is not None]
    vmax = max(finite) if finite else 1
    colors = [v if v is not None else vmax for v in vals]
    fig, ax = plt.subplots(figsize=(7, 7))
    sc = ax.scatter(xs, ys, c=colors, cmap="viridis_r", s=12, marker="s")
    fig.colorbar(sc, ax=ax, label="best containing-route Hamming distance")
    if line is not None:
        ax.plot(line[:, 0], line[:, 1], color="#c03030", linewidth=2, label="best route")
    if cur is not None:
        ax.plot(cur[0], cur[1], "o", color="red" if cur[2] == "localized" else "orange",
                markersize=10, label=f"current ({cur[2]})")
    ax.set_aspect("equal")
    ax.set_title("Localization snapshot")
    ax.legend(fontsize=8)
    return _save(fig, path)
