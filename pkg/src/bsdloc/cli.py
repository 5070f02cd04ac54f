"""Command-line driver.

Subcommands: ingest, synth, bsd, build-db, localize, exp-length, exp-q,
exp-hamming, exp-dist, snapshot.  Experiment commands write CSV results plus
rendered PNG figures next to them (suppress with --no-figures).  Exit code 0
on success; failures print one machine-readable JSON line to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from bsdloc import experiments as exp
from bsdloc import figures
from bsdloc.detector import DetectorModel, write_estimates
from bsdloc.geometry import SectorSpec
from bsdloc.localizer import SessionConfig
from bsdloc.mapio import (
    MapBundle,
    SyntheticCityParams,
    ingest_osm,
    synthesize_bundle,
)
from bsdloc.routes import (
    BsdTable,
    RouteDatabase,
    RouteLimitExceeded,
    build_database_files,
)

log = logging.getLogger(__name__)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", type=Path, default=Path("."), help="output file or directory")
    p.add_argument("--config", type=Path, default=None, help="experiment config (TOML or JSON)")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")


def _load_config(args: argparse.Namespace) -> exp.ExperimentConfig:
    cfg = exp.ExperimentConfig.from_file(args.config) if args.config else exp.ExperimentConfig()
    if args.seed is not None:
        cfg = exp.ExperimentConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    return cfg


def _bundle_and_table(args: argparse.Namespace, cfg: exp.ExperimentConfig) -> tuple[MapBundle, BsdTable]:
    bundle = MapBundle.load(args.map)
    table = BsdTable(bundle, cfg.sector(), cfg.gap_min_degrees)
    return bundle, table


def _out_dir(args: argparse.Namespace) -> Path:
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(args: argparse.Namespace) -> int:
    bundle = ingest_osm(args.osm, spacing=args.spacing)
    bundle.save(args.out)
    print(
        json.dumps(
            {
                "samples": bundle.sample_count,
                "directed_locations": len(bundle.directed),
                "junctions": len(bundle.junction_ids),
                "buildings": len(bundle.buildings),
                "skipped_ways": bundle.meta.get("skipped_ways", 0),
                "out": str(args.out),
            }
        )
    )
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    params = SyntheticCityParams(
        rows=args.rows,
        cols=args.cols,
        block_size=args.block,
        coverage=args.coverage,
        gap_frequency=args.gap_frequency,
        seed=args.seed if args.seed is not None else 0,
        block_jitter=args.block_jitter,
        node_jitter=args.node_jitter,
        edge_removal=args.edge_removal,
    )
    bundle = synthesize_bundle(params, spacing=args.spacing)
    bundle.save(args.out)
    print(
        json.dumps(
            {
                "samples": bundle.sample_count,
                "directed_locations": len(bundle.directed),
                "junctions": len(bundle.junction_ids),
                "buildings": len(bundle.buildings),
                "out": str(args.out),
            }
        )
    )
    return 0


def cmd_bsd(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    bundle, table = _bundle_and_table(args, cfg)
    write_estimates(args.out, table.directed_table())
    print(json.dumps({"locations": len(bundle.directed), "out": str(args.out)}))
    return 0


def cmd_build_db(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    bundle, table = _bundle_and_table(args, cfg)
    db = RouteDatabase(bundle, table, cfg.tau)
    lengths = _parse_lengths(args.lengths)
    report = build_database_files(db, args.out, lengths, limit=args.limit)
    print(json.dumps(report, indent=2))
    return 0


def _parse_lengths(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return sorted(set(out))


def cmd_localize(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    bundle, table = _bundle_and_table(args, cfg)
    db = RouteDatabase(bundle, table, cfg.tau)
    codec = db.codec
    if args.route:
        route = tuple(int(v) for v in args.route.split(","))
    else:
        route = exp.sample_test_routes(bundle, cfg.max_route_length, 1, cfg.seed)[0]
    model = DetectorModel(q_junc=args.q, q_gap=args.q, seed=cfg.seed)
    session_cfg = cfg.session_config()
    index_for = exp.IndexCache(db, build_global=args.method == "bsd_only")
    t0 = time.perf_counter()
    session, results = exp.replay_session(
        index_for, codec, route, model, session_cfg, args.method
    )
    elapsed = time.perf_counter() - t0
    out = _out_dir(args)
    path = exp.write_csv(
        out / "session_log.csv",
        exp.SESSION_LOG_HEADER,
        exp.session_log_rows(results),
        cfg.config_hash(bundle.map_hash()),
    )
    declared = next((r.record.step for r in results if r.status == "localized"), None)
    print(
        json.dumps(
            {
                "route": list(route),
                "status": session.status,
                "localized_at_step": declared,
                "seconds": round(elapsed, 3),
                "log": str(path),
            }
        )
    )
    return 0


def cmd_exp_dist(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    bundle, table = _bundle_and_table(args, cfg)
    model = DetectorModel(q_junc=args.q, q_gap=args.q, seed=cfg.seed)
    rows = exp.bsd_distribution(bundle, table, model)
    out = _out_dir(args)
    chash = cfg.config_hash(bundle.map_hash())
    path = exp.write_csv(
        out / "bsd_distribution.csv",
        ("pattern", "ground_truth", "estimated"),
        [(r["pattern"], r["ground_truth"], r["estimated"]) for r in rows],
        chash,
    )
    written = {"csv": str(path)}
    if not args.no_figures:
        written["figure"] = str(figures.plot_bsd_distribution(rows, out / "bsd_distribution.png"))
    print(json.dumps(written))
    return 0


def cmd_exp_length(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    bundle, table = _bundle_and_table(args, cfg)
    variants = [exp.Variant(m, args.q, m) for m in exp.METHODS]
    results = exp.run_accuracy_experiment(bundle, table, cfg, variants)
    rows = exp.accuracy_vs_length_rows(results, cfg.buckets)
    out = _out_dir(args)
    chash = cfg.config_hash(bundle.map_hash())
    path = exp.write_csv(out / "accuracy_vs_length.csv", ("method", "bucket", "pct_localized"), rows, chash)
    written = {"csv": str(path)}
    if not args.no_figures:
        written["figure"] = str(figures.plot_accuracy_vs_length(rows, out / "accuracy_vs_length.png"))
    print(json.dumps(written))
    return 0


def cmd_exp_q(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    bundle, table = _bundle_and_table(args, cfg)
    variants = [exp.Variant(f"q={q}", q, "bsd_turns") for q in cfg.q_values]
    results = exp.run_accuracy_experiment(bundle, table, cfg, variants)
    rows = exp.accuracy_vs_q_rows(results, cfg.q_values, cfg.buckets)
    out = _out_dir(args)
    chash = cfg.config_hash(bundle.map_hash())
    path = exp.write_csv(out / "accuracy_vs_q.csv", ("q", "bucket", "pct_localized"), rows, chash)
    written = {"csv": str(path)}
    if not args.no_figures:
        written["figure"] = str(figures.plot_accuracy_vs_q(rows, out / "accuracy_vs_q.png"))
    print(json.dumps(written))
    return 0


def cmd_exp_hamming(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    bundle, table = _bundle_and_table(args, cfg)
    lengths = _parse_lengths(args.lengths)
    rows, summary = exp.hamming_histogram(bundle, table, cfg, lengths)
    out = _out_dir(args)
    chash = cfg.config_hash(bundle.map_hash())
    path = exp.write_csv(
        out / "hamming_histogram.csv",
        ("route_length", "turn_filter", "hamming_distance", "candidate_count", "is_correct_distance"),
        rows,
        chash,
    )
    written = {"csv": str(path), "summary": summary}
    if not args.no_figures:
        written["figure"] = str(
            figures.plot_hamming_histogram(rows, summary, out / "hamming_histogram.png")
        )
    print(json.dumps(written))
    return 0


def cmd_snapshot(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    bundle, table = _bundle_and_table(args, cfg)
    db = RouteDatabase(bundle, table, cfg.tau)
    codec = db.codec
    if args.route:
        route = tuple(int(v) for v in args.route.split(","))
    else:
        route = exp.sample_test_routes(bundle, cfg.max_route_length, 1, cfg.seed)[0]
    step = min(args.step, len(route))
    model = DetectorModel(q_junc=args.q, q_gap=args.q, seed=cfg.seed)
    index_for = exp.IndexCache(db)
    session, results = exp.replay_session(
        index_for, codec, route[:step], model, cfg.session_config()
    )
    length, desc, pattern = session._query()
    geo = exp.snapshot_geojson(
        bundle,
        index_for(length),
        desc,
        pattern,
        session.status,
        current_sample=route[step - 1],
        best_route=results[-1].record.top,
    )
    out = _out_dir(args)
    path = out / f"snapshot_step{step:03d}.geojson"
    path.write_text(json.dumps(geo))
    written = {"geojson": str(path), "status": session.status}
    if not args.no_figures:
        written["figure"] = str(figures.plot_snapshot(geo, out / f"snapshot_step{step:03d}.png"))
    print(json.dumps(written))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bsdloc",
        description="Route localization from binary semantic descriptors on 2-D maps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a map from an OSM XML extract")
    p.add_argument("--osm", required=True, type=Path)
    p.add_argument("--spacing", type=float, default=10.0)
    _add_common(p)

    p = sub.add_parser("synth", help="generate a synthetic grid city map")
    p.add_argument("--rows", type=int, default=5)
    p.add_argument("--cols", type=int, default=5)
    p.add_argument("--block", type=float, default=100.0)
    p.add_argument("--coverage", type=float, default=1.0)
    p.add_argument("--gap-frequency", type=float, default=0.0)
    p.add_argument("--block-jitter", type=float, default=0.0)
    p.add_argument("--node-jitter", type=float, default=0.0)
    p.add_argument("--edge-removal", type=float, default=0.0)
    p.add_argument("--spacing", type=float, default=10.0)
    _add_common(p)

    p = sub.add_parser("bsd", help="write the ground-truth descriptor table CSV")
    p.add_argument("--map", required=True, type=Path)
    _add_common(p)

    p = sub.add_parser("build-db", help="enumerate routes and persist database files")
    p.add_argument("--map", required=True, type=Path)
    p.add_argument("--lengths", default="1-40", help="e.g. 1-40 or 15,30")
    p.add_argument("--limit", type=int, default=None, help="truncate each length at this many routes")
    _add_common(p)

    p = sub.add_parser("localize", help="replay one route through a session")
    p.add_argument("--map", required=True, type=Path)
    p.add_argument("--route", default=None, help="comma-separated sample ids (default: sampled)")
    p.add_argument("--q", type=float, default=0.75)
    p.add_argument("--method", choices=exp.METHODS, default="bsd_turns")
    _add_common(p)

    p = sub.add_parser("exp-length", help="accuracy vs route length for all methods")
    p.add_argument("--map", required=True, type=Path)
    p.add_argument("--q", type=float, default=0.75)
    _add_common(p)

    p = sub.add_parser("exp-q", help="accuracy vs detector accuracy sweep")
    p.add_argument("--map", required=True, type=Path)
    _add_common(p)

    p = sub.add_parser("exp-hamming", help="Hamming distance histograms for one route")
    p.add_argument("--map", required=True, type=Path)
    p.add_argument("--lengths", default="15,30")
    _add_common(p)

    p = sub.add_parser("exp-dist", help="descriptor distribution histogram")
    p.add_argument("--map", required=True, type=Path)
    p.add_argument("--q", type=float, default=0.75)
    _add_common(p)

    p = sub.add_parser("snapshot", help="per-location closeness GeoJSON at one step")
    p.add_argument("--map", required=True, type=Path)
    p.add_argument("--route", default=None)
    p.add_argument("--step", type=int, default=2)
    p.add_argument("--q", type=float, default=0.75)
    _add_common(p)

    return parser


_COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "bsd": cmd_bsd,
    "build-db": cmd_build_db,
    "localize": cmd_localize,
    "exp-length": cmd_exp_length,
    "exp-q": cmd_exp_q,
    "exp-hamming": cmd_exp_hamming,
    "exp-dist": cmd_exp_dist,
    "snapshot": cmd_snapshot,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except RouteLimitExceeded as exc:
        print(json.dumps({"error": "route_limit", "command": args.command, "message": str(exc)}),
              file=sys.stderr)
        return 3
    except Exception as exc:  # surfaced as one machine-readable line
        print(
            json.dumps(
                {"error": type(exc).__name__, "command": args.command, "message": str(exc)}
            ),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
