"""Command-line entry point.

Exit codes: 0 success, 2 input error, 3 infeasible day, 4 provider failure.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import (DaySynthesisError, IdentityError, InfeasibleError, OsmParseError, ProviderError,
                     RouteSamplingError, RoutingError, ScheduleError)
from .evaluation import extract_features, fix_kinematics, holdout_accuracy, summarize_abs_accel
from .formats import FORMATS, SUFFIX, dumps, read_trajectory, write_trajectory
from .identity import (build_identity, identity_from_dict, identity_to_dict, two_state_config, weekday_config,
                       weekend_config)
from .kinematics import Fix
from .obfuscation import FudgerState, fudge
from .osm import parse_extract, read_snapshot, write_snapshot
from .pipeline import SynthConfig, synthesize_day
from .traffic import OfflineProvider, RemoteProvider

log = logging.getLogger("mobisynth")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_PROVIDER = 0, 2, 3, 4
IDENTITY_FORMAT = "mobisynth-identity"
CONFIGS = {"weekday": weekday_config, "two-state": two_state_config}


class InputError(Exception):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _need_file(path: str | Path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{p}: no such file")
    return p


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")


# --- commands -------------------------------------------------------------------

def cmd_ingest(args: argparse.Namespace) -> int:
    src = _need_file(args.extract)
    try:
        pois, graph = parse_extract(src)
    except OsmParseError as e:
        raise InputError(f"{src}: {e}") from e
    write_snapshot(args.output, pois, graph)
    print(f"pois {len(pois)} vertices {len(graph.vertices)} edges {len(graph.edges)} "
          f"stop_nodes {len(graph.stop_nodes)}")
    return EXIT_OK


def cmd_identity(args: argparse.Namespace) -> int:
    snap = _need_file(args.snapshot)
    pois, _ = _load_snapshot(snap)
    try:
        weekday = build_identity(pois, CONFIGS[args.config](), args.seed)
        weekend = build_identity(pois, weekend_config(), args.seed) if args.config == "weekday" else None
    except IdentityError as e:
        raise InputError(str(e)) from e
    doc = {
        "format": IDENTITY_FORMAT,
        "version": 1,
        "snapshot": os.path.relpath(snap.resolve(), Path(args.output).resolve().parent),
        "snapshot_sha256": _sha256(snap),
        "seed": args.seed,
        "weekday": identity_to_dict(weekday),
        "weekend": identity_to_dict(weekend) if weekend is not None else None,
    }
    _write_json(Path(args.output), doc)
    print(f"states weekday {len(weekday)}" + (f" weekend {len(weekend)}" if weekend else ""))
    return EXIT_OK


def _load_snapshot(path: Path):
    try:
        return read_snapshot(path)
    except (ValueError, KeyError, json.JSONDecodeError) as e:
        raise InputError(f"{path}: not a valid snapshot ({e})") from e


def _load_identity_doc(path: Path) -> dict:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON ({e})") from e
    if doc.get("format") != IDENTITY_FORMAT:
        raise InputError(f"{path}: not an identity document")
    return doc


def cmd_synth(args: argparse.Namespace) -> int:
    ident_path = _need_file(args.identity)
    doc = _load_identity_doc(ident_path)
    try:
        day = dt.date.fromisoformat(args.date)
    except ValueError as e:
        raise InputError(f"bad --date {args.date!r}: expected YYYY-MM-DD") from e
    snap = Path(args.snapshot) if args.snapshot else ident_path.resolve().parent / doc["snapshot"]
    snap = _need_file(snap)
    _, graph = _load_snapshot(snap)
    weekend = day.weekday() >= 5 and doc.get("weekend") is not None
    try:
        identity = identity_from_dict(doc["weekend"] if weekend else doc["weekday"])
    except (KeyError, ValueError, TypeError) as e:
        raise InputError(f"{ident_path}: malformed identity ({e})") from e
    formats = _parse_formats(args.formats)

    if args.provider == "remote":
        provider = RemoteProvider(cache_dir=args.cache_dir)
    else:
        provider = OfflineProvider(graph)
    traj = synthesize_day(identity, day, graph, provider, SynthConfig(gps_sigma_m=args.gps_sigma),
                          rng_seed=args.seed, identity_ref=ident_path.name)

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"trajectory-{day.isoformat()}"
    files = {}
    for fmt in formats:
        p = out / f"{stem}{SUFFIX[fmt]}"
        p.write_text(dumps(fmt, traj), encoding="utf-8", newline="\n")
        files[fmt] = p.name
    sched_doc = traj.schedule.to_dict(identity) if traj.schedule else {}
    sched_doc["legs"] = [
        {"from": l.from_visit, "to": l.to_visit, "scheduled_departure": l.scheduled_departure,
         "scheduled_arrival": l.scheduled_arrival, "departure": l.departure, "arrival": l.arrival,
         "steps": len(l.steps)}
        for l in traj.legs
    ]
    _write_json(out / f"schedule-{day.isoformat()}.json", sched_doc)
    manifest = {
        "command": "synth",
        "inputs": {
            "identity": ident_path.name,
            "identity_sha256": _sha256(ident_path),
            "snapshot": snap.name,
            "snapshot_sha256": _sha256(snap),
            "date": day.isoformat(),
            "weekend_machine": weekend,
        },
        "seed": args.seed,
        "provider": args.provider,
        "gps_sigma_m": args.gps_sigma,
        "formats": list(formats),
        "outputs": files,
        "versions": {"mobisynth": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
    }
    _write_json(out / "manifest.json", manifest)
    print(f"fixes {len(traj.fixes)} legs {len(traj.legs)} -> {out}")
    return EXIT_OK


def _parse_formats(text: str) -> tuple[str, ...]:
    fmts = tuple(dict.fromkeys(s.strip().lower() for s in text.split(",") if s.strip()))
    bad = [f for f in fmts if f not in FORMATS]
    if bad or not fmts:
        raise InputError(f"unknown format(s) {bad}; choose from {', '.join(FORMATS)}")
    return fmts


def _trajectory_files(d: str) -> list[Path]:
    p = Path(d)
    if not p.is_dir():
        raise InputError(f"{p}: no such directory")
    files = sorted(f for f in p.iterdir() if f.suffix.lower() in (".geojson", ".gpx", ".csv"))
    if not files:
        raise InputError(f"{p}: no trajectory files")
    return files


def _load_routes(files: list[Path]) -> list[list[Fix]]:
    routes = []
    for f in files:
        try:
            fx = read_trajectory(f)
        except (ValueError, KeyError) as e:
            raise InputError(f"{f}: {e}") from e
        if len(fx) < 2:
            raise InputError(f"{f}: fewer than two fixes")
        routes.append(fx)
    return routes


def _accels(route: list[Fix]) -> np.ndarray:
    return fix_kinematics(route)[2]


def cmd_eval(args: argparse.Namespace) -> int:
    real = _load_routes(_trajectory_files(args.real))
    synth = _load_routes(_trajectory_files(args.synthetic))
    for name, routes in (("real", real), ("synthetic", synth)):
        m, med, sd = summarize_abs_accel([_accels(r) for r in routes])
        print(f"{name}: routes {len(routes)} |a| mean {m:.4f} median {med:.4f} std {sd:.4f}")
    X = [extract_features(r) for r in real + synth]
    y = [0] * len(real) + [1] * len(synth)
    n_test = max(1, round(len(X) * args.test_fraction))
    if len(X) - n_test < args.k:
        raise InputError(f"need more than {args.k + n_test - 1} routes in total for k={args.k}")
    acc = holdout_accuracy(X, y, args.k, args.iterations, args.test_fraction, args.seed)
    print(f"knn k={args.k} held-out accuracy {acc:.4f} over {args.iterations} splits")
    return EXIT_OK


def cmd_fudge(args: argparse.Namespace) -> int:
    src = _need_file(args.input)
    try:
        fixes = read_trajectory(src)
    except (ValueError, KeyError) as e:
        raise InputError(f"{src}: {e}") from e
    state = FudgerState(grid_radius_m=float(args.grid), seed=args.seed)
    out = [Fix(f.t, fudge(f.point, state, f.t), f.speed, f.accel) for f in fixes]
    try:
        write_trajectory(args.output, out)
    except ValueError as e:
        raise InputError(str(e)) from e
    print(f"fudged {len(out)} fixes at grid {args.grid} m")
    return EXIT_OK


# --- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mobisynth", description="Synthetic driving trajectories from identity models.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse an OSM XML extract into a snapshot")
    p.add_argument("extract")
    p.add_argument("-o", "--output", required=True, help="snapshot JSON path")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("identity", help="build a user identity from a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", choices=sorted(CONFIGS), default="weekday")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_identity)

    p = sub.add_parser("synth", help="synthesize one day of fixes")
    p.add_argument("--identity", required=True)
    p.add_argument("--date", required=True, help="YYYY-MM-DD (UTC day)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--provider", choices=("offline", "remote"), default="offline")
    p.add_argument("--snapshot", help="snapshot to route on (default: the one named in the identity)")
    p.add_argument("--formats", default=",".join(FORMATS), help="comma list of geojson,gpx,csv")
    p.add_argument("--gps-sigma", type=float, default=SynthConfig().gps_sigma_m, help="GPS noise std in m")
    p.add_argument("--cache-dir", default=None, help="response cache for the remote provider")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="compare two sets of trajectories")
    p.add_argument("--real", required=True)
    p.add_argument("--synthetic", required=True)
    p.add_argument("--k", type=int, choices=(1, 10), default=1)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fudge", help="coarsen every fix through the location fudger")
    p.add_argument("--grid", type=float, required=True, help="grid size in m, e.g. 500 or 5000")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_fudge)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (InfeasibleError, RouteSamplingError, DaySynthesisError, ScheduleError) as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ProviderError as e:
        print(f"provider failure: {e}", file=sys.stderr)
        return EXIT_PROVIDER
    except RoutingError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
