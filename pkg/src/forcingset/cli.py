"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 no flip after retraining,
4 numerical failure, 5 a run-time invariant failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import CsvSchema, gen_blobs, gen_bow_spamlike, gen_halfmoon, load_csv
from .errors import DataFormatError, NumericalError, StaleClaimError
from .harness import (
    DebugSetup,
    PoisonSetup,
    check_bound,
    precision_recall,
    report_csv,
    report_json,
    resolve_target,
    run_debug_experiment,
    run_poison_experiment,
)
from .mfs import UPDATE_MODES, MfsConfig, confidence_trajectory, construct_mfs
from .model import Claim, predict_proba
from .solver import train

EXIT_OK, EXIT_USAGE, EXIT_NO_FLIP, EXIT_NUMERIC, EXIT_ASSERT = 0, 2, 3, 4, 5
OUT_DIR_ENV = "FORCINGSET_OUT_DIR"
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# argument helpers


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text):
    """``0,1,5`` or an inclusive range ``0-19``."""
    out = []
    try:
        for part in text.split(","):
            if "-" in part.strip()[1:]:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            elif part.strip():
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers or ranges, got {text!r}")
    return out


def _add_common(p):
    p.add_argument("--out-dir", default=None,
                   help=f"output directory (default: ${OUT_DIR_ENV} or ./forcingset-out)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dry-run", action="store_true",
                   help="validate flags, print the resolved config and exit")


def _add_source(p, default_gen="halfmoon", default_n=100):
    g = p.add_argument_group("data source")
    g.add_argument("--data", type=Path, help="training CSV (header row required)")
    g.add_argument("--test-data", type=Path, help="CSV that row:<i> target selectors index")
    g.add_argument("--label-column", default="label")
    g.add_argument("--positive", default="1", help="label text for class 1")
    g.add_argument("--negative", default="0", help="label text for class 0")
    g.add_argument("--gen", choices=("halfmoon", "blobs", "bow"), default=default_gen)
    g.add_argument("--n", type=int, default=default_n, help="generated sample size")
    g.add_argument("--noise", type=float, default=0.2, help="half-moon jitter")
    g.add_argument("--separation", type=float, default=3.0, help="blob centre distance")
    g.add_argument("--vocab", type=int, default=50, help="bag-of-words vocabulary")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forcingset", description="Minimal forcing subset explanations."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain", help="build the MFS for one test point")
    _add_common(p)
    _add_source(p)
    p.add_argument("--target", default="misclassified:first",
                   help="row:<i> | point:<x0,x1,...> | misclassified:first | misclassified:conf=<p>")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=1e-4)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--update-mode", choices=UPDATE_MODES, default="newton-approx")
    p.add_argument("--max-set-size", type=int, default=None)
    p.add_argument("--inner-iters", type=int, default=20)
    p.add_argument("--grid-size", type=int, default=50, help="boundary grid resolution (d = 2)")

    p = sub.add_parser("debug", help="label-noise debugging: MFS vs random selection")
    _add_common(p)
    p.add_argument("--flip", "--fractions", dest="fractions", type=_float_list,
                   default=[0.1, 0.2, 0.3, 0.4], help="label flip fractions in (0, 0.5]")
    p.add_argument("--seeds", type=_int_list, default=None,
                   help="seed list or range, e.g. 0-19 (default: --seed only)")
    for name, default in vars(DebugSetup()).items():
        p.add_argument("--" + name.replace("_", "-"), type=type(default), default=default)

    p = sub.add_parser("poison", help="MFS size before and after a poisoning attack")
    _add_common(p)
    p.add_argument("--targets", type=int, default=5)
    for name, default in vars(PoisonSetup()).items():
        p.add_argument("--" + name.replace("_", "-"), type=type(default), default=default)

    p = sub.add_parser("bound", help="one-step Newton error versus its bound")
    _add_common(p)
    _add_source(p, default_n=50)
    p.add_argument("--alphas", type=_float_list, default=[0.1, 1.0, 10.0])
    p.add_argument("--probe", type=_float_list, default=None,
                   help="probe point for the model map (default: first instance)")

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out-dir", default=None)
    return parser


# --------------------------------------------------------------------------
# validation and shared plumbing


def _validate(args):
    c = args.command
    if c == "explain":
        if args.epsilon < 0:
            raise UsageError("--epsilon must be >= 0")
        if args.delta <= 0:
            raise UsageError("--delta must be > 0")
        if args.alpha <= 0:
            raise UsageError("--alpha must be > 0")
        if args.inner_iters < 1:
            raise UsageError("--inner-iters must be >= 1")
        if args.max_set_size is not None and args.max_set_size < 1:
            raise UsageError("--max-set-size must be >= 1")
    if c in ("explain", "bound") and args.data is None:
        if args.n <= 0 or (args.gen in ("halfmoon", "blobs") and args.n % 2):
            raise UsageError("--n must be a positive even number for this generator")
    if c == "debug":
        if not args.fractions:
            raise UsageError("--flip needs at least one fraction")
        for f in args.fractions:
            if not 0 < f <= 0.5:
                raise UsageError(f"flip fraction must be in (0, 0.5], got {f}")
        if args.max_targets < 1:
            raise UsageError("--max-targets must be >= 1")
    if c == "poison":
        if args.targets < 0:
            raise UsageError("--targets must be >= 0")
        if args.radius < 0:
            raise UsageError("--radius must be >= 0")
        if args.n <= 0 or args.n % 2:
            raise UsageError("--n must be a positive even number")
    if c == "bound":
        if not args.alphas or any(a <= 0 for a in args.alphas):
            raise UsageError("--alphas must be positive")


def _resolved(args) -> dict:
    cfg = {}
    for k, v in sorted(vars(args).items()):
        if k in ("out_dir", "dry_run"):
            continue
        cfg[k] = str(v) if isinstance(v, Path) else v
    return cfg


def _out_dir(args) -> Path:
    d = args.out_dir or os.environ.get(OUT_DIR_ENV) or "forcingset-out"
    path = Path(d)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(out: Path, name: str, text: str, written: list):
    (out / name).write_text(text, encoding="utf-8")
    written.append(name)


def _write_manifest(out: Path, args, written: list):
    doc = {
        "command": args.command,
        "resolved_config": _resolved(args),
        "seed": args.seed,
        "artifact_paths": sorted(written),
        "tool_version": __version__,
    }
    (out / MANIFEST).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_source(args):
    """Training set and the pool that ``row:<i>`` selectors index."""
    if args.data is not None:
        schema = CsvSchema(args.label_column, args.positive, args.negative)
        train_ds = load_csv(args.data, schema)
        pool = load_csv(args.test_data, schema) if args.test_data else train_ds
        return train_ds, pool
    if args.gen == "halfmoon":
        return gen_halfmoon(args.n, args.noise, args.seed), gen_halfmoon(args.n, args.noise, args.seed + 10_000)
    if args.gen == "blobs":
        return (gen_blobs(args.n, args.separation, 1.0, 2, args.seed),
                gen_blobs(args.n, args.separation, 1.0, 2, args.seed + 10_000))
    return (gen_bow_spamlike(args.n, args.vocab, args.seed),
            gen_bow_spamlike(args.n, args.vocab, args.seed + 10_000))


def _csv_text(header, rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# --------------------------------------------------------------------------
# commands


def cmd_explain(args, out: Path) -> int:
    train_ds, pool = _load_source(args)
    params = train(train_ds, args.alpha, tol=1e-10)
    try:
        x = resolve_target(args.target, pool, params)
    except (LookupError, ValueError) as exc:
        print(f"error: cannot resolve target: {exc}", file=sys.stderr)
        return EXIT_USAGE
    claim = Claim.from_model(x, params, args.epsilon)
    config = MfsConfig(
        epsilon=args.epsilon,
        delta=args.delta,
        max_set_size=args.max_set_size,
        update_mode=args.update_mode,
        inner_iters=args.inner_iters,
        alpha=args.alpha,
    )
    try:
        config.cap_for(train_ds.n_active)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    result = construct_mfs(train_ds, claim, config, args.seed, params=params)
    written: list[str] = []
    _write(out, "mfs_result.json", result.to_json() + "\n", written)
    traj = confidence_trajectory(result)
    ids = [""] + [str(i) for i in result.selected_ids]
    _write(out, "trajectory.csv",
           _csv_text(["step", "removed_id", "confidence"],
                     [[k, ids[k], repr(c)] for k, c in enumerate(traj)]), written)
    if train_ds.dim == 2:
        after = train(train_ds.remove(result.selected_ids) if len(result) else train_ds,
                      args.alpha, tol=1e-10, init=params)
        X = train_ds.X
        pad = 0.5
        gx = np.linspace(X[:, 0].min() - pad, X[:, 0].max() + pad, args.grid_size)
        gy = np.linspace(X[:, 1].min() - pad, X[:, 1].max() + pad, args.grid_size)
        rows = [[repr(float(a)), repr(float(b)),
                 repr(predict_proba((a, b), params)), repr(predict_proba((a, b), after))]
                for b in gy for a in gx]
        _write(out, "boundary_grid.csv",
               _csv_text(["x0", "x1", "p1_original", "p1_without_mfs"], rows), written)
    _write_manifest(out, args, written)
    print(f"|S| = {len(result)}  exit = {result.exit_reason}  flipped_on_retrain = {result.flipped_on_retrain}")
    return EXIT_OK if result.flipped_on_retrain else EXIT_NO_FLIP


def cmd_debug(args, out: Path) -> int:
    setup = DebugSetup(**{k: getattr(args, k) for k in vars(DebugSetup())})
    seeds = args.seeds if args.seeds else [args.seed]
    reports = run_debug_experiment(setup, args.fractions, seeds)
    written: list[str] = []
    _write(out, "debug_report.json", report_json("debug", reports) + "\n", written)
    _write(out, "debug_report.csv", report_csv("debug", reports), written)
    _write_manifest(out, args, written)
    ok = True
    for r in reports:
        for m in (r.mfs, r.random):
            if m is None:
                continue
            if precision_recall(r.bug_ids, m.selected_ids) != (m.precision, m.recall):
                ok = False
        if r.mfs is not None:
            print(f"flip={r.flip_fraction:.2f} seed={r.seed} k={r.mfs.top_k} "
                  f"precision mfs={r.mfs.precision:.3f} random={r.random.precision:.3f}")
        else:
            print(f"flip={r.flip_fraction:.2f} seed={r.seed} no-target")
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_poison(args, out: Path) -> int:
    setup = PoisonSetup(**{k: getattr(args, k) for k in vars(PoisonSetup())})
    entries = run_poison_experiment(args.targets, setup, args.seed)
    written: list[str] = []
    _write(out, "poison_report.json", report_json("poison", entries) + "\n", written)
    _write(out, "poison_report.csv", report_csv("poison", entries), written)
    _write_manifest(out, args, written)
    for e in entries:
        print(f"target={e.target_id} {e.status} clean={e.size_clean} poisoned={e.size_poisoned} rank={e.poison_rank}")
    ok = len(entries) == args.targets and all(
        e.status == "attack-failed" or 0 < e.size_poisoned for e in entries
    )
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_bound(args, out: Path) -> int:
    train_ds, _ = _load_source(args)
    probe = np.array(args.probe) if args.probe else None
    if probe is not None and probe.shape[0] != train_ds.dim:
        print(f"error: --probe needs {train_ds.dim} coordinates", file=sys.stderr)
        return EXIT_USAGE
    rows = check_bound(train_ds, args.alphas, probe)
    written: list[str] = []
    _write(out, "bound_report.json", report_json("bound", rows) + "\n", written)
    _write(out, "bound_report.csv", report_csv("bound", rows), written)
    _write_manifest(out, args, written)
    ok = True
    for r in rows:
        print(f"alpha={r.alpha:g} observed={r.observed_error:.3e} bound={r.bound_value:.3e} holds={r.holds}")
        if not r.holds:
            ok = False
            print(f"  bound violated at alpha={r.alpha:g}, instance {r.worst_id}", file=sys.stderr)
    by_alpha = sorted(rows, key=lambda r: r.alpha)
    for a, b in zip(by_alpha, by_alpha[1:]):
        if b.observed_error > a.observed_error:
            ok = False
            print(f"  observed error increased from alpha={a.alpha:g} to {b.alpha:g}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_ASSERT


COMMANDS = {"explain": cmd_explain, "debug": cmd_debug, "poison": cmd_poison, "bound": cmd_bound}


def _replay(args, parser) -> int:
    doc = json.loads(args.manifest.read_text(encoding="utf-8"))
    ns = parser.parse_args([doc["command"]])
    for k, v in doc["resolved_config"].items():
        if k in ("data", "test_data") and v not in (None, "None"):
            v = Path(v)
        elif v == "None":
            v = None
        setattr(ns, k, v)
    ns.out_dir = args.out_dir
    ns.dry_run = False
    return _run(ns)


def _run(args) -> int:
    try:
        _validate(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.dry_run:
        print(json.dumps({"command": args.command, "resolved_config": _resolved(args)},
                         indent=2, sort_keys=True))
        return EXIT_OK
    out = _out_dir(args)
    try:
        return COMMANDS[args.command](args, out)
    except (FileNotFoundError, DataFormatError, StaleClaimError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: --help exits 0, usage errors 2
        return int(exc.code or 0)
    if args.command == "replay":
        return _replay(args, parser)
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
