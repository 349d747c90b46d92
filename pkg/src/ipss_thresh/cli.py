"""Command-line entry point: ``ipss select | simulate | benchmark``.

Exit codes: 0 success, 1 data or runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .benchmark import BenchmarkConfig, run_benchmark, summary_csv
from .control import select_at_efp, select_at_fdr
from .dataio import DataError, load_csv
from .ipss import IpssConfig, run_ipss
from .simgen import SimConfig, generate_trial

SCHEMA_VERSION = 1
EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("ipss_thresh")


class UsageError(Exception):
    pass


def _default_threads() -> int:
    raw = os.environ.get("IPSS_THREADS")
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"IPSS_THREADS must be an integer, got {raw!r}")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipss", description="Feature selection with false positive control.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sel = sub.add_parser("select", help="run feature selection on a CSV dataset")
    sel.add_argument("--data", required=True, help="samples-by-features CSV with a header row")
    resp = sel.add_mutually_exclusive_group(required=True)
    resp.add_argument("--response", help="name of the response column in --data")
    resp.add_argument("--response-file", help="one-column CSV holding the response")
    sel.add_argument("--response-kind", choices=["auto", "continuous", "binary"], default="auto")
    sel.add_argument("--method", choices=["gb", "rf"], default="gb")
    target = sel.add_mutually_exclusive_group(required=True)
    target.add_argument("--target-efp", type=float, help="target expected number of false positives")
    target.add_argument("--target-fdr", type=float, help="target false discovery rate in (0, 1)")
    sel.add_argument("--B", type=_positive_int, default=None, help="subsample pairs (default 100 gb, 50 rf)")
    sel.add_argument("--cutoff", type=float, default=0.05)
    sel.add_argument("--delta", type=float, default=1.0)
    sel.add_argument("--grid-size", type=int, default=100)
    sel.add_argument("--seed", type=int, default=0)
    sel.add_argument("--threads", type=_positive_int, default=None)
    sel.add_argument("--out", help="output file (default stdout)")
    sel.add_argument("--format", choices=["json", "csv"], default="json")
    sel.add_argument("--no-timing", action="store_true", help="write runtime_seconds as null")

    sim = sub.add_parser("simulate", help="write simulated trials as CSV + JSON pairs")
    sim.add_argument("--n", type=_positive_int, default=500)
    sim.add_argument("--p", type=_positive_int, default=500)
    sim.add_argument("--task", choices=["regression", "classification"], default="regression")
    sim.add_argument("--trials", type=_positive_int, default=1)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--source", default="surrogate", help="feature CSV to sample from, or 'surrogate'")
    sim.add_argument("--out-dir", required=True)

    bench = sub.add_parser("benchmark", help="Monte Carlo error-control benchmark")
    bench.add_argument("--trials", type=_positive_int, default=10)
    bench.add_argument("--n", type=_positive_int, default=500)
    bench.add_argument("--p", type=_positive_int, default=500)
    bench.add_argument("--task", choices=["regression", "classification"], default="regression")
    bench.add_argument("--method", choices=["gb", "rf"], default="gb")
    bench.add_argument("--target-efp", type=float, nargs="+", default=[])
    bench.add_argument("--target-fdr", type=float, nargs="+", default=[])
    bench.add_argument("--B", type=_positive_int, default=None)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--source", default="surrogate")
    bench.add_argument("--threads", type=_positive_int, default=None)
    bench.add_argument("--out", required=True, help="summary CSV path; a JSON with per-trial records goes next to it")
    return parser


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _load_source(source: str):
    if source == "surrogate":
        return None
    path = Path(source)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    frame = pd.read_csv(path).apply(pd.to_numeric, errors="coerce").dropna()
    return frame.to_numpy(dtype=float)


def build_report(d, result, args, outcome) -> dict:
    names = d.feature_names
    selected = set(int(j) for j in outcome.selected)
    records = [
        {"name": names[j], "index": j, "efp": float(result.efp[j]),
         "q_value": float(result.q_values[j]), "selected": j in selected}
        for j in range(d.p)
    ]
    records.sort(key=lambda r: (r["efp"], r["name"]))
    target_kind = "efp" if args.target_efp is not None else "fdr"
    return {
        "schema_version": SCHEMA_VERSION,
        "method": "ipss" + args.method,
        "config": {
            "B": result.B,
            "cutoff": args.cutoff,
            "delta": args.delta,
            "grid_size": args.grid_size,
            "m": 3,
            "seed": args.seed,
            "response_kind": d.response_kind,
        },
        "target": {"kind": target_kind,
                   "value": args.target_efp if target_kind == "efp" else args.target_fdr},
        "n_samples": d.n,
        "n_features": d.p,
        "dropped_rows": d.dropped_rows,
        "preselected_count": int(result.preselected.size),
        "selected_count": len(selected),
        "t_used": outcome.t_used,
        "fdr_estimate": outcome.fdr_estimate,
        "lambda_interval": list(result.lambda_interval),
        "integral_value": result.integral_value,
        "k_star": result.k_star,
        "runtime_seconds": None if args.no_timing else result.runtime_seconds,
        "warnings": list(result.warnings),
        "features": records,
    }


def report_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["name", "index", "efp", "q_value", "selected"])
    for r in report["features"]:
        writer.writerow([r["name"], r["index"], repr(r["efp"]), repr(r["q_value"]), int(r["selected"])])
    return buf.getvalue()


def cmd_select(args) -> int:
    if args.target_efp is not None and args.target_efp < 0:
        raise UsageError("--target-efp must be nonnegative")
    if args.target_fdr is not None and not 0 < args.target_fdr < 1:
        raise UsageError("--target-fdr must lie in (0, 1)")
    if args.grid_size < 2 or args.cutoff <= 0:
        raise UsageError("--grid-size must be >= 2 and --cutoff positive")
    threads = args.threads or _default_threads()

    d = load_csv(args.data, response=args.response, response_file=args.response_file,
                 response_kind=args.response_kind)
    cfg = IpssConfig(B=args.B, cutoff=args.cutoff, delta=args.delta, K=args.grid_size,
                     backend=args.method, seed=args.seed, n_jobs=threads)
    result = run_ipss(d, cfg)
    if args.target_efp is not None:
        outcome = select_at_efp(result.efp, args.target_efp)
    else:
        outcome = select_at_fdr(result.efp, args.target_fdr)
    report = build_report(d, result, args, outcome)
    text = json.dumps(report, indent=2) + "\n" if args.format == "json" else report_csv(report)
    _write(text, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    source = _load_source(args.source)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(int(args.seed)).generate_state(args.trials, dtype=np.uint64)
    try:
        configs = [SimConfig(n=args.n, p=args.p, task=args.task, seed=int(s)) for s in seeds]
    except ValueError as exc:
        raise UsageError(str(exc))
    for i, cfg in enumerate(configs):
        trial = generate_trial(source, cfg)
        csv_path, _ = trial.save(out_dir / f"trial_{i:04d}")
        log.info("wrote %s", csv_path)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    if not args.target_efp and not args.target_fdr:
        raise UsageError("give --target-efp and/or --target-fdr")
    if any(t < 0 for t in args.target_efp) or any(not 0 < a < 1 for a in args.target_fdr):
        raise UsageError("E(FP) targets must be >= 0 and FDR targets in (0, 1)")
    try:
        SimConfig(n=args.n, p=args.p, task=args.task)
    except ValueError as exc:
        raise UsageError(str(exc))
    cfg = BenchmarkConfig(trials=args.trials, n=args.n, p=args.p, task=args.task, method=args.method,
                          target_efp=tuple(args.target_efp), target_fdr=tuple(args.target_fdr),
                          seed=args.seed, n_jobs=args.threads or _default_threads(), B=args.B)
    source = _load_source(args.source)

    def progress(i, record):
        log.info("trial %d/%d done in %.1fs", i + 1, cfg.trials, record["runtime_seconds"])

    out = run_benchmark(cfg, source, progress)
    out_path = Path(args.out)
    out_path.write_text(summary_csv(out["summary"]))
    side = {"schema_version": SCHEMA_VERSION, "config": {**cfg.__dict__, "source": args.source}, **out}
    out_path.with_suffix(".json").write_text(json.dumps(side, indent=2) + "\n")
    return EXIT_OK


COMMANDS = {"select": cmd_select, "simulate": cmd_simulate, "benchmark": cmd_benchmark}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on bad flags
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ipss {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValueError, OSError) as exc:
        print(f"ipss {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
