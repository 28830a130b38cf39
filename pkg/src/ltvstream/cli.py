"""Command-line entry point.

Subcommands: ``synth`` (generate a synthetic stream), ``run`` (online
training with prequential evaluation), ``compare`` (delta table between two
metrics files), ``report`` (render figures from a run directory).

Exit codes: 0 success, 1 usage/config error, 2 I/O error, 3 encoder capacity
exhaustion, 4 sampler failure. The default output directory can be set with
the ``LTVSTREAM_OUT_DIR`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import runner, synth
from .data_io import DataFormatError
from .evaluation import read_metrics
from .nuts import SamplerError
from .preprocess import EncoderCapacityError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_CAPACITY = 3
EXIT_SAMPLER = 4


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(message)


def _default_out_dir() -> str:
    return os.environ.get("LTVSTREAM_OUT_DIR", "ltvstream_out")


def _build_parser() -> _Parser:
    parser = _Parser(prog="ltvstream", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic (category, target) CSV")
    group = p_synth.add_mutually_exclusive_group(required=True)
    group.add_argument("--spec", help="JSON generator spec")
    group.add_argument("--demo", action="store_true", help="use the bundled 5-category demo spec")
    p_synth.add_argument("--out", required=True, help="output CSV path")
    p_synth.add_argument("--n-rows", type=int, default=None, help="override row count")
    p_synth.add_argument("--seed", type=int, default=None, help="override seed")
    p_synth.add_argument("--emit-spec", default=None, help="also write the resolved spec JSON here")

    p_run = sub.add_parser("run", help="online training with prequential evaluation")
    p_run.add_argument("--manifest", help="rerun from a manifest file (other flags ignored)")
    p_run.add_argument("--data", help="input CSV")
    p_run.add_argument("--out-dir", default=None)
    p_run.add_argument("--model", choices=("student_t", "gaussian"), default="student_t")
    p_run.add_argument("--samples", type=int, default=500)
    p_run.add_argument("--warmup", type=int, default=1500)
    p_run.add_argument("--extra-warmup", type=int, default=500)
    p_run.add_argument("--max-tree-depth", type=int, default=10)
    p_run.add_argument("--target-accept", type=float, default=0.8)
    p_run.add_argument("--batch-size", type=int, default=3000)
    p_run.add_argument("--scaler", choices=("robust", "standard"), default="robust")
    p_run.add_argument("--capacity", type=int, default=1024)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--category-column", default="category")
    p_run.add_argument("--target-column", default="target")

    p_cmp = sub.add_parser("compare", help="per-batch and cumulative deltas of two metrics files")
    p_cmp.add_argument("metrics_a")
    p_cmp.add_argument("metrics_b")
    p_cmp.add_argument("--out", default=None, help="optionally write the delta table as CSV")

    p_rep = sub.add_parser("report", help="render figures from a run directory")
    p_rep.add_argument("run_dir")
    p_rep.add_argument("--out-dir", default=None)
    p_rep.add_argument("--compare", default=None, help="second run directory to overlay")
    return parser


def _cmd_synth(args) -> int:
    if args.demo:
        spec = synth.demo_spec(
            n_rows=args.n_rows if args.n_rows is not None else 18000,
            seed=args.seed if args.seed is not None else 0,
        )
    else:
        spec = synth.SynthSpec.from_json(args.spec)
        if args.n_rows is not None or args.seed is not None:
            data = json.loads(Path(args.spec).read_text())
            if args.n_rows is not None:
                data["n_rows"] = args.n_rows
            if args.seed is not None:
                data["seed"] = args.seed
            spec = synth.SynthSpec.from_dict(data)
    synth.generate(spec, args.out)
    if args.emit_spec:
        spec.to_json(args.emit_spec)
    print(f"wrote {spec.n_rows} rows to {args.out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    if args.manifest:
        manifest = json.loads(Path(args.manifest).read_text())
        config = runner.RunConfig.from_manifest(manifest)
    else:
        if not args.data:
            raise UsageError("run requires --data (or --manifest)")
        config = runner.RunConfig(
            source=args.data,
            out_dir=args.out_dir or _default_out_dir(),
            model=args.model,
            num_samples=args.samples,
            num_warmup=args.warmup,
            extra_warmup=args.extra_warmup,
            max_tree_depth=args.max_tree_depth,
            target_accept=args.target_accept,
            batch_size=args.batch_size,
            scaler=args.scaler,
            capacity=args.capacity,
            seed=args.seed,
            category_column=args.category_column,
            target_column=args.target_column,
        )
    result = runner.run(config)
    print(f"processed {len(result.records)} batches from {config.source}")
    for name, path in sorted(result.paths.items()):
        print(f"  {name}: {path}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    a = read_metrics(args.metrics_a)
    b = read_metrics(args.metrics_b)
    if len(a) != len(b):
        raise UsageError(
            f"batch counts differ: {len(a)} in {args.metrics_a}, {len(b)} in {args.metrics_b}"
        )
    if not a:
        raise UsageError("metrics files are empty")

    header = f"{'batch':>5} {'d_lppd':>14} {'d_mae':>12} {'d_rmse':>12}"
    print(f"deltas are A - B  (A = {args.metrics_a}, B = {args.metrics_b})")
    print(header)
    lines = []
    for ra, rb in zip(a, b):
        d_lppd = ra["lppd"] - rb["lppd"]
        d_mae = ra["mae"] - rb["mae"]
        d_rmse = ra["rmse"] - rb["rmse"]
        lines.append((ra["batch_index"], d_lppd, d_mae, d_rmse))
        print(f"{ra['batch_index']:>5} {d_lppd:>14.4f} {d_mae:>12.4f} {d_rmse:>12.4f}")

    final_a, final_b = a[-1], b[-1]
    print("cumulative (per-row, final):")
    summary = []
    for key, better_high in (("lppd_cum", True), ("mae_cum", False), ("rmse_cum", False)):
        delta = final_a[key] - final_b[key]
        if delta == 0:
            winner = "tie"
        elif (delta > 0) == better_high:
            winner = "A"
        else:
            winner = "B"
        summary.append((key, delta, winner))
        print(f"  {key}: {delta:+.6f}  -> {winner}")

    if args.out:
        with Path(args.out).open("w") as fh:
            fh.write("batch_index,d_lppd,d_mae,d_rmse\n")
            for row in lines:
                fh.write(f"{row[0]},{row[1]!r},{row[2]!r},{row[3]!r}\n")
    return EXIT_OK


def _cmd_report(args) -> int:
    from . import report  # import here: pulls in matplotlib

    written = report.render_run(args.run_dir, args.out_dir, args.compare)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "report":
            return _cmd_report(args)
        raise UsageError(f"unknown command {args.command!r}")
    except DataFormatError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, synth.SynthSpecError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except EncoderCapacityError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CAPACITY
    except SamplerError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_SAMPLER
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
