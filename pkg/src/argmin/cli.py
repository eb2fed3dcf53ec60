"""Command-line entry point.

Subcommands:
  run    -- execute one experiment (first grid point or --eps) and write CSV
  sweep  -- execute every grid point, write per-point CSVs plus summary.csv
  verify -- run the invariant suite and print a pass/fail table
  rate   -- fit the empirical complexity exponent from a sweep directory

Exit codes: 0 success, 2 configuration error, 3 algorithm abort,
4 verification failure.
"""

import argparse
import os
import sys

from .errors import AlgorithmAbort
from .harness import (ConfigError, ExperimentConfig, emit_csv, estimate_rate,
                      read_summary, run_experiment, run_sweep, write_summary)


def _add_config_arg(p):
    p.add_argument("--config", required=True, help="JSON experiment config")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="argmin",
        description="gradient-norm minimization experiments and verification")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="run a single experiment")
    _add_config_arg(p_run)
    p_run.add_argument("--eps", type=float, default=None,
                       help="override accuracy target")
    p_run.add_argument("--out", default=None, help="output directory")

    p_sweep = sub.add_parser("sweep", help="run the full eps grid")
    _add_config_arg(p_sweep)
    p_sweep.add_argument("--out", default=None, help="output directory")

    p_ver = sub.add_parser("verify", help="run the invariant suite")
    p_ver.add_argument("--filter", default=None,
                       help="only checks whose module contains this string")

    p_rate = sub.add_parser("rate", help="fit calls ~ eps^-slope")
    p_rate.add_argument("--in", dest="indir", required=True,
                        help="directory containing summary.csv from a sweep")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "run":
            cfg = ExperimentConfig.from_file(args.config)
            out_dir = args.out or cfg.out
            os.makedirs(out_dir, exist_ok=True)
            rec = run_experiment(cfg, args.eps)
            path = os.path.join(out_dir, f"run_{rec.config_hash[:12]}.csv")
            emit_csv(rec, path, timing=cfg.timing)
            write_summary([rec], os.path.join(out_dir, "summary.csv"))
            s = rec.summary
            print(f"{s['algorithm']} eps={rec.eps:g}: final grad "
                  f"{s['final_grad']:.6e}, calls (f,g,H) = "
                  f"({s['calls0']}, {s['calls1']}, {s['calls2']})")
            print(f"trace: {path}")
            if str(s["termination"]).startswith("abort"):
                print(s["termination"], file=sys.stderr)
                return 3
            return 0

        if args.cmd == "sweep":
            cfg = ExperimentConfig.from_file(args.config)
            records = run_sweep(cfg, out_dir=args.out)
            print(f"wrote {len(records)} runs to "
                  f"{args.out or cfg.out}/summary.csv")
            if any(str(r.summary["termination"]).startswith("abort")
                   for r in records):
                return 3
            return 0

        if args.cmd == "verify":
            from .verify import format_table, run_all
            results = run_all(module_filter=args.filter)
            print(format_table(results))
            return 0 if all(r.passed for r in results) else 4

        if args.cmd == "rate":
            rows = read_summary(os.path.join(args.indir, "summary.csv"))
            slope, r2 = estimate_rate(rows)
            print(f"slope={slope:.4f} r2={r2:.4f} "
                  f"(calls ~ (1/eps)^{slope:.3f})")
            return 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except AlgorithmAbort as e:
        print(f"algorithm abort: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
