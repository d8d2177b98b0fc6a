"""Command line entry point: ``fhgpsr run | bench | compare``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
The number of worker threads for ensemble chunks is read from FHGPSR_THREADS.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import (BENCH_METHODS, ConfigError, NumericalFailure, bench_noise_step,
                      compare_runs, load_config, run_experiment)

log = logging.getLogger("fhgpsr")


def _run(args) -> int:
    cfg = load_config(args.config, method=args.method, trajectories=args.trajectories,
                      dt=args.dt, t_max=args.tmax, master_seed=args.seed, rank=args.rank,
                      spike_threshold=args.spike_threshold, out=args.out)
    manifest = run_experiment(cfg)
    pst = manifest.get("practical_simulation_time")
    msg = f"wrote {len(manifest['files'])} series to {cfg.out}"
    if pst is not None:
        msg += f"; practical simulation time {pst:.4g}"
    print(msg)
    return 0


def _bench(args) -> int:
    res = bench_noise_step(args.sizes, args.methods, args.reps, args.seed)
    text = json.dumps(res.to_dict(), indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    for name, fit in res.fits.items():
        flag = "  (poor fit)" if fit.flagged else ""
        print(f"{name:10s} exponent {fit.exponent:6.2f}  R^2 {fit.r2:.3f}{flag}")
    return 0


def _compare(args) -> int:
    rows = compare_runs(args.runs, args.out, args.reference)
    print(f"merged {len(rows)} rows" + (f" into {args.out}" if args.out else ""))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fhgpsr", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one configuration")
    r.add_argument("--config", help="YAML experiment file; flags override it")
    r.add_argument("--method")
    r.add_argument("--trajectories", type=int)
    r.add_argument("--dt", type=float)
    r.add_argument("--tmax", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--rank", type=int)
    r.add_argument("--spike-threshold", type=float)
    r.add_argument("--out")
    r.set_defaults(func=_run)

    b = sub.add_parser("bench", help="time noise-matrix construction against system size")
    b.add_argument("--sizes", type=int, nargs="+", default=[8, 12, 16, 24, 32])
    b.add_argument("--methods", nargs="+", default=list(BENCH_METHODS), choices=BENCH_METHODS)
    b.add_argument("--reps", type=int, default=3)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(func=_bench)

    c = sub.add_parser("compare", help="merge run directories or CSV files")
    c.add_argument("runs", nargs="+")
    c.add_argument("--reference", help="label of the reference run (default: ed if present)")
    c.add_argument("--out")
    c.set_defaults(func=_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
