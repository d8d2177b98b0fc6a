"""Noise-matrix construction time against system size, with power-law fits.

    python scripts/scaling.py --sizes 8 12 16 24 32 --out bench.json

Equivalent to ``fhgpsr bench``; kept as a script so the per-size timings can
be printed as a table next to the fitted exponents.
"""
import argparse
import json

from fhgpsr.harness import BENCH_METHODS, bench_noise_step


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[8, 12, 16, 24, 32])
    p.add_argument("--methods", nargs="+", default=list(BENCH_METHODS))
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--out")
    args = p.parse_args()

    res = bench_noise_step(args.sizes, args.methods, args.reps)
    names = list(res.times)
    print("n_s   " + "".join(f"{k:>12s}" for k in names))
    for i, n in enumerate(res.sizes):
        print(f"{n:<6d}" + "".join(f"{res.times[k][i]:12.3e}" for k in names))
    for k, fit in res.fits.items():
        print(f"{k:10s} exponent {fit.exponent:5.2f}  R^2 {fit.r2:.3f}" +
              ("  (poor fit)" if fit.flagged else ""))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(res.to_dict(), fh, indent=2)


if __name__ == "__main__":
    main()
