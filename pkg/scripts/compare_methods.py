"""Run one experiment config under several methods and merge the results.

    python scripts/compare_methods.py scripts/configs/spin_wave_8.yaml \
        --methods gpsr-analytic gpsr-rsvd ed hf

Each method writes into ``<out>/../<method>``; the merged table (with GPSR
deviations from ED in standard-error units) goes to ``<out>/../comparison.csv``.
Methods that the configuration cannot support (ED beyond the basis limit) are
skipped with a message.
"""
import argparse
from pathlib import Path

from fhgpsr.harness import ConfigError, compare_runs, load_config, run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config")
    p.add_argument("--methods", nargs="+", default=["gpsr-analytic", "gpsr-rsvd", "ed", "hf"])
    p.add_argument("--trajectories", type=int)
    args = p.parse_args()

    base = Path(load_config(args.config).out).parent
    runs = []
    for method in args.methods:
        out = base / method
        cfg = load_config(args.config, method=method, out=str(out),
                          trajectories=args.trajectories)
        try:
            manifest = run_experiment(cfg)
        except ConfigError as exc:
            print(f"{method}: skipped ({exc})")
            continue
        pst = manifest.get("practical_simulation_time")
        print(f"{method}: {manifest['wall_time']:.1f} s" +
              (f", practical simulation time {pst:.3f}" if pst is not None else ""))
        runs.append(out)
    if len(runs) > 1:
        rows = compare_runs(runs, out=base / "comparison.csv")
        print(f"merged {len(rows)} rows into {base / 'comparison.csv'}")


if __name__ == "__main__":
    main()
