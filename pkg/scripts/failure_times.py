"""Per-trajectory failure-time statistics of two gauges on the same system.

    python scripts/failure_times.py --dims 8 --trajectories 1000

Prints practical simulation time, failure count, quantiles and variance of
the (censored) failure times, and the two-sample KS statistic between gauges.
"""
import argparse

import numpy as np
import scipy.stats

from fhgpsr import gauge as gauges
from fhgpsr import sde
from fhgpsr.lattice import HubbardParams, build_lattice, spin_wave_occupation
from fhgpsr.phase_space import diagonal_point


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dims", type=int, nargs="+", default=[8])
    p.add_argument("--gauges", nargs=2, default=["analytic", "rsvd"])
    p.add_argument("--trajectories", type=int, default=1000)
    p.add_argument("--dt", type=float, default=2e-3)
    p.add_argument("--tmax", type=float, default=3.0)
    p.add_argument("--U", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args()

    lat = build_lattice(args.dims)
    sw = spin_wave_occupation(lat)
    n0 = diagonal_point(sw.occ_up, sw.occ_down)
    censored = {}
    for name in args.gauges:
        cfg = sde.IntegratorConfig(dt=args.dt, t_max=args.tmax, snapshot_stride=50,
                                   gauge=gauges.gauge_from_name(name))
        e = sde.run_ensemble(n0, args.trajectories, cfg, lat, HubbardParams(U=args.U), args.seed)
        st = sde.failure_statistics(e)
        censored[name] = st.failure_times
        q = np.quantile(st.failure_times, [0.1, 0.5, 0.9])
        print(f"{name:9s} practical time {st.practical_time:.3f}  failed {st.n_failed:5d}  "
              f"quantiles(10/50/90%) {np.round(q, 3)}  variance {st.failure_times.var():.4f}")
    a, b = censored.values()
    print("KS", scipy.stats.ks_2samp(a, b))


if __name__ == "__main__":
    main()
