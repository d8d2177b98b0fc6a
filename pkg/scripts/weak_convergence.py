"""Weak error of the integrator against exact diagonalization on two sites.

    python scripts/weak_convergence.py --trajectories 100000 --scheme euler

Runs one ensemble per step size and prints |<n_1up(t)> - ED| with its
standard error.  The error is only resolvable where the first-order bias
clearly exceeds the statistical error of the ensemble mean.
"""
import argparse

import numpy as np

from fhgpsr import gauge as gauges
from fhgpsr import observables as obs
from fhgpsr import sde
from fhgpsr.harness import ExperimentConfig, ed_reference
from fhgpsr.lattice import HubbardParams, build_lattice, spin_wave_occupation
from fhgpsr.phase_space import diagonal_point


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--trajectories", type=int, default=100_000)
    p.add_argument("--dts", type=float, nargs="+", default=[4e-3, 2e-3, 1e-3])
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--U", type=float, default=1.0)
    p.add_argument("--gauge", default="rsvd")
    p.add_argument("--scheme", default="euler", choices=sde.SCHEMES)
    p.add_argument("--seed", type=int, default=9)
    args = p.parse_args()

    lat = build_lattice([2])
    sw = spin_wave_occupation(lat)
    n0 = diagonal_point(sw.occ_up, sw.occ_down)
    par = HubbardParams(U=args.U)
    fine = min(args.dts)
    _, ed_obs = ed_reference(ExperimentConfig(dims=[2], U=args.U, dt=fine, t_max=args.t,
                                              snapshot_stride=int(round(args.t / fine))))
    exact = ed_obs[-1]["occupation"][0, 0].real
    errs = []
    for dt in args.dts:
        stride = int(round(args.t / dt))
        cfg = sde.IntegratorConfig(dt=dt, t_max=args.t, snapshot_stride=stride,
                                   gauge=gauges.gauge_from_name(args.gauge), scheme=args.scheme)
        e = sde.run_ensemble(n0, args.trajectories, cfg, lat, par, args.seed)
        s = obs.occupation(e, 0, 0)
        errs.append(abs(s.values[-1].real - exact))
        print(f"dt={dt:g}  error {errs[-1]:.2e}  stderr {s.stderr[-1]:.2e}  "
              f"window ends at t={s.times[-1]:g}")
    print("ratios", np.round(np.array(errs[:-1]) / np.array(errs[1:]), 2))


if __name__ == "__main__":
    main()
