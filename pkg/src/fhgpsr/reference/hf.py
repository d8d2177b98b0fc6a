"""Time-dependent Hartree-Fock for the on-site Hubbard model.

Wick factorization of the Heisenberg equations closes them on the one-body
density matrices.  With ``n[s, i, j] = <c^dag_{js} c_{is}>``::

    dn_s/dt = (i/hbar) [n_s, -J + U diag(n_{-s})]

On-site repulsion only couples opposite spins, so there is no exchange term.
"""
from __future__ import annotations

import numpy as np

from ..lattice import HubbardParams, LatticeSpec
from ..phase_space import drift


def hf_rhs(n: np.ndarray, lattice: LatticeSpec, params: HubbardParams) -> np.ndarray:
    # the GPSR drift is exactly the mean-field right-hand side
    return drift(n, lattice, params)


def hf_evolve(n0, lattice: LatticeSpec, params: HubbardParams, dt: float, t_max: float,
              stride: int = 1):
    """Classic fixed-step RK4; returns ``(times, states)`` sampled every ``stride`` steps."""
    n = np.array(n0, dtype=complex)
    n_steps = int(round(t_max / dt))
    times, states = [0.0], [n.copy()]
    for k in range(1, n_steps + 1):
        k1 = hf_rhs(n, lattice, params)
        k2 = hf_rhs(n + 0.5 * dt * k1, lattice, params)
        k3 = hf_rhs(n + 0.5 * dt * k2, lattice, params)
        k4 = hf_rhs(n + dt * k3, lattice, params)
        n = n + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if k % stride == 0:
            times.append(k * dt)
            states.append(n.copy())
    return np.array(times), np.array(states)
