"""Drift, analytic noise factor and diffusion block of the GPSR Ito equations.

A phase-space point is a complex array ``n`` of shape ``(..., 2, n_s, n_s)``
holding the normal Green's functions ``n[s, i, j] = <c^dag_{j s} c_{i s}>``,
spin-up at index 0 and spin-down at index 1.  Leading axes batch independent
trajectories.  Flattened vectors follow ``(spin, i, j)`` in row-major order,
so all spin-up variables come first.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .lattice import HubbardParams, LatticeSpec

UP, DOWN = 0, 1


class PhaseSpacePoint(NamedTuple):
    n_up: np.ndarray
    n_down: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.stack([self.n_up, self.n_down]).astype(complex)


def as_array(p) -> np.ndarray:
    if isinstance(p, PhaseSpacePoint):
        return p.stacked()
    return np.asarray(p, dtype=complex)


def diagonal_point(occ_up, occ_down) -> np.ndarray:
    return np.stack([np.diag(np.asarray(occ_up, dtype=complex)),
                     np.diag(np.asarray(occ_down, dtype=complex))])


def holes(n: np.ndarray) -> np.ndarray:
    return np.eye(n.shape[-1]) - n


def flatten(n: np.ndarray) -> np.ndarray:
    return n.reshape(*n.shape[:-3], -1)


def unflatten(x: np.ndarray, n_s: int) -> np.ndarray:
    return x.reshape(*x.shape[:-1], 2, n_s, n_s)


def hopping_drift(n, lattice: LatticeSpec, params: HubbardParams) -> np.ndarray:
    """Linear part ``(i/hbar) (J n - n J)`` generated by the tunneling."""
    n = as_array(n)
    J = lattice.tunneling
    return (1j / params.hbar) * (J @ n - n @ J)


def interaction_drift(n, params: HubbardParams) -> np.ndarray:
    """Hartree part ``(i U/hbar) [n_s, diag(n_{-s})]`` of the drift."""
    n = as_array(n)
    dens = np.diagonal(n, axis1=-2, axis2=-1)[..., ::-1, :]  # opposite spin
    hartree = n * dens[..., None, :] - dens[..., :, None] * n
    return (1j * params.U / params.hbar) * hartree


def drift(n, lattice: LatticeSpec, params: HubbardParams) -> np.ndarray:
    """Drift of each spin block, ``(i/hbar) [n_s, h_s]``.

    The effective one-body matrix ``h_s = -J + U diag(n_{-s})`` carries the
    Hartree term of the on-site interaction; without it the ensemble mean
    would follow non-interacting dynamics for any U.
    """
    return hopping_drift(n, lattice, params) + interaction_drift(n, params)


def noise_prefactor(params: HubbardParams) -> complex:
    """sqrt(iU/hbar)/sqrt(2) on the principal branch."""
    return np.sqrt(1j * params.U / params.hbar) / np.sqrt(2.0)


def noise_blocks(n, params: HubbardParams) -> tuple[np.ndarray, np.ndarray]:
    """Blocks B1, B2 of shape ``(..., 2, n_s**2, n_s)``.

    ``B1[s, (i,j), p] = c n_ip nt_pj`` and ``B2[s, (i,j), p] = i c nt_ip n_pj``
    with ``nt = 1 - n`` and ``c = sqrt(iU)/sqrt(2)``.
    """
    n = as_array(n)
    n_s = n.shape[-1]
    nt = holes(n)
    c = noise_prefactor(params)
    b1 = c * (n[..., :, None, :] * np.swapaxes(nt, -1, -2)[..., None, :, :])
    b2 = 1j * c * (nt[..., :, None, :] * np.swapaxes(n, -1, -2)[..., None, :, :])
    shape = (*n.shape[:-2], n_s * n_s, n_s)
    return b1.reshape(shape), b2.reshape(shape)


def analytic_noise(n, params: HubbardParams) -> np.ndarray:
    """Analytic noise matrix B0 of shape ``(..., 2 n_s**2, 4 n_s)``.

    Column blocks are ``[B1, iB1, B2, iB2]`` on spin-up rows and
    ``[B1, -iB1, B2, -iB2]`` on spin-down rows.
    """
    b1, b2 = noise_blocks(n, params)
    up = np.concatenate([b1[..., UP, :, :], 1j * b1[..., UP, :, :],
                         b2[..., UP, :, :], 1j * b2[..., UP, :, :]], axis=-1)
    dn = np.concatenate([b1[..., DOWN, :, :], -1j * b1[..., DOWN, :, :],
                         b2[..., DOWN, :, :], -1j * b2[..., DOWN, :, :]], axis=-1)
    return np.concatenate([up, dn], axis=-2)


def analytic_increment(n, params: HubbardParams, dw: np.ndarray) -> np.ndarray:
    """``unflatten(B0 @ dw)`` in O(n_s**3) without forming B0.

    ``dw`` has shape ``(..., 4 n_s)`` with the column order of ``analytic_noise``.
    """
    n = as_array(n)
    n_s = n.shape[-1]
    nt = holes(n)
    c = noise_prefactor(params)
    w1, w2, w3, w4 = (dw[..., k * n_s:(k + 1) * n_s] for k in range(4))
    sign = np.array([1.0, -1.0])
    xi = w1[..., None, :] + 1j * sign[:, None] * w2[..., None, :]
    eta = w3[..., None, :] + 1j * sign[:, None] * w4[..., None, :]
    out = (n * xi[..., None, :]) @ nt
    out += 1j * ((nt * eta[..., None, :]) @ n)
    return c * out


def diffusion_factors(n, params: HubbardParams) -> tuple[np.ndarray, np.ndarray]:
    """Thin factors with ``D_q = F_up @ F_dn.T``, each ``(..., n_s**2, 2 n_s)``."""
    b1, b2 = noise_blocks(n, params)
    root2 = np.sqrt(2.0)
    f_up = root2 * np.concatenate([b1[..., UP, :, :], b2[..., UP, :, :]], axis=-1)
    f_dn = root2 * np.concatenate([b1[..., DOWN, :, :], b2[..., DOWN, :, :]], axis=-1)
    return f_up, f_dn


def diffusion_block(n, params: HubbardParams) -> np.ndarray:
    """Up-down block ``D_q = 2 (B1_up B1_dn^T + B2_up B2_dn^T)``, shape ``(..., n_s**2, n_s**2)``."""
    f_up, f_dn = diffusion_factors(n, params)
    return f_up @ np.swapaxes(f_dn, -1, -2)


def assemble_diffusion(dq: np.ndarray) -> np.ndarray:
    """Full symmetric diffusion matrix ``[[0, D_q], [D_q^T, 0]]``."""
    zero = np.zeros_like(dq)
    top = np.concatenate([zero, dq], axis=-1)
    bottom = np.concatenate([np.swapaxes(dq, -1, -2), zero], axis=-1)
    return np.concatenate([top, bottom], axis=-2)
