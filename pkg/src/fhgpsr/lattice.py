"""Lattice geometry, Hubbard parameters and initial states."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class HubbardParams:
    """Energies in units of the tunneling.  ``J_amp`` sizes the lattice built by
    the harness; dynamics read the tunneling matrix from the lattice itself."""

    J_amp: float = 1.0
    U: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("J_amp", "U", "hbar"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")


@dataclass(frozen=True, eq=False)
class LatticeSpec:
    """Open-boundary hypercubic lattice with nearest-neighbour tunneling.

    Sites are enumerated row-major with the first coordinate running fastest,
    so site ``x + dims[0] * (y + dims[1] * z)`` has coordinates ``(x, y, z)``.
    """

    dims: tuple[int, ...]
    tunneling: np.ndarray = field(repr=False)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.dims))

    @property
    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.tunneling))
        return list(zip(i.tolist(), j.tolist()))

    def coords(self, site: int) -> tuple[int, ...]:
        out = []
        for extent in self.dims:
            out.append(site % extent)
            site //= extent
        return tuple(out)

    def site(self, coords) -> int:
        idx, stride = 0, 1
        for c, extent in zip(coords, self.dims):
            idx += c * stride
            stride *= extent
        return idx


def build_lattice(dims, J_amp: float = 1.0) -> LatticeSpec:
    dims = tuple(int(d) for d in np.atleast_1d(dims))
    if not 1 <= len(dims) <= 3:
        raise ValueError(f"lattice must have 1 to 3 dimensions, got {len(dims)}")
    if any(d < 1 for d in dims):
        raise ValueError(f"lattice extents must be positive, got {dims}")
    n_s = int(np.prod(dims))
    if n_s < 2:
        raise ValueError("lattice needs at least two sites")

    lat = LatticeSpec(dims, np.zeros((n_s, n_s)))
    J = lat.tunneling
    for s in range(n_s):
        c = lat.coords(s)
        for axis in range(len(dims)):
            if c[axis] + 1 < dims[axis]:
                nb = list(c)
                nb[axis] += 1
                t = lat.site(nb)
                J[s, t] = J[t, s] = J_amp
    J.flags.writeable = False
    return lat


@dataclass(frozen=True)
class SpinWave:
    occ_up: tuple[float, ...]
    occ_down: tuple[float, ...]


@dataclass(frozen=True)
class CustomDiagonal:
    occ_up: tuple[float, ...]
    occ_down: tuple[float, ...]

    def __post_init__(self):
        if len(self.occ_up) != len(self.occ_down):
            raise ValueError("occupation vectors differ in length")
        occ = np.asarray(self.occ_up + self.occ_down, dtype=float)
        if np.any(occ < 0) or np.any(occ > 1):
            raise ValueError("occupations must lie in [0, 1]")


@dataclass(frozen=True)
class BellState:
    """alpha |updown, 0> + beta |0, updown> on a two-site lattice."""

    alpha: complex
    beta: complex


InitialState = SpinWave | BellState | CustomDiagonal


def spin_wave_occupation(lattice: LatticeSpec) -> SpinWave:
    """Global spin wave: up spins on one half of the lattice, down on the other.

    For chains and for 3D lattices the first half of the site enumeration is
    spin-up.  On 2D lattices the pattern is a checkerboard of 2x2 blocks,
    so each 2x2 plaquette is filled with a single spin species and its
    neighbouring plaquettes with the opposite one.
    """
    n_s = lattice.n_sites
    if n_s % 2:
        raise ValueError(f"spin wave needs an even number of sites, got {n_s}")
    up = np.zeros(n_s)
    if len(lattice.dims) == 2:
        for s in range(n_s):
            x, y = lattice.coords(s)
            up[s] = float((x // 2 + y // 2) % 2 == 0)
        if up.sum() == n_s // 2:
            return SpinWave(tuple(up), tuple(1.0 - up))
        # extents that do not tile into balanced 2x2 blocks use the half split
        up[:] = 0.0
    up[: n_s // 2] = 1.0
    return SpinWave(tuple(up), tuple(1.0 - up))


def validate_bell(alpha: complex, beta: complex) -> BellState:
    norm = abs(alpha) ** 2 + abs(beta) ** 2
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"|alpha|^2 + |beta|^2 = {norm}, expected 1")
    return BellState(complex(alpha), complex(beta))

