"""Exact diagonalization in the fixed (N_up, N_down) Fock sector.

Jordan-Wigner order: spin-up modes on sites 0..n_s-1, then spin-down modes.
A basis state is a pair of bitstrings (up, down) with bit i set when site i
is occupied.  Basis index = up_index * n_down_states + down_index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg
import scipy.sparse

from ..lattice import BellState, HubbardParams, LatticeSpec

MAX_DIM = 1_000_000


class KrylovError(RuntimeError):
    pass


def sector_states(n_sites: int, n_particles: int) -> np.ndarray:
    states = [sum(1 << i for i in occ) for occ in combinations(range(n_sites), n_particles)]
    return np.array(sorted(states), dtype=np.int64)


def popcount(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    count = np.zeros_like(x)
    while np.any(x):
        count += x & 1
        x = x >> 1
    return count


@dataclass(frozen=True, eq=False)
class FockBasis:
    n_sites: int
    n_up: int
    n_down: int

    def __post_init__(self):
        for n in (self.n_up, self.n_down):
            if not 0 <= n <= self.n_sites:
                raise ValueError(f"particle number {n} outside [0, {self.n_sites}]")
        if self.dim > MAX_DIM:
            raise ValueError(f"basis dimension {self.dim} exceeds the ED limit {MAX_DIM}")
        object.__setattr__(self, "up_states", sector_states(self.n_sites, self.n_up))
        object.__setattr__(self, "down_states", sector_states(self.n_sites, self.n_down))

    @staticmethod
    def dimension(n_sites: int, n_up: int, n_down: int) -> int:
        return math.comb(n_sites, n_up) * math.comb(n_sites, n_down)

    @property
    def dim(self) -> int:
        return self.dimension(self.n_sites, self.n_up, self.n_down)

    def index(self, up: int, down: int) -> int:
        iu = int(np.searchsorted(self.up_states, up))
        idn = int(np.searchsorted(self.down_states, down))
        if self.up_states[iu] != up or self.down_states[idn] != down:
            raise KeyError((up, down))
        return iu * len(self.down_states) + idn

    def occupations(self) -> np.ndarray:
        """Boolean array ``(dim, 2, n_sites)`` of site occupations per basis state."""
        bits = 1 << np.arange(self.n_sites)
        up = (self.up_states[:, None] & bits) > 0
        dn = (self.down_states[:, None] & bits) > 0
        nu, nd = len(self.up_states), len(self.down_states)
        occ = np.empty((nu, nd, 2, self.n_sites), dtype=bool)
        occ[:, :, 0] = up[:, None, :]
        occ[:, :, 1] = dn[None, :, :]
        return occ.reshape(nu * nd, 2, self.n_sites)


@dataclass
class EDState:
    amplitudes: np.ndarray
    time: float = 0.0


def _hopping_matrix(states: np.ndarray, tunneling: np.ndarray) -> scipy.sparse.csr_matrix:
    """Single-species matrix of ``-sum_ij J_ij c^dag_i c_j`` on one bitstring sector."""
    n_s = tunneling.shape[0]
    lookup = {int(s): k for k, s in enumerate(states)}
    rows, cols, vals = [], [], []
    for i, j in zip(*np.nonzero(tunneling)):
        for k, s in enumerate(states):
            s = int(s)
            if not (s >> j) & 1 or (s >> i) & 1:
                continue
            lo, hi = min(i, j), max(i, j)
            between = s & (((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1))
            sign = -1.0 if bin(between).count("1") % 2 else 1.0
            rows.append(lookup[s ^ (1 << j) ^ (1 << i)])
            cols.append(k)
            vals.append(-tunneling[i, j] * sign)
    m = len(states)
    return scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(m, m))


def build_hamiltonian(basis: FockBasis, lattice: LatticeSpec,
                      params: HubbardParams) -> scipy.sparse.csr_matrix:
    if lattice.n_sites != basis.n_sites:
        raise ValueError("basis and lattice disagree on the number of sites")
    J = lattice.tunneling
    hu = _hopping_matrix(basis.up_states, J)
    hd = _hopping_matrix(basis.down_states, J)
    # up modes precede down modes, so down hopping picks up no sign from the up string
    eye_u = scipy.sparse.identity(hu.shape[0], format="csr")
    eye_d = scipy.sparse.identity(hd.shape[0], format="csr")
    h = scipy.sparse.kron(hu, eye_d) + scipy.sparse.kron(eye_u, hd)
    double = basis.occupations().all(axis=1).sum(axis=1)
    h = h + scipy.sparse.diags(params.U * double.astype(float))
    return h.tocsr()


def _lanczos_exp(h, w, tau, krylov_dim, tol):
    """One Krylov approximation of ``exp(tau h) w``; returns (result, error estimate)."""
    nrm = np.linalg.norm(w)
    m_max = min(krylov_dim, w.size)
    basis = np.zeros((m_max + 1, w.size), dtype=complex)
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max)
    basis[0] = w / nrm
    for k in range(m_max):
        q = h @ basis[k]
        alpha[k] = np.vdot(basis[k], q).real
        # full reorthogonalization
        q -= basis[:k + 1].T @ (basis[:k + 1].conj() @ q)
        beta[k] = np.linalg.norm(q)
        m = k + 1
        t = np.diag(alpha[:m]) + np.diag(beta[:m - 1], 1) + np.diag(beta[:m - 1], -1)
        e = scipy.linalg.expm(tau * t)[:, 0]
        err = nrm * beta[k] * abs(e[-1])
        if err <= tol or beta[k] < 1e-13 * max(1.0, abs(alpha[k])):
            return nrm * (basis[:m].T @ e), err
        basis[k + 1] = q / beta[k]
    return nrm * (basis[:m].T @ e), err


def expm_krylov(h, v: np.ndarray, tau: complex, krylov_dim: int = 30,
                tol: float = 1e-12) -> np.ndarray:
    """``exp(tau h) v`` for Hermitian ``h`` by Lanczos, substepping when needed."""
    w = np.asarray(v, dtype=complex)
    if tau == 0 or not np.any(w):
        return w.copy()
    done, frac = 0.0, 1.0
    while done < 1.0:
        frac = min(frac, 1.0 - done)
        for _ in range(60):
            out, err = _lanczos_exp(h, w, tau * frac, krylov_dim, tol)
            if err <= tol:
                break
            frac /= 2
        else:
            raise KrylovError("Krylov propagator did not converge")
        w = out
        done += frac
        if 1.0 - done < 1e-14:
            break
    return w


def ed_step(psi: EDState, h, dt: float, hbar: float = 1.0, **kw) -> EDState:
    amp = expm_krylov(h, psi.amplitudes, -1j * dt / hbar, **kw)
    return EDState(amp, psi.time + dt)


def initial_ed_state(basis: FockBasis, state) -> EDState:
    """Fock-space vector for a spin-wave / diagonal Fock state or a Bell state."""
    amp = np.zeros(basis.dim, dtype=complex)
    if isinstance(state, BellState):
        if basis.n_sites != 2:
            raise ValueError("Bell state needs two sites")
        # |updown,0> = c^dag_{0 up} c^dag_{0 dn}|0>; both Fock states carry the same sign
        amp[basis.index(0b01, 0b01)] = state.alpha
        amp[basis.index(0b10, 0b10)] = state.beta
        return EDState(amp)
    occ_up = np.asarray(state.occ_up)
    occ_dn = np.asarray(state.occ_down)
    if not (np.all(np.isin(occ_up, (0, 1))) and np.all(np.isin(occ_dn, (0, 1)))):
        raise ValueError("ED needs integer occupations")
    up = int(sum(1 << i for i, o in enumerate(occ_up) if o))
    dn = int(sum(1 << i for i, o in enumerate(occ_dn) if o))
    amp[basis.index(up, dn)] = 1.0
    return EDState(amp)


def basis_for(state, n_sites: int) -> FockBasis:
    if isinstance(state, BellState):
        return FockBasis(2, 1, 1)
    return FockBasis(n_sites, int(round(sum(state.occ_up))), int(round(sum(state.occ_down))))


def ed_observables(psi: EDState, basis: FockBasis) -> dict[str, np.ndarray]:
    """Occupations ``(2, n_s)`` and normal-ordered pair moments ``(2, n_s, 2, n_s)``.

    ``pairs[s, i, t, j] = <c^dag_{is} c^dag_{jt} c_{jt} c_{is}>``; the
    same-mode entries vanish.
    """
    prob = np.abs(psi.amplitudes) ** 2
    occ = basis.occupations().astype(float)
    n = np.einsum("k,ksi->si", prob, occ)
    pairs = np.einsum("k,ksi,ktj->sitj", prob, occ, occ)
    for s in range(2):
        for i in range(basis.n_sites):
            pairs[s, i, s, i] = 0.0
    return {"occupation": n, "pairs": pairs}


def ed_evolve(psi0: EDState, h, dt: float, n_steps: int, stride: int = 1,
              hbar: float = 1.0):
    """Yield ``(time, state)`` at every ``stride`` steps, starting with t=0."""
    psi = psi0
    yield psi.time, psi
    for k in range(1, n_steps + 1):
        psi = ed_step(psi, h, dt, hbar)
        if k % stride == 0:
            yield psi.time, psi
