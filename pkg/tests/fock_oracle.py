"""Independent second-quantized oracle for the GPSR drift and diffusion.

Builds Jordan-Wigner fermion operators as dense matrices, a normalized
Gaussian operator ``exp(-G) / tr exp(-G)`` with arbitrary complex one-body
``G`` (so that its Green's functions are generic complex matrices) and
evaluates time derivatives of moments from ``d/dt rho = -i [H, rho]``.
"""
import itertools

import numpy as np
import scipy.linalg


class FockOracle:
    def __init__(self, tunneling, U, seed=0):
        self.J = np.asarray(tunneling, dtype=float)
        self.ns = ns = self.J.shape[0]
        self.U = U
        dim = 2 ** (2 * ns)
        self.c = []
        for m in range(2 * ns):
            a = np.zeros((dim, dim))
            for s in range(dim):
                if s >> m & 1:
                    a[s ^ (1 << m), s] = (-1) ** bin(s & ((1 << m) - 1)).count("1")
            self.c.append(a)
        self.cd = [a.T for a in self.c]
        H = sum(-self.J[i, j] * self.hop(i, j, s)
                for i in range(ns) for j in range(ns) for s in range(2))
        H = H + U * sum(self.hop(i, i, 0) @ self.hop(i, i, 1) for i in range(ns))
        self.H = H
        rng = np.random.default_rng(seed)
        G = 0.0
        for s in range(2):
            K = rng.normal(size=(ns, ns)) + 1j * rng.normal(size=(ns, ns))
            G = G + sum(K[a, b] * self.hop(a, b, s) for a in range(ns) for b in range(ns))
        rho = scipy.linalg.expm(-G)
        self.rho = rho / np.trace(rho)

    def mode(self, i, s):
        return s * self.ns + i

    def hop(self, i, j, s):
        """c^dag_{i s} c_{j s}"""
        return self.cd[self.mode(i, s)] @ self.c[self.mode(j, s)]

    def ev(self, op):
        return np.trace(op @ self.rho)

    def dev(self, op):
        return -1j * np.trace(op @ (self.H @ self.rho - self.rho @ self.H))

    def point(self):
        """Green's functions ``n[s, i, j] = <c^dag_j c_i>`` of the Gaussian operator."""
        ns = self.ns
        return np.array([[[self.ev(self.hop(j, i, s)) for j in range(ns)] for i in range(ns)]
                         for s in range(2)])

    def first_derivative(self):
        ns = self.ns
        return np.array([[[self.dev(self.hop(j, i, s)) for j in range(ns)] for i in range(ns)]
                         for s in range(2)])

    def opposite_spin_diffusion(self, drift):
        """``D[i,j,k,l] = d<n_ij^up n_kl^dn>/dt - (A_ij n_kl + n_ij A_kl)``."""
        ns = self.ns
        n = self.point()
        out = np.zeros((ns,) * 4, complex)
        for i, j, k, l in itertools.product(range(ns), repeat=4):
            op = self.hop(j, i, 0) @ self.hop(l, k, 1)
            out[i, j, k, l] = self.dev(op) - (drift[0, i, j] * n[1, k, l]
                                              + n[0, i, j] * drift[1, k, l])
        return out


def bell_moments(alpha, beta):
    """First and opposite-spin second moments of alpha|updown,0> + beta|0,updown>.

    Returns ``(n, pairs)`` with ``n[s, i, j] = <c^dag_j c_i>`` and
    ``pairs[i, j, k, l] = <c^dag_{j up} c_{i up} c^dag_{l dn} c_{k dn}>``.
    """
    o = FockOracle(np.zeros((2, 2)), U=0.0)
    vac = np.zeros(o.H.shape[0])
    vac[0] = 1.0
    psi = (alpha * o.cd[o.mode(0, 0)] @ o.cd[o.mode(0, 1)] @ vac
           + beta * o.cd[o.mode(1, 0)] @ o.cd[o.mode(1, 1)] @ vac)

    def ev(op):
        return psi.conj() @ op @ psi

    n = np.array([[[ev(o.hop(j, i, s)) for j in range(2)] for i in range(2)] for s in range(2)])
    pairs = np.zeros((2,) * 4, complex)
    for i, j, k, l in itertools.product(range(2), repeat=4):
        pairs[i, j, k, l] = ev(o.hop(j, i, 0) @ o.hop(l, k, 1))
    return n, pairs
