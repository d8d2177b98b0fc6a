"""Diffusion gauges: noise matrices B with B B^T = D built from the block D_q.

Every numerical gauge factorizes ``D_q2 = -0.5j * D_q = U S V^*`` and
assembles::

    B = [[U sqrt(S),     1j U sqrt(S)],
         [1j conj(V) sqrt(S), conj(V) sqrt(S)]]

which gives ``B B^T = [[0, D_q], [D_q^T, 0]]`` whenever the kept singular
triplets span the range of ``D_q``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .phase_space import assemble_diffusion


ZERO_SV = 1e-12
GRAM_TOL = 1e-14  # relative eigenvalue cut when splitting a factor's Gram matrix


class GaugeFailure(RuntimeError):
    """A factorization did not converge."""


@dataclass(frozen=True)
class Analytic:
    name = "analytic"


@dataclass(frozen=True)
class ClassicalSvd:
    name = "svd"


@dataclass(frozen=True)
class LowRankSvd:
    rank: int | None = None
    name = "lowrank"


@dataclass(frozen=True)
class RandomizedSvd:
    """Randomized range finder followed by a small dense SVD.

    ``rank=None`` means ``2 n_s``, which already spans the full column space
    of D_q, so no oversampling or power iterations are needed by default.
    ``refresh`` selects whether the Gaussian test matrix is redrawn every
    step or drawn once per trajectory.  ``explicit`` makes the integrator
    form D_q densely instead of working through its thin factors.
    """

    rank: int | None = None
    oversample: int = 0
    power_iters: int = 0
    refresh: str = "step"
    explicit: bool = False
    name = "rsvd"

    def __post_init__(self):
        if self.rank is not None and self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.oversample < 0 or self.power_iters < 0:
            raise ValueError("oversample and power_iters must be >= 0")
        if self.refresh not in ("step", "trajectory"):
            raise ValueError(f"unknown refresh mode {self.refresh!r}")


@dataclass(frozen=True)
class FactoredSvd:
    """Exact thin SVD of ``D_q2`` computed from the Khatri-Rao structure of its factors.

    Costs O(n_s**3) per point and never forms vectors of length n_s**2.  At
    full rank the randomized SVD differs from any exact thin SVD only by a
    phase on each singular pair; that phase is independent of the Wiener
    increment and leaves both ``B B^T`` and ``B B^H`` unchanged, so the two
    gauges generate the same increment distribution at every point.
    """

    name = "fsvd"


GaugeMethod = Analytic | ClassicalSvd | LowRankSvd | RandomizedSvd | FactoredSvd


def gauge_from_name(name: str, rank: int | None = None) -> GaugeMethod:
    name = name.removeprefix("gpsr-")
    if name == "analytic":
        return Analytic()
    if name == "svd":
        return ClassicalSvd()
    if name == "lowrank":
        return LowRankSvd(rank)
    if name == "rsvd":
        return RandomizedSvd(rank)
    if name == "fsvd":
        return FactoredSvd()
    raise ValueError(f"unknown gauge {name!r}")


def default_rank(dq: np.ndarray) -> int:
    return 2 * int(round(np.sqrt(dq.shape[-1])))


@dataclass(frozen=True)
class FactorizationReport:
    residual: float
    numeric_rank: int
    elapsed: float


def _root_sv(s):
    """sqrt of the singular values with those below ``ZERO_SV * max`` set to zero."""
    s = np.where(s >= ZERO_SV * s.max(axis=-1, keepdims=True, initial=0.0), s, 0.0)
    return np.sqrt(s)


def assemble_noise(u: np.ndarray, s: np.ndarray, vh: np.ndarray) -> np.ndarray:
    """Block noise matrix from the SVD triplets of ``D_q2`` (batched).

    Singular values below ``1e-12 * max`` are zeroed but their columns kept,
    so the number of noise channels does not change from step to step.
    """
    root = _root_sv(s)[..., None, :]
    us = u * root
    vs = np.swapaxes(vh, -1, -2) * root  # conj(V) = vh^T
    top = np.concatenate([us, 1j * us], axis=-1)
    bottom = np.concatenate([1j * vs, vs], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def _check_rank(dq, rank):
    if not 1 <= rank <= dq.shape[-1]:
        raise ValueError(f"rank {rank} outside [1, {dq.shape[-1]}]")


def gaussian_test_matrix(rng: np.random.Generator, rows: int, cols: int,
                         lead: tuple = ()) -> np.ndarray:
    z = rng.standard_normal((*lead, rows, cols, 2))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def _wide_svd(a: np.ndarray):
    """Thin SVD of a short, wide (batched) matrix.

    Wide inputs are first reduced by a QR factorization of ``a^H`` so the
    dense SVD only sees a square triangular factor; this is markedly faster
    for batched LAPACK calls.
    """
    r, m = a.shape[-2:]
    try:
        if m < 2 * r:
            return np.linalg.svd(a, full_matrices=False)
        q, rr = np.linalg.qr(np.swapaxes(a, -1, -2).conj())
        u, s, wh = np.linalg.svd(np.swapaxes(rr, -1, -2).conj())
    except np.linalg.LinAlgError as exc:
        raise GaugeFailure(str(exc)) from exc
    return u, s, wh @ np.swapaxes(q, -1, -2).conj()


def randomized_svd(a: np.ndarray, z: np.ndarray, rank: int, power_iters: int = 0):
    """Halko-style randomized SVD of ``a`` given a test matrix ``z`` (batched)."""
    y = a @ z
    q, _ = np.linalg.qr(y)
    for _ in range(power_iters):
        q, _ = np.linalg.qr(np.swapaxes(a, -1, -2).conj() @ q)
        q, _ = np.linalg.qr(a @ q)
    small = np.swapaxes(q, -1, -2).conj() @ a
    ut, s, vh = _wide_svd(small)
    u = q @ ut
    return u[..., :rank], s[..., :rank], vh[..., :rank, :]


def factorize_randomized(dq: np.ndarray, rank: int | None = None, seed=None, *,
                         oversample: int = 0, power_iters: int = 0,
                         z: np.ndarray | None = None) -> np.ndarray:
    """Noise matrix with ``2 * rank`` columns from a randomized SVD of ``-0.5j D_q``.

    ``seed`` may be anything accepted by ``np.random.default_rng``; pass ``z``
    to supply the test matrix directly.
    """
    rank = default_rank(dq) if rank is None else rank
    _check_rank(dq, rank)
    width = min(rank + oversample, dq.shape[-1])
    if z is None:
        z = gaussian_test_matrix(np.random.default_rng(seed), dq.shape[-1], width,
                                 dq.shape[:-2])
    u, s, vh = randomized_svd(-0.5j * dq, z, rank, power_iters)
    return assemble_noise(u, s, vh)


def noise_from_triplets(u: np.ndarray, s: np.ndarray, vh: np.ndarray,
                        dw: np.ndarray) -> np.ndarray:
    """``assemble_noise(u, s, vh) @ dw`` without building the noise matrix."""
    r = s.shape[-1]
    root = _root_sv(s)
    w = root * (dw[..., :r] + 1j * dw[..., r:])
    w_t = root * (1j * dw[..., :r] + dw[..., r:])
    top = (u @ w[..., None])[..., 0]
    bottom = (np.swapaxes(vh, -1, -2) @ w_t[..., None])[..., 0]
    return np.concatenate([top, bottom], axis=-1)


def factorize_randomized_factored(b_up: np.ndarray, b_dn: np.ndarray, z: np.ndarray,
                                  rank: int, power_iters: int = 0) -> np.ndarray:
    """``factorize_randomized`` for ``D_q = b_up @ b_dn.T`` without forming ``D_q``."""
    return assemble_noise(*randomized_svd_factored(b_up, b_dn, z, rank, power_iters))


def randomized_svd_factored(b_up: np.ndarray, b_dn: np.ndarray, z: np.ndarray,
                            rank: int, power_iters: int = 0):
    """Randomized SVD triplets of ``D_q2 = -0.5j b_up @ b_dn.T``.

    The products with ``D_q2`` are evaluated through the thin factors, which
    brings the cost per call down to ``O(n_s**4)``.
    """
    bdn_t = np.swapaxes(b_dn, -1, -2)

    def apply(x):
        return -0.5j * (b_up @ (bdn_t @ x))

    def apply_h(x):
        return 0.5j * (b_dn.conj() @ (np.swapaxes(b_up, -1, -2).conj() @ x))

    q, _ = np.linalg.qr(apply(z))
    for _ in range(power_iters):
        q, _ = np.linalg.qr(apply_h(q))
        q, _ = np.linalg.qr(apply(q))
    small = -0.5j * ((np.swapaxes(q, -1, -2).conj() @ b_up) @ bdn_t)
    ut, s, vh = _wide_svd(small)
    u = q @ ut
    return u[..., :rank], s[..., :rank], vh[..., :rank, :]


def _khatri_rao_gram(n: np.ndarray, c: complex) -> np.ndarray:
    """Gram matrix ``F^H F`` of one spin's thin factor, from n_s x n_s products only.

    ``F = sqrt(2) [c KR(n, nt^T), i c KR(nt, n^T)]`` with KR the column-wise
    Kronecker product, and ``KR(A, B)^H KR(C, D) = (A^H C) * (B^H D)``.
    """
    nt = np.eye(n.shape[-1]) - n
    a, b, a2, b2 = n, np.swapaxes(nt, -1, -2), nt, np.swapaxes(n, -1, -2)
    k = 2.0 * abs(c) ** 2
    g11 = k * (_herm(a) @ a) * (_herm(b) @ b)
    g12 = 1j * k * (_herm(a) @ a2) * (_herm(b) @ b2)
    g22 = k * (_herm(a2) @ a2) * (_herm(b2) @ b2)
    return np.concatenate([np.concatenate([g11, g12], -1),
                           np.concatenate([_herm(g12), g22], -1)], -2)


def _herm(a):
    return np.swapaxes(a, -1, -2).conj()


def _gram_split(gram: np.ndarray):
    """``F = Q R`` in coefficient form: returns ``R`` and ``P`` with ``Q = F P``."""
    try:
        lam, w = np.linalg.eigh(gram)
    except np.linalg.LinAlgError as exc:
        raise GaugeFailure(str(exc)) from exc
    keep = lam > GRAM_TOL * lam[..., -1:]
    lam = np.where(keep, lam, 0.0)
    r = np.sqrt(lam)[..., :, None] * _herm(w)
    p = w * np.where(keep, 1.0 / np.sqrt(np.where(keep, lam, 1.0)), 0.0)[..., None, :]
    return r, p


def factored_svd(n: np.ndarray, c: complex):
    """Thin SVD of ``D_q2`` as ``U = F_up X_u``, singular values ``s``, ``conj(V) = F_dn X_v``.

    ``n`` has shape ``(..., 2, n_s, n_s)`` and ``c`` is the noise prefactor.
    """
    r_up, p_up = _gram_split(_khatri_rao_gram(n[..., 0, :, :], c))
    r_dn, p_dn = _gram_split(_khatri_rao_gram(n[..., 1, :, :], c))
    core = -0.5j * (r_up @ np.swapaxes(r_dn, -1, -2))
    try:
        uc, s, vch = np.linalg.svd(core)
    except np.linalg.LinAlgError as exc:
        raise GaugeFailure(str(exc)) from exc
    return p_up @ uc, s, p_dn @ np.swapaxes(vch, -1, -2)


def _apply_factor(n: np.ndarray, c: complex, y: np.ndarray) -> np.ndarray:
    """``unflatten(F y)`` for one spin: ``sqrt(2) c (n diag(y1) nt + i nt diag(y2) n)``."""
    n_s = n.shape[-1]
    nt = np.eye(n_s) - n
    y1, y2 = y[..., :n_s], y[..., n_s:]
    return np.sqrt(2.0) * c * ((n * y1[..., None, :]) @ nt + 1j * ((nt * y2[..., None, :]) @ n))


def factored_svd_increment(n: np.ndarray, c: complex, dw: np.ndarray) -> np.ndarray:
    """Noise increment of the factored SVD gauge, shape ``(..., 2, n_s, n_s)``.

    Column order matches ``assemble_noise``: ``dw[:r]`` and ``dw[r:]`` drive
    ``[U sqrt(S), i U sqrt(S)]`` on top and ``[i conj(V) sqrt(S), conj(V) sqrt(S)]``
    below, with ``r = 2 n_s``.
    """
    x_u, s, x_v = factored_svd(n, c)
    r = s.shape[-1]
    root = _root_sv(s)
    w_up = root * (dw[..., :r] + 1j * dw[..., r:])
    w_dn = root * (1j * dw[..., :r] + dw[..., r:])
    y_up = (x_u @ w_up[..., None])[..., 0]
    y_dn = (x_v @ w_dn[..., None])[..., 0]
    return np.stack([_apply_factor(n[..., 0, :, :], c, y_up),
                     _apply_factor(n[..., 1, :, :], c, y_dn)], axis=-3)


def factorize_classical(dq: np.ndarray, keep: int | None = None) -> np.ndarray:
    """Full dense SVD; ``keep`` truncates to the leading triplets."""
    try:
        u, s, vh = np.linalg.svd(-0.5j * dq)
    except np.linalg.LinAlgError as exc:
        raise GaugeFailure(str(exc)) from exc
    if keep is not None:
        u, s, vh = u[..., :keep], s[..., :keep], vh[..., :keep, :]
    return assemble_noise(u, s, vh)


def factorize_lowrank(dq: np.ndarray, rank: int | None = None) -> np.ndarray:
    """Deterministic truncated SVD (implicitly restarted Lanczos, ARPACK)."""
    rank = default_rank(dq) if rank is None else rank
    _check_rank(dq, rank)
    if dq.ndim > 2:
        flat = dq.reshape(-1, *dq.shape[-2:])
        out = np.stack([factorize_lowrank(d, rank) for d in flat])
        return out.reshape(*dq.shape[:-2], *out.shape[-2:])
    a = -0.5j * dq
    m = a.shape[0]
    if rank >= m - 1 or not np.any(a):
        u, s, vh = np.linalg.svd(a)
        return assemble_noise(u[:, :rank], s[:rank], vh[:rank])
    v0 = np.ones(m, dtype=complex) / np.sqrt(m)
    try:
        u, s, vh = scipy.sparse.linalg.svds(a, k=rank, v0=v0, tol=1e-14,
                                            solver="arpack")
    except scipy.sparse.linalg.ArpackError as exc:
        raise GaugeFailure(str(exc)) from exc
    order = np.argsort(s)[::-1]
    return assemble_noise(u[:, order], s[order], vh[order])


def factorize(dq: np.ndarray, gauge: GaugeMethod, rng: np.random.Generator | None = None,
              z: np.ndarray | None = None) -> np.ndarray:
    """Dispatch to the numerical gauge; the analytic gauge has no factorization step."""
    rank = default_rank(dq)
    if isinstance(gauge, RandomizedSvd):
        return factorize_randomized(dq, gauge.rank or rank, rng,
                                    oversample=gauge.oversample,
                                    power_iters=gauge.power_iters, z=z)
    if isinstance(gauge, ClassicalSvd):
        return factorize_classical(dq, keep=rank)
    if isinstance(gauge, LowRankSvd):
        return factorize_lowrank(dq, gauge.rank or rank)
    raise TypeError(f"{gauge!r} is not a numerical gauge")


def numeric_rank(a: np.ndarray, rtol: float = 1e-9) -> int:
    s = scipy.linalg.svdvals(a)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def verify_factorization(b: np.ndarray, dq: np.ndarray) -> FactorizationReport:
    t0 = time.perf_counter()
    d = assemble_diffusion(dq)
    if b.shape[0] != d.shape[0]:
        raise ValueError(f"noise matrix has {b.shape[0]} rows, diffusion needs {d.shape[0]}")
    err = np.linalg.norm(b @ b.T - d)
    residual = float(err / max(np.linalg.norm(d), np.finfo(float).tiny))
    rank = numeric_rank(b)
    return FactorizationReport(residual, rank, time.perf_counter() - t0)
