import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fhgpsr import gauge as g
from fhgpsr.lattice import HubbardParams
from fhgpsr.phase_space import (analytic_noise, assemble_diffusion, diffusion_block,
                                diffusion_factors, noise_prefactor)


def random_point(n_s, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(2, n_s, n_s)) + 1j * rng.normal(size=(2, n_s, n_s))


def residual(b, dq):
    d = assemble_diffusion(dq)
    return np.linalg.norm(b @ b.T - d) / np.linalg.norm(d)


GAUGES = {
    "rsvd": lambda dq, n_s: g.factorize_randomized(dq, 2 * n_s, seed=3),
    "svd": lambda dq, n_s: g.factorize_classical(dq, keep=2 * n_s),
    "svd-full": lambda dq, n_s: g.factorize_classical(dq),
    "lowrank": lambda dq, n_s: g.factorize_lowrank(dq, 2 * n_s),
}


@pytest.mark.parametrize("n_s", [3, 4, 6, 8])
@pytest.mark.parametrize("name", sorted(GAUGES))
def test_gauge_reproduces_diffusion(name, n_s):
    dq = diffusion_block(random_point(n_s, n_s), HubbardParams())
    b = GAUGES[name](dq, n_s)
    assert residual(b, dq) < 1e-10


@pytest.mark.parametrize("n_s", [3, 5, 8])
def test_factored_randomized_svd_equals_explicit(n_s):
    n = random_point(n_s, 7)
    par = HubbardParams(U=1.4)
    z = g.gaussian_test_matrix(np.random.default_rng(0), n_s * n_s, 2 * n_s)
    explicit = g.factorize_randomized(diffusion_block(n, par), 2 * n_s, z=z)
    f_up, f_dn = diffusion_factors(n, par)
    factored = g.factorize_randomized_factored(f_up, f_dn, z, 2 * n_s)
    assert np.abs(explicit - factored).max() < 1e-10


def test_block_structure_of_numerical_gauge():
    n_s = 4
    dq = diffusion_block(random_point(n_s, 1), HubbardParams())
    b = g.factorize_classical(dq, keep=2 * n_s)
    h = n_s * n_s
    top, bottom = b[:h], b[h:]
    assert b.shape == (2 * h, 4 * n_s)
    assert np.allclose(top[:, 2 * n_s:], 1j * top[:, :2 * n_s])
    assert np.allclose(bottom[:, :2 * n_s], 1j * bottom[:, 2 * n_s:])
    # the same-spin blocks of B B^T vanish
    assert np.abs(top @ top.T).max() < 1e-12 * np.abs(dq).max()


def test_randomized_svd_is_deterministic_given_seed():
    dq = diffusion_block(random_point(5, 2), HubbardParams())
    a = g.factorize_randomized(dq, 10, seed=11)
    b = g.factorize_randomized(dq, 10, seed=11)
    assert np.array_equal(a, b)


def test_rank_truncation_residual_decreases():
    n_s = 6
    dq = diffusion_block(random_point(n_s, 4), HubbardParams())
    res = [residual(g.factorize_classical(dq, keep=k), dq) for k in range(1, 2 * n_s + 1)]
    assert all(r2 <= r1 + 1e-12 for r1, r2 in zip(res, res[1:]))
    # rank of D_q is 2 n_s - 2, so keeping that many triplets is already exact
    assert res[2 * n_s - 3] < 1e-10
    assert res[2 * n_s - 4] > 1e-6


def test_randomized_svd_recovers_low_rank_matrix():
    rng = np.random.default_rng(5)
    a = (rng.normal(size=(40, 6)) + 1j * rng.normal(size=(40, 6))) @ \
        (rng.normal(size=(6, 30)) + 1j * rng.normal(size=(6, 30)))
    z = g.gaussian_test_matrix(rng, 30, 8)
    u, s, vh = g.randomized_svd(a, z, 6)
    assert np.allclose((u * s) @ vh, a)
    assert np.allclose(s, np.linalg.svd(a, compute_uv=False)[:6])


def test_tiny_singular_values_are_zeroed_not_dropped():
    u = np.eye(4, 3, dtype=complex)
    b = g.assemble_noise(u, np.array([1.0, 1e-14, 0.0]), np.eye(3, 4, dtype=complex))
    assert b.shape == (8, 6)
    assert np.all(b[:, 1] == 0) and np.all(b[:, 2] == 0)


def test_gauges_agree_on_second_moments():
    n = random_point(4, 9)
    par = HubbardParams()
    dq = diffusion_block(n, par)
    b0 = analytic_noise(n, par)
    b1 = g.factorize_randomized(dq, 8, seed=0)
    assert np.linalg.norm(b0 @ b0.T - b1 @ b1.T) / np.linalg.norm(b0 @ b0.T) < 1e-10


def test_increment_covariance_matches_diffusion():
    """Sampled ``B dW`` has ``E[x x^T] = D dt`` (complex symmetric, not Hermitian)."""
    n_s, dt, samples = 3, 1e-2, 100_000
    n = random_point(n_s, 21) * 0.3
    par = HubbardParams()
    dq = diffusion_block(n, par)
    d = assemble_diffusion(dq)
    rng = np.random.default_rng(0)
    for b in (analytic_noise(n, par), g.factorize_randomized(dq, 2 * n_s, seed=1)):
        dw = rng.normal(size=(samples, b.shape[1])) * np.sqrt(dt)
        x = dw @ b.T
        prods = x[:, :, None] * x[:, None, :]
        cov = prods.mean(axis=0)
        se = np.abs(prods - cov).std(axis=0) / np.sqrt(samples)
        # 5 standard errors per entry; entries that vanish identically have se = 0
        assert np.all(np.abs(cov - d * dt) <= 5 * se + 1e-15)


@given(st.integers(2, 5), st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_every_gauge_report_is_exact(n_s, seed):
    dq = diffusion_block(random_point(n_s, seed), HubbardParams(U=0.5 + seed % 3))
    for gauge in (g.ClassicalSvd(), g.LowRankSvd(), g.RandomizedSvd()):
        b = g.factorize(dq, gauge, np.random.default_rng(seed))
        rep = g.verify_factorization(b, dq)
        assert rep.residual < 1e-10
        assert rep.numeric_rank == 4 * n_s - 4


def test_invalid_requests():
    dq = diffusion_block(random_point(3, 0), HubbardParams())
    with pytest.raises(ValueError):
        g.factorize_randomized(dq, 0)
    with pytest.raises(ValueError):
        g.factorize_lowrank(dq, 100)
    with pytest.raises(ValueError):
        g.gauge_from_name("cholesky")
    with pytest.raises(ValueError):
        g.RandomizedSvd(refresh="sometimes")
    with pytest.raises(TypeError):
        g.factorize(dq, g.Analytic())


def test_zero_diffusion_factorizes_to_zero():
    dq = np.zeros((9, 9), complex)
    for gauge in (g.ClassicalSvd(), g.LowRankSvd(), g.RandomizedSvd()):
        assert not np.any(g.factorize(dq, gauge, np.random.default_rng(0)))


def test_increment_from_triplets_matches_noise_matrix():
    n_s = 5
    n = random_point(n_s, 30)
    f_up, f_dn = diffusion_factors(n, HubbardParams())
    z = g.gaussian_test_matrix(np.random.default_rng(1), n_s * n_s, 2 * n_s)
    u, s, vh = g.randomized_svd_factored(f_up, f_dn, z, 2 * n_s)
    dw = np.random.default_rng(2).normal(size=4 * n_s)
    assert np.allclose(g.noise_from_triplets(u, s, vh, dw), g.assemble_noise(u, s, vh) @ dw,
                       atol=1e-13)


def column_matrix(increment, n, k):
    """Noise matrix recovered column by column from a linear increment map."""
    return np.stack([increment(n, e).reshape(-1) for e in np.eye(k)], axis=-1)


@pytest.mark.parametrize("n_s", [2, 3, 6, 9])
@pytest.mark.parametrize("near_fock", [False, True])
def test_factored_svd_gauge_matches_dense_svd_gauge(n_s, near_fock):
    rng = np.random.default_rng(n_s)
    n = rng.normal(size=(2, n_s, n_s)) + 1j * rng.normal(size=(2, n_s, n_s))
    if near_fock:
        occ = (np.arange(n_s) < n_s // 2).astype(float)
        n = np.stack([np.diag(occ), np.diag(1 - occ)]) + 1e-3 * n
    par = HubbardParams(U=0.8)
    c = noise_prefactor(par)
    b = column_matrix(lambda p, e: g.factored_svd_increment(p, c, e), n, 4 * n_s)
    dq = diffusion_block(n, par)
    assert residual(b, dq) < 1e-12
    dense = g.factorize_classical(dq, keep=2 * n_s)
    # same pseudo-covariance and same covariance: identical complex Gaussian law
    assert np.linalg.norm(b @ b.conj().T - dense @ dense.conj().T) < 1e-12 * np.linalg.norm(b) ** 2


def test_factored_svd_handles_zero_noise():
    n = np.stack([np.diag([1.0, 0.0, 1.0]), np.diag([0.0, 1.0, 0.0])]).astype(complex)
    inc = g.factored_svd_increment(n, noise_prefactor(HubbardParams()), np.ones(12))
    assert np.all(inc == 0)


def test_randomized_phase_does_not_change_covariances():
    """Different test matrices rotate singular-pair phases but not B B^T or B B^H."""
    dq = diffusion_block(random_point(4, 17), HubbardParams())
    a = g.factorize_randomized(dq, 8, seed=1)
    b = g.factorize_randomized(dq, 8, seed=2)
    assert not np.allclose(a, b)
    assert np.allclose(a @ a.T, b @ b.T, atol=1e-12)
    assert np.allclose(a @ a.conj().T, b @ b.conj().T, atol=1e-12)
