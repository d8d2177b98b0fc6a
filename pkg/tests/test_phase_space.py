import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fhgpsr.gauge import numeric_rank
from fhgpsr.lattice import HubbardParams, build_lattice
from fhgpsr.phase_space import (PhaseSpacePoint, analytic_increment, analytic_noise,
                                assemble_diffusion, diagonal_point, diffusion_block,
                                drift, flatten, holes, hopping_drift, interaction_drift,
                                noise_blocks, unflatten)

from fock_oracle import FockOracle


def random_point(n_s, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(2, n_s, n_s)) + 1j * rng.normal(size=(2, n_s, n_s))


def explicit_diffusion(n, U):
    """Element formula ``D_{ij up, kl dn} = iU sum_a (nt_aj n_ia nt_al n_ka - n_aj nt_ia n_al nt_ka)``."""
    nu, nd = n
    tu, td = holes(n)
    return 1j * U * (np.einsum("aj,ia,al,ka->ijkl", tu, nu, td, nd)
                     - np.einsum("aj,ia,al,ka->ijkl", nu, tu, nd, td))


@pytest.fixture(scope="module")
def oracle():
    return FockOracle(build_lattice((3,)).tunneling, U=1.3, seed=1)


def test_drift_matches_fock_oracle(oracle):
    lat = build_lattice((3,))
    n = oracle.point()
    a = drift(n, lat, HubbardParams(U=1.3))
    assert np.abs(a - oracle.first_derivative()).max() < 1e-10


def test_diffusion_matches_fock_oracle(oracle):
    lat = build_lattice((3,))
    par = HubbardParams(U=1.3)
    n = oracle.point()
    d_exact = oracle.opposite_spin_diffusion(drift(n, lat, par))
    assert np.abs(explicit_diffusion(n, 1.3) - d_exact).max() < 1e-10
    dq = diffusion_block(n, par).reshape((3,) * 4)
    assert np.abs(dq - d_exact).max() < 1e-10


@pytest.mark.parametrize("n_s", [2, 3, 5, 8])
def test_block_product_equals_element_formula(n_s):
    n = random_point(n_s, n_s)
    par = HubbardParams(U=0.7)
    dq = diffusion_block(n, par)
    ref = explicit_diffusion(n, 0.7).reshape(n_s * n_s, n_s * n_s)
    assert np.linalg.norm(dq - ref) / np.linalg.norm(ref) < 1e-12


@pytest.mark.parametrize("n_s", [3, 4, 6])
def test_analytic_noise_factorizes_diffusion(n_s):
    n = random_point(n_s, 10 + n_s)
    par = HubbardParams(U=1.0)
    b0 = analytic_noise(n, par)
    assert b0.shape == (2 * n_s * n_s, 4 * n_s)
    d = assemble_diffusion(diffusion_block(n, par))
    assert np.linalg.norm(b0 @ b0.T - d) / np.linalg.norm(d) < 1e-12


@pytest.mark.parametrize("n_s", [4, 6, 8])
def test_rank_facts(n_s):
    n = random_point(n_s, 100 + n_s)
    par = HubbardParams()
    assert numeric_rank(analytic_noise(n, par)) == 4 * n_s - 2
    assert numeric_rank(assemble_diffusion(diffusion_block(n, par))) == 4 * n_s - 4
    assert numeric_rank(diffusion_block(n, par)) == 2 * n_s - 2


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_analytic_increment_equals_matrix_product(n_s, seed):
    n = random_point(n_s, seed)
    par = HubbardParams(U=1.7, hbar=0.9)
    dw = np.random.default_rng(seed + 1).normal(size=4 * n_s)
    direct = unflatten(analytic_noise(n, par) @ dw, n_s)
    assert np.allclose(analytic_increment(n, par, dw), direct, atol=1e-12)


def test_batched_noise_blocks_match_single():
    pts = np.stack([random_point(4, s) for s in range(3)])
    par = HubbardParams()
    b1, b2 = noise_blocks(pts, par)
    for k in range(3):
        s1, s2 = noise_blocks(pts[k], par)
        assert np.array_equal(b1[k], s1) and np.array_equal(b2[k], s2)


def test_flatten_layout_puts_spin_up_first():
    n = np.arange(2 * 9).reshape(2, 3, 3)
    x = flatten(n)
    # row = sigma * n_s**2 + i * n_s + j
    assert x[0 * 9 + 1 * 3 + 2] == n[0, 1, 2]
    assert x[1 * 9 + 2 * 3 + 0] == n[1, 2, 0]
    assert np.array_equal(unflatten(x, 3), n)


def test_diagonal_state_has_hopping_drift_only():
    lat = build_lattice((4,))
    n0 = diagonal_point([1, 1, 0, 0], [0, 0, 1, 1])
    par = HubbardParams(U=2.0)
    assert np.allclose(interaction_drift(n0, par), 0)
    a = drift(n0, lat, par)
    # only the bond between the filled and empty halves starts moving
    assert np.allclose(a[0], 1j * (lat.tunneling @ n0[0] - n0[0] @ lat.tunneling))
    assert a[0, 1, 2] == pytest.approx(-1j) and a[0, 2, 1] == pytest.approx(1j)
    assert np.allclose(analytic_noise(n0, par), 0)


def test_drift_finite_difference_of_exact_flow():
    """At U=0 the drift is the derivative of n(t) = e^{iJt} n e^{-iJt}."""
    import scipy.linalg
    lat = build_lattice((5,))
    n = random_point(5, 3)
    par = HubbardParams(U=0.0)
    h = 1e-6
    p = scipy.linalg.expm(1j * h * lat.tunneling)
    fd = (p @ n @ p.conj().T - p.conj().T @ n @ p) / (2 * h)
    assert np.allclose(fd, hopping_drift(n, lat, par), atol=1e-7)
    assert np.allclose(drift(n, lat, par), hopping_drift(n, lat, par))


def test_phase_space_point_stacking():
    p = PhaseSpacePoint(np.eye(2), np.zeros((2, 2)))
    assert p.stacked().dtype == complex
    assert np.array_equal(drift(p, build_lattice((2,)), HubbardParams()),
                          drift(p.stacked(), build_lattice((2,)), HubbardParams()))
