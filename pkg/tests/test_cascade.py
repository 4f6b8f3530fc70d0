from math import e, factorial

import numpy as np
import pytest

from qefrate.cascade import (assemble_filter, assemble_weight, cascade_delta, compute_cascade,
                             complex_sqrt, phi_taylor_coeffs, psi_coeffs, realified_sqrt,
                             scheme_weights, verify_ordered_factorization,
                             verify_transposition)
from qefrate.errors import GammaSingular
from qefrate.freqdomain import delta_spectral
from qefrate.linalg import solve_lyapunov
from qefrate.model import BJ, OqhoModel, mho, random_pr_model


@pytest.fixture(scope="module")
def coeffs(model):
    return compute_cascade(model, 3)


def test_phi_coeffs():
    assert np.array_equal(phi_taylor_coeffs(0), [1.0])
    assert np.allclose(phi_taylor_coeffs(3), [1, 1 / 2, 1 / 6, 1 / 24], rtol=0, atol=1e-16)
    assert abs(phi_taylor_coeffs(20).sum() - (e - 1)) <= 1e-12


def test_psi_coeffs():
    psi = psi_coeffs(4)
    assert psi[0] == 1.0
    assert psi[1] == pytest.approx(1 / 4, abs=1e-15)
    assert psi[2] == pytest.approx(5 / 96, abs=1e-15)
    assert psi[3] == pytest.approx(1 / 128, abs=1e-15)
    assert psi[4] == pytest.approx(8.5720e-4, abs=5e-9)


def test_psi_convolution():
    K = 15
    psi, phi = psi_coeffs(K), phi_taylor_coeffs(K)
    conv = np.convolve(psi, psi)[: K + 1]
    assert np.max(np.abs(conv - phi)) <= 1e-12
    u = 0.5
    p = np.polyval(psi[::-1], u)
    # truncating both series at K leaves a remainder of order u^{K+1}/(K+2)!
    assert abs(p * p - np.polyval(phi[::-1], u)) <= 1e-12


def test_scheme_weights():
    assert np.allclose(scheme_weights("taylor", 0).weights, [1, 0.5])
    sq = scheme_weights("sqrtpoly", 1).weights
    assert sq[2] == pytest.approx(1 / 16) and sq[3] == 0.0
    for r in range(6):
        t = scheme_weights("taylor", r).weights
        s = scheme_weights("sqrtpoly", r).weights
        assert np.array_equal(t[: r + 1], s[: r + 1])
        assert len(t) == len(s) == 2 * r + 2
        assert s[-1] == 0.0
    with pytest.raises(ValueError):
        scheme_weights("pade", 1)


def test_sqrtpoly_is_square_of_truncation():
    r = 3
    psi = psi_coeffs(r)
    sq = np.convolve(psi, psi)
    assert np.allclose(scheme_weights("sqrtpoly", r).weights[: 2 * r + 1], sq, atol=1e-15)


def test_initial_layer(model, coeffs):
    Mho = mho(model)
    g0 = solve_lyapunov(model.A, Mho)
    assert np.array_equal(coeffs.beta[0], np.eye(4))
    assert np.allclose(coeffs.alpha[1], g0) and np.allclose(coeffs.gamma[0], g0)
    # for rounded data gamma_0 differs from the printed CCR matrix at rounding level
    assert np.abs(g0 - model.Theta).max() < 1e-3
    gi = np.linalg.inv(g0)
    assert np.allclose(coeffs.beta[1], gi @ Mho @ gi)
    assert np.allclose(coeffs.gamma[1], solve_lyapunov(model.A, g0 @ g0))
    assert np.allclose(coeffs.gamma[1], coeffs.gamma[1].T)


def test_initial_layer_exact_pr():
    m = random_pr_model(4, 6, seed=5)
    c = compute_cascade(m, 0)
    assert np.allclose(c.alpha[1], m.Theta, atol=1e-12)


@pytest.mark.parametrize("seed", [None, 1, 2, 3])
def test_parity_and_definiteness(model, seed):
    m = model if seed is None else random_pr_model(4, 6, seed=seed)
    c = compute_cascade(m, 3)
    for j, (b, d) in enumerate(zip(c.beta, c.beta_defect)):
        assert d <= 1e-10
        assert np.array_equal(b.T, (-1) ** j * b)
    for j, (g, d) in enumerate(zip(c.gamma, c.gamma_defect)):
        assert d <= 1e-10
        assert np.array_equal(g.T, -((-1) ** j) * g)
    for k in range(len(c.beta) // 2):
        assert np.linalg.eigvalsh((-1) ** k * c.beta[2 * k])[0] > 0
    for r in range(len(c.gamma) // 2):
        assert np.linalg.eigvalsh(-((-1) ** r) * c.gamma[2 * r + 1])[0] > 0


def test_no_gamma_singularity_on_example(coeffs):
    assert max(coeffs.gamma_condition_numbers) < 1e12


def test_gamma_singular_raised():
    # mho = 0 makes gamma_0 singular
    B = np.vstack([np.eye(2), np.eye(2)])
    m = OqhoModel(Theta=0.5 * np.kron(BJ, np.eye(2)), A=-np.eye(4), B=np.hstack([B, B]) / 2)
    with pytest.raises(GammaSingular) as info:
        compute_cascade(m, 1)
    assert info.value.index == 0 and info.value.exit_code == 4


def test_transposition(model, rng):
    Mho = mho(model)
    assert verify_transposition(model, Mho, 0.7) <= 1e-10
    assert verify_transposition(model, Mho, 0.0) <= 1e-10
    for _ in range(10):
        U = rng.standard_normal((4, 4))
        assert verify_transposition(model, U, rng.uniform(-10, 10)) <= 1e-10


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_ordered_factorization(model, coeffs, rng, k):
    assert verify_ordered_factorization(model, coeffs, k, 1.7) <= 1e-8
    for lam in rng.uniform(-8, 8, 10):
        assert verify_ordered_factorization(model, coeffs, k, lam) <= 1e-8


def test_balancing_preserves_products(model, coeffs):
    bal = coeffs.balance()
    assert bal.balanced and not coeffs.balanced
    for a in bal.alpha[1:]:
        assert np.linalg.norm(a, 2) == pytest.approx(1.0)
    for k in range(1, 5):
        assert verify_ordered_factorization(model, bal, k, 0.9) <= 1e-8


def test_realified_sqrt(model):
    RS = realified_sqrt(model)
    BBt, Mho = model.B @ model.B.T, mho(model)
    target = np.block([[BBt, Mho], [-Mho, BBt]])
    assert np.array_equal(RS, RS.T)
    assert np.abs(RS @ RS - target).max() <= 1e-10
    S = complex_sqrt(model)
    assert np.allclose(S, S.conj().T) and np.linalg.eigvalsh(S)[0] > -1e-12


def test_realified_sqrt_real_case():
    B = np.diag([1.0, 2.0])
    m = OqhoModel(Theta=0.5 * BJ, A=-np.eye(2), B=np.hstack([B, B]))
    RS = realified_sqrt(m)
    assert np.allclose(RS[:2, 2:], 0)


def test_boundary_psd_accepted():
    # B Omega^T B^T = I - iJ has eigenvalues 0 and 2
    m = OqhoModel(Theta=0.5 * BJ, A=-np.eye(2), B=np.eye(2))
    S = complex_sqrt(m)
    assert np.allclose(S @ S, np.eye(2) - 1j * BJ)


def test_filter_structure(model, coeffs):
    for r in range(4):
        f = assemble_filter(model, coeffs, r)
        assert f.nu == 4 * (r + 1) * 4
        assert np.array_equal(f.Bcal[8:], np.zeros((f.nu - 8, 8)))
        # eigenvalues are those of A with multiplicity 2(2r+2); repeated
        # defective eigenvalues are ill-conditioned, so compare
        # characteristic polynomials at sample points instead
        for s in (0.3 + 1.1j, -2.0 + 0.5j, 4.0j):
            lhs = np.linalg.slogdet(s * np.eye(f.nu) - f.Acal)
            one = np.linalg.slogdet(s * np.eye(4) - model.A)
            assert lhs[1] == pytest.approx(2 * (2 * r + 2) * one[1], rel=1e-12)
            assert lhs[0] == pytest.approx(one[0] ** (2 * (2 * r + 2)), abs=1e-9)
    f0 = assemble_filter(model, coeffs, 0)
    I2 = np.eye(2)
    assert np.array_equal(f0.Acal[8:, :8], np.kron(I2, coeffs.alpha[1]))
    assert np.array_equal(f0.Acal[:8, 8:], np.zeros((8, 8)))


def test_weight_structure(coeffs):
    theta = 0.05
    W = assemble_weight(coeffs, scheme_weights("taylor", 3), theta)
    assert np.array_equal(W.H, W.H.T)
    for k, f in enumerate(W.f_blocks):
        phi = 1 / factorial(2 * k + 1)
        assert np.allclose(f / ((4 * theta**2) ** k * phi), (-1) ** k * coeffs.beta[2 * k])
        assert np.linalg.eigvalsh(f)[0] > 0
    for g in W.g_blocks:
        assert np.allclose(g, -g.T)
    W0 = assemble_weight(coeffs, scheme_weights("taylor", 0), theta, 0)
    h0 = np.block([[np.eye(8), np.zeros((8, 8))],
                   [np.zeros((8, 8)), theta * np.kron(BJ, coeffs.beta[1])]])
    assert np.allclose(W0.H, h0)
    Wz = assemble_weight(coeffs, scheme_weights("taylor", 3), 0.0)
    expect = np.zeros_like(Wz.H)
    expect[:8, :8] = np.eye(8)
    assert np.array_equal(Wz.H, expect)


def test_cascade_delta_converges(model, tstar, rng):
    c = compute_cascade(model, 5)
    theta = 0.5 * tstar
    for lam in rng.uniform(-6, 6, 5):
        exact = delta_spectral(model, theta, lam)
        res = [np.linalg.norm(cascade_delta(model, c, theta, lam, K) - exact)
               for K in range(1, 10)]
        floor = 1e-12 * np.linalg.norm(exact)
        assert all(b < a for a, b in zip(res, res[1:]) if a > floor)
        assert res[-1] <= 1e-9 * np.linalg.norm(exact)
