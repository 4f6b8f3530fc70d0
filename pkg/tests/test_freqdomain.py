from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad

from qefrate.cascade import (assemble_filter, assemble_weight, cascade_delta, complex_sqrt,
                             compute_cascade, resolvent, scheme_weights)
from qefrate.errors import OdeBlowup, ThetaBeyondThreshold
from qefrate.freqdomain import (_Prepared, d_theta_direct, delta_spectral, homotopy_closed_form,
                                homotopy_integrate, delta_logdet_rate, log_det_integrand, make_grid,
                                model_grid, qef_rate_direct, qef_rate_homotopy,
                                spectral_samples, theta_star, theta_zero)
from qefrate.linalg import solve_lyapunov
from qefrate.model import gramian, mho, random_pr_model
from qefrate.statespace import pi_truncated, qef_rate_ss


def quad_rate(model, theta):
    """Adaptive-quadrature oracle for the log-determinant integral."""
    def f(lam):
        return float(log_det_integrand(model, theta, [lam])[0])
    val = 2 * quad(f, 0, np.inf, limit=400, epsabs=1e-12, epsrel=1e-11)[0]
    return -val / (4 * np.pi)


def test_grid_basics():
    g = make_grid(256, 2.0)
    assert len(g) == 256
    assert np.all(np.diff(g.nodes) > 0)
    assert np.array_equal(g.nodes, -g.nodes[::-1])
    assert np.all(g.weights > 0)
    assert g.integrate(1 / (1 + g.nodes**2)) == pytest.approx(np.pi, rel=1e-12)
    odd = make_grid(33, 1.0)
    assert odd.integrate(1 / (1 + odd.nodes**2)) == pytest.approx(np.pi, rel=1e-10)
    with pytest.raises(ValueError):
        make_grid(0)


def test_spectral_invariants(model, grid):
    s = spectral_samples(model, grid)
    Phi, Psi = s.Phi, s.Psi
    assert np.array_equal(Phi, np.conj(np.swapaxes(Phi, -1, -2)))
    assert np.array_equal(Psi, -np.conj(np.swapaxes(Psi, -1, -2)))
    assert np.linalg.eigvalsh(Phi)[:, 0].min() >= -1e-10
    # real impulse responses: values at -lam are complex conjugates
    assert np.allclose(Phi[::-1], np.conj(Phi), atol=1e-14)
    assert np.allclose(Psi[::-1], np.conj(Psi), atol=1e-14)


def test_tail_decay(model):
    s = spectral_samples(model, [1e3, 1e4])
    for X in (s.Phi, s.Psi):
        r = np.linalg.norm(X[1]) / np.linalg.norm(X[0])
        assert r == pytest.approx(1e-2, rel=1e-2)


def test_inverse_fourier_at_zero(model, grid):
    s = spectral_samples(model, grid)
    G = gramian(model)
    Th = solve_lyapunov(model.A, mho(model))
    P0 = grid.integrate(s.Phi) / (2 * np.pi)
    L0 = grid.integrate(s.Psi) / (2 * np.pi)
    assert np.linalg.norm(P0 - G) <= 1e-4 * np.linalg.norm(G)
    assert np.linalg.norm(L0 - Th) <= 1e-4 * np.linalg.norm(Th)
    # for the printed CCR matrix the agreement is limited by its rounding
    assert np.linalg.norm(L0 - model.Theta) <= 1e-4 * np.linalg.norm(model.Theta)


def test_trace_psi_integral_vanishes(model, grid):
    s = spectral_samples(model, grid)
    tr = np.abs(grid.integrate(np.trace(s.Psi, axis1=1, axis2=2)))
    scale = grid.integrate(np.linalg.norm(s.Psi, axis=(1, 2)))
    assert tr <= 1e-6 * scale


def test_rate_direct_zero(model, grid):
    assert qef_rate_direct(model, 0.0, grid) == 0.0
    assert qef_rate_homotopy(model, 0.0, grid) == 0.0


def test_rate_direct_quadrature_oracle(model, grid, tstar):
    for f in (0.5, 0.99):
        theta = f * tstar
        assert qef_rate_direct(model, theta, grid) == pytest.approx(quad_rate(model, theta),
                                                                    rel=1e-7)


def test_rate_direct_on_example(model, grid):
    # the exact integral at 0.0792 on the printed data
    assert qef_rate_direct(model, 0.0792, grid) == pytest.approx(1.8378047, abs=1e-6)


def test_rate_is_real_and_symmetric(model, grid, tstar):
    vals = log_det_integrand(model, 0.5 * tstar, grid)
    assert vals.dtype.kind == "f"
    assert np.allclose(vals, vals[::-1], atol=1e-12)


def test_beyond_threshold(model, grid, tstar):
    with pytest.raises(ThetaBeyondThreshold):
        qef_rate_direct(model, 1.05 * tstar, grid)
    with pytest.raises(OdeBlowup):
        qef_rate_homotopy(model, 3 * tstar, grid)


def test_log_det_split(model, rng, tstar):
    lams = rng.uniform(-8, 8, 12)
    s = spectral_samples(model, lams)
    for theta in (0.3 * tstar, 0.9 * tstar):
        split = _Prepared(s).log_det_terms(theta)
        D = d_theta_direct(s, theta)
        sign, logabs = np.linalg.slogdet(D)
        assert np.allclose(sign, 1, atol=1e-8)
        assert np.allclose(split[0] + split[1], logabs, atol=1e-8)


def test_second_order_ode(model):
    s = spectral_samples(model, [0.4, 1.9, 3.3])
    theta, h = 0.04, 1e-3
    D = [d_theta_direct(s, theta + k * h) for k in (-1, 0, 1)]
    second = (D[2] - 2 * D[1] + D[0]) / h**2
    expected = -D[1] @ s.Psi @ s.Psi
    for i in range(3):
        assert np.linalg.norm(second[i] - expected[i]) <= 1e-4 * np.linalg.norm(expected[i])


def test_homotopy_closed_form(model, tstar):
    s = spectral_samples(model, [1.1])
    theta = 0.3 * tstar
    U, _ = homotopy_integrate(s, theta)
    assert np.abs(U - homotopy_closed_form(s, theta)).max() <= 1e-6


def test_homotopy_matches_direct(model, grid, tstar):
    theta = 0.5 * tstar
    d = qef_rate_direct(model, theta, grid)
    h = qef_rate_homotopy(model, theta, grid)
    assert abs(d - h) <= 1e-3 * (1 + abs(d))


def test_delta_logdet_rate(model, grid, tstar):
    theta = 0.5 * tstar
    d = qef_rate_direct(model, theta, grid)
    assert abs(delta_logdet_rate(model, theta, grid) - d) <= 1e-3 * (1 + abs(d))


def test_delta_properties(model, tstar, rng):
    lam = 0.8
    D = delta_spectral(model, 0.5 * tstar, lam)
    assert np.allclose(D, D.conj().T)
    assert np.linalg.eigvalsh(D)[0] >= -1e-12
    # theta = 0 reduces to S E^* E S
    S, E = complex_sqrt(model), resolvent(model.A, lam)
    assert np.allclose(delta_spectral(model, 0.0, lam), S @ E.conj().T @ E @ S)


def test_small_theta_delta_integral(model, grid):
    theta = 1e-5
    half = 0.5 * np.trace(gramian(model))
    assert delta_logdet_rate(model, theta, grid) / theta == pytest.approx(half, rel=1e-3)


def test_pi_eigenvalue_union(model, tstar, rng):
    theta, r = 0.5 * tstar, 2
    c = compute_cascade(model, r)
    sch = scheme_weights("taylor", r)
    filt = assemble_filter(model, c, r)
    W = assemble_weight(c, sch, theta, r)
    for lam in rng.uniform(-6, 6, 4):
        Pi = pi_truncated(filt, W, [lam])[0]
        Dp = cascade_delta(model, c, theta, lam, 2 * r + 1, weights=sch.weights)
        Dm = cascade_delta(model, c, theta, -lam, 2 * r + 1, weights=sch.weights)
        union = np.sort(np.concatenate([np.linalg.eigvalsh(Dp), np.linalg.eigvalsh(Dm.T)]))
        assert np.allclose(np.linalg.eigvalsh(Pi), union, atol=1e-8)


def test_thresholds_on_example(tstar, tzero):
    assert tstar == pytest.approx(0.0792, abs=1e-3)
    assert tzero == pytest.approx(0.0788, abs=1e-3)
    # tanh(x)/x <= 1 so the quantum threshold is never below the classical one
    assert tstar >= tzero


def test_threshold_characterisation(model, grid, tstar):
    with pytest.raises(ThetaBeyondThreshold):
        qef_rate_direct(model, tstar * (1 + 1e-6), grid)
    qef_rate_direct(model, tstar * (1 - 1e-6), grid)


def test_theta_zero_scaling(model, grid):
    t0 = theta_zero(model, grid)
    for c in (0.5, 2.0, 3.0):
        scaled = replace(model, B=c * model.B)
        assert theta_zero(scaled, grid) == pytest.approx(t0 / c**2, rel=1e-8)


def test_theta_star_nonincreasing_in_B_scale(model):
    grid = model_grid(model, 512)
    vals = [theta_star(replace(model, B=c * model.B), grid, refine=False)
            for c in (1.0, 1.5, 2.0, 3.0)]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(vals, vals[1:]))


def test_state_space_agrees_with_frequency_domain():
    m = random_pr_model(2, 4, seed=9)
    g = model_grid(m)
    ts = theta_star(m, g)
    for f in (0.2, 0.5):
        d = qef_rate_direct(m, f * ts, g)
        assert qef_rate_ss(m, f * ts, 3).rate == pytest.approx(d, abs=1e-2 * (1 + abs(d)))
