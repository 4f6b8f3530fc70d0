"""Frequency-domain reference computations of the QEF rate.

All integrals over the real frequency axis use a :class:`FrequencyGrid`:
the substitution ``lam = c tan(u)`` maps the axis onto ``(-pi/2, pi/2)``,
which is covered by Gauss-Legendre panels.  The integrands decay like
``1/lam^2`` so the transformed integrands stay bounded.

With ``K = i Psi`` Hermitian, the trigonometric functions of ``theta Psi``
become hyperbolic functions of ``theta K``:
``cos(theta Psi) = cosh(theta K)`` and
``tanc(theta Psi) = tanh(theta K) / (theta K)``.
Every matrix function below is evaluated on ``K`` via its eigendecomposition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .cascade import complex_sqrt
from .errors import OdeBlowup, ThetaBeyondThreshold
from .linalg import check_hermitian, hermitian_matfun, require_hurwitz
from .model import OqhoModel, mho

DEFAULT_NODES = 2048
PANEL = 16


def _herm(M):
    return 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))


def _ct(M):
    return np.conj(np.swapaxes(M, -1, -2))


@dataclass(frozen=True)
class FrequencyGrid:
    nodes: np.ndarray
    weights: np.ndarray
    scale: float

    def __len__(self):
        return len(self.nodes)

    def integrate(self, values) -> np.ndarray:
        """``int f(lam) dlam`` for samples with the node axis first."""
        values = np.asarray(values)
        return np.tensordot(self.weights, values, axes=(0, 0))


def default_scale(model: OqhoModel) -> float:
    """Spectral radius of ``A``.

    Resonance peaks of the integrands sit near the imaginary parts of the
    eigenvalues, so this places about half of the nodes on the interval
    that carries most of the mass.  A norm-based scale is much larger for
    non-normal ``A`` and wastes nodes in the tails.
    """
    return float(np.max(np.abs(np.linalg.eigvals(model.A))))


def make_grid(nodes: int = DEFAULT_NODES, scale: float = 1.0) -> FrequencyGrid:
    """Quadrature rule for the real line with ``nodes`` points.

    When ``nodes`` is a multiple of 16 the ``u``-interval is split into equal
    panels with 16-point Gauss-Legendre rules; otherwise one Gauss-Legendre
    rule of the requested size is used.
    """
    if nodes < 1:
        raise ValueError("nodes must be positive")
    if not scale > 0:
        raise ValueError("scale must be positive")
    if nodes % PANEL == 0:
        panels, q = nodes // PANEL, PANEL
    else:
        panels, q = 1, nodes
    x, w = np.polynomial.legendre.leggauss(q)
    edges = np.linspace(-np.pi / 2, np.pi / 2, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    u = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wu = (half[:, None] * w[None, :]).ravel()
    lam = scale * np.tan(u)
    wl = wu * scale / np.cos(u) ** 2
    # enforce exact symmetry about zero
    lam = 0.5 * (lam - lam[::-1])
    wl = 0.5 * (wl + wl[::-1])
    return FrequencyGrid(nodes=lam, weights=wl, scale=float(scale))


def model_grid(model: OqhoModel, nodes: int = DEFAULT_NODES,
               scale: Optional[float] = None) -> FrequencyGrid:
    return make_grid(nodes, default_scale(model) if scale is None else scale)


@dataclass(frozen=True)
class SpectralSamples:
    lams: np.ndarray
    E: np.ndarray
    Phi: np.ndarray
    Psi: np.ndarray

    @property
    def K(self) -> np.ndarray:
        """Hermitian ``i Psi``."""
        return _herm(1j * self.Psi)


def _lams(grid_or_lams):
    if isinstance(grid_or_lams, FrequencyGrid):
        return grid_or_lams.nodes
    return np.atleast_1d(np.asarray(grid_or_lams, dtype=float))


def resolvents(A, lams) -> np.ndarray:
    n = A.shape[0]
    M = 1j * np.asarray(lams)[:, None, None] * np.eye(n) - A
    return np.linalg.inv(M)


def spectral_samples(model: OqhoModel, grid) -> SpectralSamples:
    """``Phi = E BB^T E^*`` and ``Psi = E mho E^*`` at every node."""
    require_hurwitz(model.A)
    lams = _lams(grid)
    E = resolvents(model.A, lams)
    Eh = _ct(E)
    Phi = _herm(E @ (model.B @ model.B.T) @ Eh)
    Psi = E @ mho(model) @ Eh
    Psi = 0.5 * (Psi - _ct(Psi))
    return SpectralSamples(lams=lams, E=E, Phi=Phi, Psi=Psi)


def _tanhc(x):
    out = np.ones_like(x)
    nz = np.abs(x) > 1e-8
    out[nz] = np.tanh(x[nz]) / x[nz]
    # second-order Taylor term near zero
    out[~nz] = 1.0 - x[~nz] ** 2 / 3.0
    return out


def _phi(x):
    out = np.ones_like(x)
    nz = np.abs(x) > 1e-8
    out[nz] = np.expm1(x[nz]) / x[nz]
    out[~nz] = 1.0 + x[~nz] / 2.0
    return out


class _Prepared:
    """Theta-independent factorizations reused across theta evaluations."""

    def __init__(self, samples: SpectralSamples):
        self.samples = samples
        self.k, self.V = np.linalg.eigh(samples.K)
        self.sqrtPhi = hermitian_matfun(samples.Phi, lambda w: np.sqrt(np.clip(w, 0, None)))

    def fun_K(self, f):
        return (self.V * f(self.k)[..., None, :]) @ _ct(self.V)

    def tanc(self, theta):
        return self.fun_K(lambda k: _tanhc(theta * k))

    def d_hat(self, theta):
        n = self.k.shape[-1]
        S = self.sqrtPhi
        return _herm(np.eye(n) - theta * S @ self.tanc(theta) @ S)

    def coupling_max(self, theta):
        """``lambda_max(sqrt(Phi) tanc(theta Psi) sqrt(Phi))`` per node."""
        S = self.sqrtPhi
        return np.linalg.eigvalsh(_herm(S @ self.tanc(theta) @ S))[:, -1]

    def log_det_terms(self, theta):
        """``(ln det c_theta, ln det D_hat_theta)`` per node."""
        x = np.abs(theta * self.k)
        # ln cosh(x) = x + log1p(exp(-2x)) - ln 2, stable for large x
        lncosh = np.sum(x + np.log1p(np.exp(-2 * x)) - math.log(2.0), axis=-1)
        w = np.linalg.eigvalsh(self.d_hat(theta))
        if np.any(w[:, 0] <= 0):
            bad = int(np.argmin(w[:, 0]))
            raise ThetaBeyondThreshold(
                f"theta={theta:.6g}: D_hat not positive definite at "
                f"lam={self.samples.lams[bad]:.6g} (min eig {w[bad, 0]:.3e})")
        return lncosh, np.sum(np.log(w), axis=-1)


def log_det_integrand(model: OqhoModel, theta: float, grid) -> np.ndarray:
    """``ln det D_theta(lam)`` at the nodes via the split ``ln det c + ln det D_hat``."""
    prep = _Prepared(spectral_samples(model, grid))
    a, b = prep.log_det_terms(theta)
    return a + b


def qef_rate_direct(model: OqhoModel, theta: float, grid: FrequencyGrid) -> float:
    """``-(1/4pi) int ln det D_theta(lam) dlam``.

    Raises ThetaBeyondThreshold when ``D_hat`` loses positive definiteness at
    some node, i.e. ``theta`` is at or beyond the quantum threshold.
    """
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    if theta == 0:
        return 0.0
    vals = log_det_integrand(model, theta, grid)
    return float(-grid.integrate(vals) / (4 * np.pi))


def d_theta_direct(samples: SpectralSamples, theta: float) -> np.ndarray:
    """``D_theta = cos(theta Psi) - Phi Psi^{-1} sin(theta Psi)`` without splitting."""
    w, V = np.linalg.eigh(samples.K)
    c = (V * np.cosh(theta * w)[..., None, :]) @ _ct(V)
    # sin(theta Psi) = sin(-i theta K) = -i sinh(theta K)
    s = -1j * (V * np.sinh(theta * w)[..., None, :]) @ _ct(V)
    PsiInv_s = np.linalg.solve(samples.Psi, s)
    return c - samples.Phi @ PsiInv_s


def homotopy_closed_form(samples: SpectralSamples, theta: float) -> np.ndarray:
    """``U = (c - Phi Psi^{-1} s)^{-1} (Phi c + Psi s)`` at every node."""
    w, V = np.linalg.eigh(samples.K)
    c = (V * np.cosh(theta * w)[..., None, :]) @ _ct(V)
    s = -1j * (V * np.sinh(theta * w)[..., None, :]) @ _ct(V)
    D = c - samples.Phi @ np.linalg.solve(samples.Psi, s)
    return np.linalg.solve(D, samples.Phi @ c + samples.Psi @ s)


def homotopy_integrate(samples: SpectralSamples, theta: float, steps: int = 200):
    """RK4 for ``U' = Psi^2 + U^2``, ``U(0) = Phi`` together with ``int_0^theta Tr U``.

    Returns ``(U(theta), y)`` where ``y`` holds the per-node trace integral.
    """
    if steps < 1:
        raise ValueError("steps must be positive")
    Psi2 = samples.Psi @ samples.Psi
    U = samples.Phi.astype(complex)
    y = np.zeros(len(samples.lams))
    h = theta / steps

    def f(X):
        return Psi2 + X @ X

    def tr(X):
        return np.trace(X, axis1=-2, axis2=-1).real

    for i in range(steps):
        k1 = f(U)
        U2 = U + 0.5 * h * k1
        k2 = f(U2)
        U3 = U + 0.5 * h * k2
        k3 = f(U3)
        U4 = U + h * k3
        k4 = f(U4)
        y += h / 6.0 * (tr(U) + 2 * tr(U2) + 2 * tr(U3) + tr(U4))
        U = U + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        norm = np.max(np.abs(U))
        if not np.isfinite(norm) or norm > 1e12:
            raise OdeBlowup(f"Riccati ODE blew up at theta={(i + 1) * h:.6g}")
    return U, y


def qef_rate_homotopy(model: OqhoModel, theta: float, grid: FrequencyGrid,
                      theta_steps: int = 200) -> float:
    """Rate from the Riccati ODE in ``theta`` integrated at every node."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    if theta == 0:
        return 0.0
    _, y = homotopy_integrate(spectral_samples(model, grid), theta, theta_steps)
    return float(grid.integrate(y) / (4 * np.pi))


def _refine_sup(fun, lams, vals):
    """Refine a grid maximum of ``fun`` over ``lam >= 0`` by bounded search."""
    i = int(np.argmax(vals))
    best = float(vals[i])
    lo = lams[i - 1] if i > 0 else 0.0
    hi = lams[i + 1] if i + 1 < len(lams) else lams[i]
    if hi > lo:
        res = minimize_scalar(lambda x: -fun(x), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10 * max(1.0, hi)})
        best = max(best, -float(res.fun))
    return best


def _nonneg(grid):
    lams = grid.nodes
    return lams[lams >= 0]


def theta_zero(model: OqhoModel, grid: FrequencyGrid) -> float:
    """Classical threshold ``1 / sup_lam lambda_max(Phi(lam))``."""
    lams = _nonneg(grid)
    vals = np.linalg.eigvalsh(spectral_samples(model, lams).Phi)[:, -1]

    def at(lam):
        return float(np.linalg.eigvalsh(spectral_samples(model, [lam]).Phi[0])[-1])

    return 1.0 / _refine_sup(at, lams, vals)


class _Coupling:
    """``theta -> theta sup_lam lambda_max(sqrt(Phi) tanc(theta Psi) sqrt(Phi)) - 1``."""

    def __init__(self, model, grid, refine=True):
        self.model = model
        self.lams = _nonneg(grid)
        self.prep = _Prepared(spectral_samples(model, self.lams))
        self.refine = refine

    def sup(self, theta):
        vals = self.prep.coupling_max(theta)
        if not self.refine:
            return float(np.max(vals))

        def at(lam):
            return float(_Prepared(spectral_samples(self.model, [lam])).coupling_max(theta)[0])

        return _refine_sup(at, self.lams, vals)

    def __call__(self, theta):
        if theta == 0:
            return -1.0
        return theta * self.sup(theta) - 1.0


def theta_star(model: OqhoModel, grid: FrequencyGrid, *, tol: float = 1e-10,
               refine: bool = True, scan_points: int = 64) -> float:
    """Quantum threshold: the smallest root of ``g(theta) = 0``.

    The root is bracketed in ``[0, 4 theta_0]`` with geometric expansion of
    the upper end, then found by Brent's method.  A scan of ``g`` below the
    root checks for an earlier crossing (``g`` is not known to be monotone);
    if one exists that crossing is returned instead.  Returns ``inf`` when
    ``g`` stays negative up to ``2^60 theta_0``.
    """
    g = _Coupling(model, grid, refine)
    th0 = theta_zero(model, grid)
    lo, hi = 0.0, 4.0 * th0
    while g(hi) <= 0:
        lo, hi = hi, 2.0 * hi
        if hi > 2.0 ** 60 * th0:
            return math.inf
    root = brentq(g, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)
    ts = np.linspace(0.0, root, scan_points + 1)[1:-1]
    gs = np.array([g(t) for t in ts])
    if np.any(gs > 0):
        j = int(np.argmax(gs > 0))
        a = ts[j - 1] if j > 0 else 0.0
        root = brentq(g, a, ts[j], xtol=tol)
    return float(root)


def delta_spectral(model: OqhoModel, theta: float, lam) -> np.ndarray:
    """Spectral density ``Delta_theta(lam) = S E^* phi(2 theta K) E S``.

    ``S = sqrt(B Omega^T B^T)`` and ``K = i Psi(lam)``.  Accepts a scalar
    frequency or an array (the result then has a leading node axis).
    """
    scalar = np.ndim(lam) == 0
    samples = spectral_samples(model, lam)
    S = complex_sqrt(model)
    F = hermitian_matfun(samples.K, lambda k: _phi(2 * theta * k))
    out = _herm(S @ _ct(samples.E) @ F @ samples.E @ S)
    return out[0] if scalar else out


def delta_logdet_rate(model: OqhoModel, theta: float, grid: FrequencyGrid) -> float:
    """``-(1/4pi) int ln det(I - theta Delta_theta) dlam``."""
    n = model.n
    D = delta_spectral(model, theta, grid.nodes)
    w = np.linalg.eigvalsh(check_hermitian(np.eye(n) - theta * D, 1e-9))
    if np.any(w <= 0):
        raise ThetaBeyondThreshold(f"I - theta Delta not positive definite at theta={theta:.6g}")
    return float(-grid.integrate(np.sum(np.log(w), axis=-1)) / (4 * np.pi))


def pi_trace_integral(filt, weight, grid: FrequencyGrid) -> float:
    """``(1/2pi) int Tr(f_r^* H f_r) dlam`` for a truncated filter and weight."""
    from .statespace import pi_truncated
    P = pi_truncated(filt, weight, grid.nodes)
    tr = np.trace(P, axis1=-2, axis2=-1).real
    return float(grid.integrate(tr) / (2 * np.pi))
