"""Lyapunov-equation cascade and the truncated shaping filter.

The matrices ``alpha_j``, ``beta_j``, ``gamma_j`` produced by the recursion

    alpha_{j+1} = gamma_j beta_j
    beta_{j+1}  = gamma_j^{-1} alpha_j gamma_{j-1} gamma_j^{-1}
    gamma_j     = L_A(alpha_j gamma_{j-1})

with ``alpha_1 = gamma_0 = L_A(BJB^T)``, ``beta_0 = I`` and
``beta_1 = gamma_0^{-1} BJB^T gamma_0^{-1}`` reorder powers of
``E mho E^~`` (``E(s) = (sI - A)^{-1}``) so that all conjugate factors sit
to the left.  Truncating the resulting infinite cascade gives a finite
Gaussian shaping filter whose risk-sensitive cost reproduces the quantum
rate.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import factorial
from typing import List

import numpy as np

from .errors import GammaSingular, NotPSD, SingularV
from .linalg import check_hermitian, psd_sqrt, require_hurwitz, solve_lyapunov
from .model import BJ, OqhoModel, mho

GAMMA_COND_MAX = 1e12
SCHEMES = ("taylor", "sqrtpoly")


def phi_taylor_coeffs(K: int) -> np.ndarray:
    """Taylor coefficients ``1/(k+1)!`` of ``phi(u) = (e^u - 1)/u``, k = 0..K."""
    return np.array([1.0 / factorial(k + 1) for k in range(K + 1)])


def psi_coeffs(K: int) -> np.ndarray:
    """Taylor coefficients of ``sqrt(phi(u))`` (positive branch), k = 0..K."""
    phi = phi_taylor_coeffs(K)
    psi = np.zeros(K + 1)
    psi[0] = 1.0
    for k in range(1, K + 1):
        psi[k] = 0.5 * (phi[k] - np.dot(psi[1:k], psi[k - 1:0:-1]))
    return psi


@dataclass(frozen=True)
class CoefficientScheme:
    kind: str
    r: int
    weights: np.ndarray  # phi-tilde_0 .. phi-tilde_{2r+1}


def scheme_weights(kind: str, r: int) -> CoefficientScheme:
    """Scalar weights replacing ``phi_0..phi_{2r+1}`` in the weight matrix.

    ``taylor`` keeps the truncated Taylor series.  ``sqrtpoly`` uses the
    coefficients of the squared degree-``r`` truncation of ``sqrt(phi)``,
    which is nonnegative on the real line; its top coefficient (index
    ``2r+1``) vanishes.
    """
    if kind not in SCHEMES:
        raise ValueError(f"unknown scheme {kind!r}; expected one of {SCHEMES}")
    if r < 0:
        raise ValueError("r must be nonnegative")
    if kind == "taylor":
        return CoefficientScheme(kind, r, phi_taylor_coeffs(2 * r + 1))
    psi = psi_coeffs(r)
    w = np.zeros(2 * r + 2)
    w[: r + 1] = phi_taylor_coeffs(r)
    for k in range(r + 1, 2 * r + 1):
        w[k] = sum(psi[j] * psi[k - j] for j in range(k - r, r + 1))
    return CoefficientScheme(kind, r, w)


@dataclass(frozen=True)
class CascadeCoefficients:
    """Cascade matrices for indices ``0..2r+1``.

    ``alpha[0]`` is the identity by convention.  ``scales`` holds the
    balancing factors (all ones for the raw recursion); the products that
    enter the filter are invariant under balancing, the individual matrices
    are not.  ``beta_defect`` and ``gamma_defect`` record the relative
    departure from the expected (anti)symmetry before projection.
    """

    r: int
    alpha: List[np.ndarray]
    beta: List[np.ndarray]
    gamma: List[np.ndarray]
    gamma_condition_numbers: List[float]
    beta_defect: List[float] = field(default_factory=list)
    gamma_defect: List[float] = field(default_factory=list)
    scales: List[float] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.alpha[0].shape[0]

    @property
    def balanced(self) -> bool:
        return any(s != 1.0 for s in self.scales)

    def balance(self) -> "CascadeCoefficients":
        """Rescale ``alpha_k -> alpha_k / s_k``, ``beta_k -> beta_k prod_{j<=k} s_j^2``
        with ``s_k = ||alpha_k||`` so that every ``alpha_k`` has unit norm."""
        scales = [1.0] + [float(np.linalg.norm(a, 2)) for a in self.alpha[1:]]
        alpha = [self.alpha[0]] + [a / s for a, s in zip(self.alpha[1:], scales[1:])]
        beta, acc = [], 1.0
        for k, b in enumerate(self.beta):
            acc *= scales[k] ** 2
            beta.append(b * acc)
        return replace(self, alpha=alpha, beta=beta, scales=scales)


def _project(M, sign):
    """Project onto symmetric (sign=+1) or antisymmetric (sign=-1) matrices."""
    return 0.5 * (M + sign * M.T)


def _defect(M, sign):
    return float(np.linalg.norm(M - sign * M.T) / max(np.linalg.norm(M), 1e-300))


def compute_cascade(model: OqhoModel, r: int, *, balance: bool = False) -> CascadeCoefficients:
    """Run the recursion up to index ``2r+1``.

    ``gamma_0`` is the Lyapunov solution ``L_A(BJB^T)``, which coincides with
    the CCR matrix when the physical realizability condition holds exactly
    and keeps the cascade consistent with ``(A, B)`` when it holds only
    approximately (e.g. for rounded data).

    Raises GammaSingular(j) if ``cond(gamma_j) > 1e12`` for some ``j <= 2r``.
    ``gamma_{2r+1}`` is computed for diagnostics only.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    A = model.A
    require_hurwitz(A)
    n = model.n
    Mho = mho(model)
    top = 2 * r + 1

    def sign_beta(j):
        return 1 if j % 2 == 0 else -1

    def sign_gamma(j):
        return -sign_beta(j)

    gamma0 = solve_lyapunov(A, Mho)
    cond0 = float(np.linalg.cond(gamma0))
    if cond0 > GAMMA_COND_MAX:
        raise GammaSingular(0, cond0)
    beta1 = np.linalg.solve(gamma0, np.linalg.solve(gamma0.T, Mho.T).T)
    alpha = [np.eye(n), gamma0]
    beta = [np.eye(n), _project(beta1, -1)]
    gamma = [gamma0]
    conds = [cond0]
    beta_defect = [0.0, _defect(beta1, -1)]
    gamma_defect = [_defect(gamma0, -1)]

    for j in range(1, top + 1):
        g = solve_lyapunov(A, alpha[j] @ gamma[j - 1], check=False)
        gamma_defect.append(_defect(g, sign_gamma(j)))
        g = _project(g, sign_gamma(j))
        gamma.append(g)
        c = float(np.linalg.cond(g))
        conds.append(c)
        if j == top:
            break
        if c > GAMMA_COND_MAX:
            raise GammaSingular(j, c)
        alpha.append(g @ beta[j])
        # beta_{j+1} = g^{-1} (alpha_j gamma_{j-1}) g^{-1}, via two solves
        inner = np.linalg.solve(g, alpha[j] @ gamma[j - 1])
        b = np.linalg.solve(g.T, inner.T).T
        beta_defect.append(_defect(b, sign_beta(j + 1)))
        beta.append(_project(b, sign_beta(j + 1)))

    coeffs = CascadeCoefficients(r=r, alpha=alpha, beta=beta, gamma=gamma,
                                 gamma_condition_numbers=conds,
                                 beta_defect=beta_defect,
                                 gamma_defect=gamma_defect,
                                 scales=[1.0] * len(alpha))
    return coeffs.balance() if balance else coeffs


def complex_sqrt(model: OqhoModel) -> np.ndarray:
    """Hermitian square root ``S`` of ``B Omega^T B^T = BB^T - i BJB^T``."""
    M = model.B @ model.Omega.T @ model.B.T
    M = check_hermitian(M, tol=1e-10)
    w = np.linalg.eigvalsh(M)
    if w[0] < -1e-10 * max(1.0, abs(w[-1])):
        raise NotPSD(f"B Omega^T B^T has eigenvalue {w[0]:.3e}")
    return psd_sqrt(M)


def realify(c) -> np.ndarray:
    """``[[Re c, -Im c], [Im c, Re c]]``."""
    c = np.asarray(c, dtype=complex)
    return np.block([[c.real, -c.imag], [c.imag, c.real]])


def realified_sqrt(model: OqhoModel) -> np.ndarray:
    """Real symmetric ``R(S)`` with ``R(S)^2 = [[BB^T, mho], [-mho, BB^T]]``."""
    RS = realify(complex_sqrt(model))
    return 0.5 * (RS + RS.T)


@dataclass(frozen=True)
class TruncatedFilter:
    r: int
    Acal: np.ndarray
    Bcal: np.ndarray
    RS: np.ndarray

    @property
    def nu(self) -> int:
        return self.Acal.shape[0]


def assemble_filter(model: OqhoModel, coeffs: CascadeCoefficients, r: int = None,
                    RS=None) -> TruncatedFilter:
    """Block lower bidiagonal ``Acal_r`` and input matrix ``Bcal_r`` of order
    ``nu = 4(r+1)n``: diagonal blocks ``I_2 kron A``, subdiagonal blocks
    ``I_2 kron alpha_j`` (j = 1..2r+1), ``Bcal_r = [R(S); 0; ...; 0]``."""
    r = coeffs.r if r is None else r
    if r > coeffs.r:
        raise ValueError(f"cascade computed to order {coeffs.r} < {r}")
    n = model.n
    if RS is None:
        RS = realified_sqrt(model)
    nblocks = 2 * r + 2
    b = 2 * n
    nu = b * nblocks
    I2 = np.eye(2)
    Acal = np.zeros((nu, nu))
    diag = np.kron(I2, model.A)
    for i in range(nblocks):
        Acal[i * b:(i + 1) * b, i * b:(i + 1) * b] = diag
        if i:
            Acal[i * b:(i + 1) * b, (i - 1) * b:i * b] = np.kron(I2, coeffs.alpha[i])
    Bcal = np.zeros((nu, b))
    Bcal[:b] = RS
    return TruncatedFilter(r=r, Acal=Acal, Bcal=Bcal, RS=RS)


@dataclass(frozen=True)
class WeightMatrix:
    theta: float
    r: int
    H: np.ndarray
    f_blocks: List[np.ndarray]
    g_blocks: List[np.ndarray]


def assemble_weight(coeffs: CascadeCoefficients, scheme: CoefficientScheme,
                    theta: float, r: int = None) -> WeightMatrix:
    """Block diagonal weight ``H_{theta,r} = diag(h_0, ..., h_r)`` with

        f_k = (-4 theta^2)^k w_{2k} beta_{2k}
        g_k = -2 theta (-4 theta^2)^k w_{2k+1} beta_{2k+1}
        h_k = diag(I_2 kron f_k, -bJ kron g_k)

    where ``w`` are the scheme weights.
    """
    r = coeffs.r if r is None else r
    if r > coeffs.r or r > scheme.r:
        raise ValueError("coefficients or scheme computed to a lower order")
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    n = coeffs.n
    w = scheme.weights
    I2 = np.eye(2)
    H = np.zeros((4 * n * (r + 1),) * 2)
    fs, gs = [], []
    for k in range(r + 1):
        q = (-4.0 * theta ** 2) ** k
        f = q * w[2 * k] * coeffs.beta[2 * k]
        g = -2.0 * theta * q * w[2 * k + 1] * coeffs.beta[2 * k + 1]
        o = 4 * n * k
        H[o:o + 2 * n, o:o + 2 * n] = np.kron(I2, f)
        H[o + 2 * n:o + 4 * n, o + 2 * n:o + 4 * n] = -np.kron(BJ, g)
        fs.append(f)
        gs.append(g)
    H = 0.5 * (H + H.T)
    return WeightMatrix(theta=theta, r=r, H=H, f_blocks=fs, g_blocks=gs)


def resolvent(A, lam: float) -> np.ndarray:
    """``E(i lam) = (i lam I - A)^{-1}``."""
    n = A.shape[0]
    return np.linalg.inv(1j * lam * np.eye(n) - A)


def _rel(lhs, rhs):
    return float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(lhs), 1e-300))


def verify_transposition(model: OqhoModel, U, lam: float) -> float:
    """Relative residual of ``E U E^* = V E^* V^{-1} U V^{-1} E V`` where
    ``V = L_A(U)`` and ``E = E(i lam)``."""
    U = np.asarray(U, dtype=float)
    V = solve_lyapunov(model.A, U)
    if np.linalg.cond(V) > GAMMA_COND_MAX:
        raise SingularV("Lyapunov solution V is singular")
    E = resolvent(model.A, lam)
    Es = E.conj().T
    Vi = np.linalg.inv(V)
    return _rel(E @ U @ Es, V @ Es @ Vi @ U @ Vi @ E @ V)


def verify_ordered_factorization(model: OqhoModel, coeffs: CascadeCoefficients,
                                 k: int, lam: float) -> float:
    """Relative residual of the ordered-product identity for ``(E mho E^*)^k``."""
    if not 1 <= k <= len(coeffs.alpha) - 1 or k >= len(coeffs.beta):
        raise ValueError(f"k={k} outside the computed range")
    E = resolvent(model.A, lam)
    Es = E.conj().T
    lhs = np.linalg.matrix_power(E @ mho(model) @ Es, k)
    left = np.eye(model.n, dtype=complex)
    right = np.eye(model.n, dtype=complex)
    for j in range(1, k + 1):
        left = left @ coeffs.alpha[j].T @ Es
        right = E @ coeffs.alpha[j] @ right
    rhs = (-1) ** k * left @ coeffs.beta[k] @ right
    return _rel(lhs, rhs)


def cascade_transfer(model: OqhoModel, coeffs: CascadeCoefficients, lam: float,
                     K: int) -> List[np.ndarray]:
    """Transfer matrices ``G_k(i lam) = E alpha_k E ... alpha_1 E`` for k = 0..K."""
    E = resolvent(model.A, lam)
    G = [E]
    for k in range(1, K + 1):
        G.append(E @ coeffs.alpha[k] @ G[-1])
    return G


def cascade_delta(model: OqhoModel, coeffs: CascadeCoefficients, theta: float,
                  lam: float, K: int, weights=None, S=None) -> np.ndarray:
    """Partial sum ``S (sum_{k<=K} (-2i theta)^k w_k G_k^* beta_k G_k) S``.

    With Taylor weights this converges to the spectral density
    ``Delta_theta(lam)`` as ``K`` grows.
    """
    if weights is None:
        weights = phi_taylor_coeffs(K)
    if S is None:
        S = complex_sqrt(model)
    G = cascade_transfer(model, coeffs, lam, K)
    total = np.zeros((model.n, model.n), dtype=complex)
    for k in range(K + 1):
        total += (-2j * theta) ** k * weights[k] * (G[k].conj().T @ coeffs.beta[k] @ G[k])
    return S @ total @ S
