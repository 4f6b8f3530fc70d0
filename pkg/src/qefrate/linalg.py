"""Dense kernels: Lyapunov and Riccati solvers, functions of Hermitian matrices."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import (NoConvergence, NotHermitian, NotHurwitz, SolveFailure,
                     StabilizingSolutionLost)

HURWITZ_TOL = 1e-9
HERMITIAN_TOL = 1e-12
# Kronecker systems above this order are replaced by Bartels-Stewart.
KRON_MAX_ORDER = 16


def spectral_abscissa(A) -> float:
    return float(np.max(np.linalg.eigvals(A).real))


def is_hurwitz(A, tol: float = HURWITZ_TOL) -> bool:
    return spectral_abscissa(A) < -tol


def require_hurwitz(A, what: str = "A") -> None:
    abscissa = spectral_abscissa(A)
    if not abscissa < -HURWITZ_TOL:
        raise NotHurwitz(f"{what} is not Hurwitz (spectral abscissa {abscissa:.6g})")


def _lyapunov_kron(A, U):
    n = A.shape[0]
    eye = np.eye(n)
    # column-major vec: vec(AV + VA^T) = (I kron A + A kron I) vec(V)
    K = np.kron(eye, A) + np.kron(A, eye)
    try:
        v = sla.solve(K, -U.reshape(-1, order="F"), check_finite=True)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise SolveFailure(str(exc)) from exc
    return v.reshape((n, n), order="F")


def solve_lyapunov(A, U, *, check: bool = True):
    """Solve ``A V + V A^T + U = 0`` for a Hurwitz ``A``.

    The solution is the integral ``L_A(U) = int_0^inf e^{tA} U e^{tA^T} dt``.
    Small orders use a dense Kronecker-vectorised solve, larger ones the
    Bartels-Stewart algorithm.  Symmetry or antisymmetry of ``U`` is carried
    over to ``V`` exactly.
    """
    A = np.asarray(A, dtype=float)
    U = np.asarray(U)
    if check:
        require_hurwitz(A)
    if A.shape[0] <= KRON_MAX_ORDER:
        if np.iscomplexobj(U):
            V = _lyapunov_kron(A, U.real) + 1j * _lyapunov_kron(A, U.imag)
        else:
            V = _lyapunov_kron(A, U.astype(float))
    else:
        try:
            V = sla.solve_continuous_lyapunov(A, -U)
        except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
            raise SolveFailure(str(exc)) from exc
    if not np.all(np.isfinite(V)):
        raise SolveFailure("non-finite Lyapunov solution")
    Ut = U.T
    if np.array_equal(U, Ut):
        V = 0.5 * (V + V.T)
    elif np.array_equal(U, -Ut):
        V = 0.5 * (V - V.T)
    return V


class AreInfo(NamedTuple):
    iterations: int
    residual: float
    closed_loop_abscissa: float


def are_residual(Acal, Sigma, Q, a) -> float:
    R = Acal.T @ a + a @ Acal + Q + a @ Sigma @ a
    return float(np.linalg.norm(R))


def solve_are_stabilizing(Acal, Sigma, Q, *, a0=None, tol: float = 1e-10,
                          max_iter: int = 100, full_output: bool = False):
    """Stabilizing solution of ``Acal^T a + a Acal + Q + a Sigma a = 0``.

    Newton-Kleinman iteration.  Each iterate ``a_k`` must keep the closed
    loop ``Acal + Sigma a_k`` Hurwitz; the default start ``a0 = 0`` is
    admissible because ``Acal`` itself is Hurwitz.  ``Q`` may be indefinite.

    Raises StabilizingSolutionLost if an iterate loses the Hurwitz property
    and NoConvergence if the residual does not drop below
    ``tol * (1 + ||Q||)`` within ``max_iter`` steps.
    """
    Acal = np.asarray(Acal, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    Q = np.asarray(Q, dtype=float)
    Q = 0.5 * (Q + Q.T)
    nu = Acal.shape[0]
    a = np.zeros((nu, nu)) if a0 is None else 0.5 * (a0 + a0.T)
    target = tol * (1.0 + np.linalg.norm(Q))

    residual = are_residual(Acal, Sigma, Q, a)
    it = 0
    while True:
        closed = Acal + Sigma @ a
        abscissa = spectral_abscissa(closed)
        if not abscissa < -HURWITZ_TOL:
            raise StabilizingSolutionLost(
                f"Newton iterate {it} is not stabilizing (abscissa {abscissa:.3e})")
        if residual <= target:
            break
        if it >= max_iter:
            raise NoConvergence(
                f"Newton-Kleinman did not converge in {max_iter} iterations "
                f"(residual {residual:.3e})")
        a_new = solve_lyapunov(closed.T, Q - a @ Sigma @ a, check=False)
        a_new = 0.5 * (a_new + a_new.T)
        new_residual = are_residual(Acal, Sigma, Q, a_new)
        it += 1
        if (new_residual >= residual and residual <= 1e3 * target
                and np.linalg.norm(a_new - a) <= 1e-13 * (1 + np.linalg.norm(a))):
            # rounding floor reached just above the target
            break
        a, residual = a_new, new_residual

    if full_output:
        return a, AreInfo(it, residual, abscissa)
    return a


def check_hermitian(M, tol: float = HERMITIAN_TOL):
    M = np.asarray(M)
    MH = np.conj(np.swapaxes(M, -1, -2))
    scale = max(1.0, float(np.max(np.abs(M))) if M.size else 1.0)
    if np.max(np.abs(M - MH), initial=0.0) > tol * scale:
        raise NotHermitian("matrix is not Hermitian within tolerance")
    return 0.5 * (M + MH)


def hermitian_eigh(M, tol: float = HERMITIAN_TOL):
    """Eigendecomposition of a Hermitian matrix (or a stack of them)."""
    return np.linalg.eigh(check_hermitian(M, tol))


def hermitian_matfun(M, f, tol: float = HERMITIAN_TOL):
    """Evaluate ``f(M) = V f(diag w) V^*`` for Hermitian ``M``.

    ``f`` acts elementwise on the real eigenvalue array and may return real
    or complex values.  Stacks of matrices with shape ``(..., n, n)`` are
    handled in one call.
    """
    w, V = hermitian_eigh(M, tol)
    fw = np.asarray(f(w))
    return (V * fw[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


def psd_sqrt(M, tol: float = HERMITIAN_TOL):
    return hermitian_matfun(M, lambda w: np.sqrt(np.clip(w, 0.0, None)), tol)


def expm(A):
    return sla.expm(A)
