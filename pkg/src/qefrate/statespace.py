"""State-space QEF rate via the truncated cascade filter and a Riccati equation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .cascade import (CascadeCoefficients, TruncatedFilter, WeightMatrix,
                      assemble_filter, assemble_weight, compute_cascade,
                      realified_sqrt, realify, scheme_weights)
from .errors import QefError, StabilizingSolutionLost
from .linalg import (require_hurwitz, solve_are_stabilizing, solve_lyapunov)
from .model import BJ, OqhoModel, mho

log = logging.getLogger(__name__)


@dataclass
class RateResult:
    theta: float
    r: int
    scheme: str
    rate: float
    newton_iterations: int = 0
    are_residual: float = 0.0
    closed_loop_abscissa: float = float("nan")
    valid: bool = True
    error: str = ""
    solution: Optional[np.ndarray] = field(default=None, repr=False)

    def row(self) -> dict:
        return {
            "theta": self.theta, "r": self.r, "scheme": self.scheme,
            "rate": self.rate, "valid": self.valid,
            "are_residual": self.are_residual,
            "closed_loop_abscissa": self.closed_loop_abscissa,
            "newton_iterations": self.newton_iterations,
        }


def weighted_input(model: OqhoModel) -> np.ndarray:
    """``R(B Omega^T B^T) = [[BB^T, mho], [-mho, BB^T]]``."""
    return realify(model.B @ model.Omega.T @ model.B.T)


def _solve(model, filt: TruncatedFilter, weight: WeightMatrix, scheme: str,
           a0=None) -> RateResult:
    theta = weight.theta
    Sigma = filt.Bcal @ filt.Bcal.T
    Q = theta * weight.H
    a, info = solve_are_stabilizing(filt.Acal, Sigma, Q, a0=a0, full_output=True)
    b = 2 * model.n
    rate = 0.25 * float(np.trace(weighted_input(model) @ a[:b, :b]))
    valid = bool(info.closed_loop_abscissa < 0
                 and info.residual <= 1e-10 * (1.0 + np.linalg.norm(Q)))
    return RateResult(theta=theta, r=filt.r, scheme=scheme, rate=rate,
                      newton_iterations=info.iterations, are_residual=info.residual,
                      closed_loop_abscissa=info.closed_loop_abscissa,
                      valid=valid, solution=a)


def qef_rate_ss(model: OqhoModel, theta: float, r: int = 3, scheme: str = "taylor",
                *, balance: bool = False, coeffs: CascadeCoefficients = None,
                a0=None) -> RateResult:
    """Truncated QEF rate ``Upsilon_r(theta) = Tr(Bcal Bcal^T a) / 4``.

    ``a`` is the stabilizing solution of
    ``Acal^T a + a Acal + theta H + a Bcal Bcal^T a = 0`` for the order-``r``
    filter.  Only the leading ``2n x 2n`` block of ``a`` enters the trace.

    Raises GammaSingular when the cascade breaks down and
    StabilizingSolutionLost when ``theta`` lies beyond the range where this
    truncation has a stabilizing solution.
    """
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    if coeffs is None:
        coeffs = compute_cascade(model, r, balance=balance)
    filt = assemble_filter(model, coeffs, r)
    weight = assemble_weight(coeffs, scheme_weights(scheme, r), theta, r)
    return _solve(model, filt, weight, scheme, a0)


def zeroth_order_filter(model: OqhoModel, theta: float):
    """``(Acal_0, Bcal_0, h_0(theta))`` assembled without the cascade recursion."""
    n = model.n
    I2 = np.eye(2)
    Mho = mho(model)
    gamma0 = solve_lyapunov(model.A, Mho)
    Acal = np.block([[np.kron(I2, model.A), np.zeros((2 * n, 2 * n))],
                     [np.kron(I2, gamma0), np.kron(I2, model.A)]])
    Bcal = np.vstack([realified_sqrt(model), np.zeros((2 * n, 2 * n))])
    g0inv = np.linalg.inv(gamma0)
    beta1 = g0inv @ Mho @ g0inv
    h0 = np.block([[np.eye(2 * n), np.zeros((2 * n, 2 * n))],
                   [np.zeros((2 * n, 2 * n)), theta * np.kron(BJ, 0.5 * (beta1 - beta1.T))]])
    return Acal, Bcal, h0


def qef_rate_zeroth(model: OqhoModel, theta: float) -> RateResult:
    """``Upsilon_0(theta)`` from the order-``4n`` Riccati equation directly."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    Acal, Bcal, h0 = zeroth_order_filter(model, theta)
    filt = TruncatedFilter(r=0, Acal=Acal, Bcal=Bcal, RS=Bcal[:2 * model.n])
    weight = WeightMatrix(theta=theta, r=0, H=h0, f_blocks=[], g_blocks=[])
    return _solve(model, filt, weight, "taylor")


def filter_transfer(filt: TruncatedFilter, lams) -> np.ndarray:
    """Stack of ``f_r(i lam) = (i lam I - Acal)^{-1} Bcal``, shape ``(N, nu, 2n)``."""
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    eye = np.eye(filt.nu)
    M = 1j * lams[:, None, None] * eye - filt.Acal
    rhs = np.broadcast_to(filt.Bcal.astype(complex), (len(lams),) + filt.Bcal.shape)
    return np.linalg.solve(M, rhs)


def pi_truncated(filt: TruncatedFilter, weight: WeightMatrix, lams) -> np.ndarray:
    """``f_r^* H f_r`` on a set of frequencies, shape ``(N, 2n, 2n)``."""
    f = filter_transfer(filt, lams)
    P = np.conj(np.swapaxes(f, -1, -2)) @ weight.H @ f
    return 0.5 * (P + np.conj(np.swapaxes(P, -1, -2)))


def weighted_density_margin(model: OqhoModel, theta: float, r: int, grid, scheme: str = "taylor",
                coeffs: CascadeCoefficients = None):
    """Grid estimate of ``theta sup_lam lambda_max(f_r^* H f_r)``.

    Returns ``(margin, passed)`` where ``passed`` means ``margin < 1``.
    Advisory only: the supremum is taken over the grid nodes.
    """
    if theta == 0:
        return 0.0, True
    if coeffs is None:
        coeffs = compute_cascade(model, r)
    filt = assemble_filter(model, coeffs, r)
    weight = assemble_weight(coeffs, scheme_weights(scheme, r), theta, r)
    lams = grid.nodes[grid.nodes >= 0]
    vals = np.linalg.eigvalsh(pi_truncated(filt, weight, lams))[:, -1]
    margin = theta * float(np.max(vals))
    return margin, margin < 1.0


def invariant_covariance(filt: TruncatedFilter) -> np.ndarray:
    """Stationary covariance ``P_r = L_{Acal}(Bcal Bcal^T)`` of the filter state."""
    require_hurwitz(filt.Acal, "Acal")
    return solve_lyapunov(filt.Acal, filt.Bcal @ filt.Bcal.T, check=False)


def rate_ladder(model: OqhoModel, theta: float, r: int, scheme: str = "taylor",
                *, balance: bool = False) -> List[RateResult]:
    """``Upsilon_0 .. Upsilon_r`` at one ``theta``; errors propagate."""
    return [qef_rate_ss(model, theta, k, scheme, balance=balance) for k in range(r + 1)]


def rate_sweep(model: OqhoModel, thetas: Sequence[float], r: int, scheme: str = "taylor",
               *, balance: bool = False, warm_start: bool = True) -> List[RateResult]:
    """One result per ``theta``.  Failures are recorded as invalid entries.

    With ``warm_start`` each Newton solve starts from the previous solution
    (falling back to zero if that start is not stabilizing).
    """
    thetas = [float(t) for t in thetas]
    if any(t < 0 for t in thetas):
        raise ValueError("thetas must be nonnegative")
    if any(b < a for a, b in zip(thetas, thetas[1:])):
        raise ValueError("thetas must be ascending")
    try:
        coeffs = compute_cascade(model, r, balance=balance)
    except QefError as exc:
        return [RateResult(t, r, scheme, float("nan"), valid=False,
                           error=f"{type(exc).__name__}: {exc}") for t in thetas]
    filt = assemble_filter(model, coeffs, r)
    sch = scheme_weights(scheme, r)
    out: List[RateResult] = []
    prev = None
    for t in thetas:
        weight = assemble_weight(coeffs, sch, t, r)
        res = None
        starts = [prev, None] if (warm_start and prev is not None) else [None]
        for a0 in starts:
            try:
                res = _solve(model, filt, weight, scheme, a0)
                break
            except StabilizingSolutionLost as exc:
                res = RateResult(t, r, scheme, float("nan"), valid=False,
                                 error=f"{type(exc).__name__}: {exc}")
            except QefError as exc:
                res = RateResult(t, r, scheme, float("nan"), valid=False,
                                 error=f"{type(exc).__name__}: {exc}")
                break
        if res.valid and res.solution is not None:
            prev = res.solution
        else:
            log.debug("theta=%g r=%d: %s", t, r, res.error or "invalid")
        out.append(res)
    return out
