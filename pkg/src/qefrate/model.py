"""Open quantum harmonic oscillator models.

An OQHO with ``n`` system variables and ``m`` field channels is described by
its CCR matrix ``Theta`` and state-space matrices ``A``, ``B`` (``C`` and the
energy/coupling matrices ``R``, ``M`` are optional).  The rate computations
only use ``(Theta, A, B)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import GenerationFailure, ParseError, SingularTransform
from .linalg import expm, require_hurwitz, solve_lyapunov, spectral_abscissa

BJ = np.array([[0.0, 1.0], [-1.0, 0.0]])


def field_J(m: int) -> np.ndarray:
    """CCR matrix ``bJ kron I_{m/2}`` of the quantum Wiener process."""
    return np.kron(BJ, np.eye(m // 2))


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class OqhoModel:
    Theta: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    M: Optional[np.ndarray] = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        for key in ("Theta", "A", "B", "C", "R", "M"):
            val = getattr(self, key)
            if val is not None:
                object.__setattr__(self, key, _frozen(val))
        n, m = self.B.shape
        if self.Theta.shape != (n, n) or self.A.shape != (n, n):
            raise ParseError(f"inconsistent shapes: Theta {self.Theta.shape}, "
                             f"A {self.A.shape}, B {self.B.shape}")
        if n % 2 or m % 2:
            raise ParseError(f"n={n} and m={m} must both be even")
        for key, shape in (("C", (m, n)), ("R", (n, n)), ("M", (m, n))):
            val = getattr(self, key)
            if val is not None and val.shape != shape:
                raise ParseError(f"{key} has shape {val.shape}, expected {shape}")

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def J(self) -> np.ndarray:
        return field_J(self.m)

    @property
    def Omega(self) -> np.ndarray:
        return np.eye(self.m) + 1j * self.J

    def to_dict(self) -> dict:
        out = {"n": self.n, "m": self.m}
        for key in ("Theta", "A", "B", "C", "R", "M"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val.tolist()
        return out


@dataclass(frozen=True)
class ModelDiagnostics:
    pr1_residual: float
    pr2_residual: Optional[float]
    spectral_abscissa: float
    mho_condition: float
    bbt_min_eigenvalue: float
    theta_condition: float

    def relative_pr_residual(self, model: OqhoModel) -> float:
        scale = 1.0 + np.linalg.norm(model.A, 2) * np.linalg.norm(model.Theta, 2)
        worst = max(self.pr1_residual, self.pr2_residual or 0.0)
        return worst / scale


def mho(model: OqhoModel) -> np.ndarray:
    """Antisymmetric matrix ``B J B^T``."""
    M = model.B @ model.J @ model.B.T
    return 0.5 * (M - M.T)


def build_from_energy(Theta, R, M, name: str = "") -> OqhoModel:
    """Model with ``A = 2 Theta (R + M^T J M)``, ``B = 2 Theta M^T``, ``C = 2 J M``.

    The physical realizability identities hold by construction.  If ``A``
    is not Hurwitz the model is still returned; rate computations will
    reject it.
    """
    Theta = np.asarray(Theta, dtype=float)
    R = np.asarray(R, dtype=float)
    M = np.asarray(M, dtype=float)
    J = field_J(M.shape[0])
    A = 2.0 * Theta @ (R + M.T @ J @ M)
    B = 2.0 * Theta @ M.T
    C = 2.0 * J @ M
    return OqhoModel(Theta=Theta, A=A, B=B, C=C, R=R, M=M, name=name)


def validate(model: OqhoModel) -> ModelDiagnostics:
    """Physical-realizability residuals and structural diagnostics.

    Never raises; callers decide which thresholds to enforce.
    """
    Th, A, B = model.Theta, model.A, model.B
    pr1 = float(np.linalg.norm(A @ Th + Th @ A.T + mho(model)))
    pr2 = None
    if model.C is not None:
        pr2 = float(np.linalg.norm(Th @ model.C.T + B @ model.J))
    return ModelDiagnostics(
        pr1_residual=pr1,
        pr2_residual=pr2,
        spectral_abscissa=spectral_abscissa(A),
        mho_condition=float(np.linalg.cond(mho(model))),
        bbt_min_eigenvalue=float(np.linalg.eigvalsh(B @ B.T)[0]),
        theta_condition=float(np.linalg.cond(Th)),
    )


def coordinate_transform(model: OqhoModel, sigma) -> OqhoModel:
    """Model for the transformed variables ``X -> sigma X``."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (model.n, model.n) or np.linalg.cond(sigma) > 1e14:
        raise SingularTransform("sigma must be a nonsingular n x n matrix")
    inv = np.linalg.inv(sigma)
    return replace(
        model,
        Theta=sigma @ model.Theta @ sigma.T,
        A=sigma @ model.A @ inv,
        B=sigma @ model.B,
        C=None if model.C is None else model.C @ inv,
        R=None if model.R is None else inv.T @ model.R @ inv,
        M=None if model.M is None else model.M @ inv,
    )


def gramian(model: OqhoModel) -> np.ndarray:
    """Controllability Gramian ``Gamma = L_A(B B^T)``."""
    return solve_lyapunov(model.A, model.B @ model.B.T)


def two_point_kernels(model: OqhoModel, tau: float, Gamma=None):
    """Real covariance and commutator kernels ``(P(tau), Lambda(tau))``."""
    require_hurwitz(model.A)
    if Gamma is None:
        Gamma = gramian(model)
    if tau >= 0:
        e = expm(tau * model.A)
        return e @ Gamma, e @ model.Theta
    e = expm(-tau * model.A.T)
    return Gamma @ e, model.Theta @ e


def random_pr_model(n: int, m: int, seed=None, stability_margin: float = 0.1,
                    *, conjugate: bool = False, max_tries: int = 5000) -> OqhoModel:
    """Sample a stable physically realizable model.

    Draws a symmetric energy matrix and a coupling matrix with standard
    normal entries until ``A`` has spectral abscissa at most
    ``-stability_margin`` and ``B J B^T`` is nonsingular.  With
    ``conjugate=True`` the canonical CCR matrix is replaced by
    ``sigma Theta sigma^T`` for a random well-conditioned ``sigma``.
    """
    if n % 2 or m % 2 or n > m or n <= 0:
        raise ValueError("need even 0 < n <= m")
    rng = np.random.default_rng(seed)
    Theta = 0.5 * np.kron(BJ, np.eye(n // 2))
    if conjugate:
        sigma = np.eye(n) + 0.3 * rng.standard_normal((n, n))
        Theta = sigma @ Theta @ sigma.T
    for _ in range(max_tries):
        R = rng.standard_normal((n, n))
        R = 0.5 * (R + R.T)
        M = rng.standard_normal((m, n))
        model = build_from_energy(Theta, R, M, name=f"random-{n}x{m}-{seed}")
        if spectral_abscissa(model.A) > -stability_margin:
            continue
        if np.linalg.cond(mho(model)) > 1e8:
            continue
        return model
    raise GenerationFailure(
        f"no model with stability margin {stability_margin} after {max_tries} draws")


def model_from_dict(data: dict, name: str = "") -> OqhoModel:
    try:
        n, m = int(data["n"]), int(data["m"])
        arrays = {k: np.array(data[k], dtype=float) for k in ("Theta", "A", "B")}
        for k in ("C", "R", "M"):
            if data.get(k) is not None:
                arrays[k] = np.array(data[k], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed model: {exc}") from exc
    for k, v in arrays.items():
        if v.ndim != 2:
            raise ParseError(f"{k} must be a nested (2-d) array")
    if arrays["B"].shape != (n, m):
        raise ParseError(f"B has shape {arrays['B'].shape}, expected {(n, m)}")
    return OqhoModel(name=name, **arrays)


def load_model(path) -> OqhoModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read model file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError("model file must contain a JSON object")
    return model_from_dict(data, name=path.stem)


def dump_model(model: OqhoModel) -> str:
    # json writes floats with repr(), which round-trips exactly
    return json.dumps(model.to_dict(), indent=1)


def bundled_model_path() -> Path:
    return Path(__file__).parent / "data" / "two-mode-oqho.json"


def example_model() -> OqhoModel:
    """The two-mode example (n=4, m=6) with 4-decimal entries."""
    return load_model(bundled_model_path())
