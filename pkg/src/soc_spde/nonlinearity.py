"""Maximal monotone graphs ``rho*sign(r) + psi_tilde(r)`` and their regularisation.

Only two families of ``psi_tilde`` are supported: a linear map and the
two-slope map with an offset (the sandpile-type example).  Both are
Lipschitz with derivative bounded below by a positive constant away from 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "Linear",
    "PiecewiseLinear",
    "NonlinearitySpec",
    "HypothesisReport",
    "HypothesisError",
    "sign_lambda",
    "psi_lambda",
    "psi_lambda_prime",
    "psi_lambda_potential",
    "validate_hypothesis",
    "lipschitz_constant",
]


class HypothesisError(ValueError):
    """Raised when a nonlinearity violates the structural assumptions."""


@dataclass(frozen=True)
class Linear:
    """``psi_tilde(r) = slope * r``."""

    slope: float = 1.0

    @property
    def delta_min(self) -> float:
        return float(self.slope)

    @property
    def lip(self) -> float:
        return float(abs(self.slope))

    @property
    def offset(self) -> float:
        return 0.0

    def value(self, r):
        return self.slope * np.asarray(r, dtype=float)

    def derivative(self, r):
        return np.full_like(np.asarray(r, dtype=float), float(self.slope))

    def potential(self, r):
        r = np.asarray(r, dtype=float)
        return 0.5 * self.slope * r * r


@dataclass(frozen=True)
class PiecewiseLinear:
    """``alpha1*r + c`` for ``r > 0``, ``alpha2*r + c`` for ``r < 0`` and ``c`` at 0."""

    alpha1: float
    alpha2: float
    c: float = 0.0

    @property
    def delta_min(self) -> float:
        return float(min(self.alpha1, self.alpha2))

    @property
    def lip(self) -> float:
        return float(max(abs(self.alpha1), abs(self.alpha2)))

    @property
    def offset(self) -> float:
        return float(self.c)

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r > 0, self.alpha1 * r, self.alpha2 * r) + self.c

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        # kink at 0 takes the smaller slope
        return np.where(r > 0, self.alpha1, np.where(r < 0, self.alpha2, self.delta_min)).astype(float)

    def potential(self, r):
        r = np.asarray(r, dtype=float)
        return 0.5 * np.where(r > 0, self.alpha1, self.alpha2) * r * r + self.c * r


PsiTilde = Union[Linear, PiecewiseLinear]


@dataclass(frozen=True)
class NonlinearitySpec:
    rho: float = 1.0
    psi_tilde: PsiTilde = field(default_factory=Linear)

    @property
    def delta_min(self) -> float:
        return self.psi_tilde.delta_min

    @property
    def lip(self) -> float:
        return self.psi_tilde.lip


@dataclass(frozen=True)
class HypothesisReport:
    valid: bool
    rho: float
    delta_min: float
    lip: float
    psi_tilde_at_zero: float
    violations: tuple[str, ...] = ()


def _check_lambda(lam: float) -> None:
    if not lam > 0:
        raise ValueError(f"regularisation width must be positive, got {lam}")


def sign_lambda(r, lam: float):
    """Piecewise-linear sign: ``r/lam`` on ``[-lam, lam]``, ``+-1`` outside."""
    _check_lambda(lam)
    out = np.clip(np.asarray(r, dtype=float) / lam, -1.0, 1.0)
    return out if out.ndim else float(out)


def psi_lambda(r, spec: NonlinearitySpec, lam: float):
    """Regularised graph ``rho * sign_lambda(r) + psi_tilde(r)``."""
    out = spec.rho * np.asarray(sign_lambda(r, lam)) + spec.psi_tilde.value(r)
    return out if np.ndim(out) else float(out)


def psi_lambda_prime(r, spec: NonlinearitySpec, lam: float):
    _check_lambda(lam)
    r = np.asarray(r, dtype=float)
    out = np.where(np.abs(r) <= lam, spec.rho / lam, 0.0) + spec.psi_tilde.derivative(r)
    return out if out.ndim else float(out)


def psi_lambda_potential(r, spec: NonlinearitySpec, lam: float):
    """Convex antiderivative of ``psi_lambda`` vanishing at 0."""
    _check_lambda(lam)
    a = np.abs(np.asarray(r, dtype=float))
    sign_part = np.where(a <= lam, 0.5 * a * a / lam, a - 0.5 * lam)
    out = spec.rho * sign_part + spec.psi_tilde.potential(r)
    return out if out.ndim else float(out)


def validate_hypothesis(spec: NonlinearitySpec, raise_on_error: bool = False) -> HypothesisReport:
    """Check ``rho > 0``, ``delta > 0``, finite Lipschitz constant and ``0 in Psi(0)``."""
    violations = []
    rho = float(spec.rho)
    delta = spec.delta_min
    lip = spec.lip
    at_zero = spec.psi_tilde.offset
    if not rho > 0:
        violations.append(f"rho must be > 0 (rho={rho})")
    if not delta > 0:
        violations.append(f"psi_tilde derivative lower bound must be > 0 (delta={delta})")
    if not np.isfinite(lip):
        violations.append(f"psi_tilde must be Lipschitz (lip={lip})")
    if not abs(at_zero) <= rho:
        violations.append(f"0 not in Psi(0): |psi_tilde(0)|={abs(at_zero)} exceeds rho={rho}")
    report = HypothesisReport(
        valid=not violations,
        rho=rho,
        delta_min=delta,
        lip=lip,
        psi_tilde_at_zero=at_zero,
        violations=tuple(violations),
    )
    if raise_on_error and violations:
        raise HypothesisError("; ".join(violations))
    return report


def lipschitz_constant(spec: NonlinearitySpec, lam: float) -> float:
    _check_lambda(lam)
    return spec.rho / lam + spec.lip
