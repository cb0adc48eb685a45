"""Uniform Dirichlet grid on (0, pi) with its discrete sine basis.

Grid functions are plain 1-D numpy arrays holding the values at the interior
nodes ``xi_i = i*h``, ``i = 1..n``; boundary values are zero and never stored.
The discrete sine vectors ``sqrt(2/pi) * sin(k*xi_i)`` are exactly orthonormal
for the inner product ``h * sum(u*v)``, so no extra normalisation is needed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft
from scipy.linalg import solve_banded

__all__ = [
    "Grid",
    "make_grid",
    "sine_mode",
    "gamma_constant",
    "estimate_gamma",
]

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class Grid:
    """Interior nodes of a uniform mesh on (0, pi) with ``n`` unknowns."""

    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or isinstance(self.n, bool):
            raise TypeError(f"n must be an integer, got {type(self.n).__name__}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")

    @cached_property
    def h(self) -> float:
        return math.pi / (self.n + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.n + 1)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues ``(2 - 2cos(kh))/h**2`` of the stencil ``-Laplacian``."""
        k = np.arange(1, self.n + 1)
        return (2.0 - 2.0 * np.cos(k * self.h)) / self.h**2

    @cached_property
    def _stencil_bands(self) -> np.ndarray:
        # banded storage of -Laplacian for solve_banded((1, 1), ...)
        ab = np.empty((3, self.n))
        ab[0, :] = -1.0 / self.h**2
        ab[1, :] = 2.0 / self.h**2
        ab[2, :] = -1.0 / self.h**2
        return ab

    def check(self, u) -> np.ndarray:
        """Return ``u`` as a float array after validating shape and finiteness."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n,):
            raise ValueError(f"grid function must have shape ({self.n},), got {u.shape}")
        if not np.all(np.isfinite(u)):
            raise ValueError("grid function contains non-finite values")
        return u

    # -- transforms -------------------------------------------------------

    def sine_transform(self, u) -> np.ndarray:
        """Coefficients ``h * sum_i u_i e_k(xi_i)`` for ``k = 1..n``."""
        u = self.check(u)
        # DST-I: y_k = 2 sum_i x_i sin(pi k i/(n+1))
        return (0.5 * self.h * _SQRT_2_OVER_PI) * fft.dst(u, type=1)

    def inverse_sine_transform(self, coeffs) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.n,):
            raise ValueError(f"coefficients must have shape ({self.n},), got {coeffs.shape}")
        # inverse of the DST-I pair above: u_i = sum_k c_k e_k(xi_i)
        return (0.5 * _SQRT_2_OVER_PI) * fft.dst(coeffs, type=1)

    # -- norms ------------------------------------------------------------

    def h_minus1_norm(self, u) -> float:
        """Discrete ``H^{-1}`` norm ``sqrt(sum_k c_k**2 / lambda_k)``."""
        c = self.sine_transform(u)
        return float(math.sqrt(np.sum(c * c / self.eigenvalues)))

    def h_minus1_inner(self, u, v) -> float:
        cu = self.sine_transform(u)
        cv = self.sine_transform(v)
        return float(np.sum(cu * cv / self.eigenvalues))

    def l1_norm(self, u) -> float:
        return float(self.h * np.sum(np.abs(self.check(u))))

    def l2_norm(self, u) -> float:
        u = self.check(u)
        return float(math.sqrt(self.h * np.dot(u, u)))

    def min_value(self, u) -> float:
        return float(np.min(self.check(u)))

    def max_value(self, u) -> float:
        return float(np.max(self.check(u)))

    # -- operators --------------------------------------------------------

    def apply_laplacian(self, u) -> np.ndarray:
        """Three-point Laplacian with zero ghost values outside (0, pi)."""
        u = self.check(u)
        padded = np.concatenate(([0.0], u, [0.0]))
        return (padded[:-2] - 2.0 * padded[1:-1] + padded[2:]) / self.h**2

    def apply_inverse_laplacian(self, f) -> np.ndarray:
        """Solve ``Laplacian(u) = f`` with the tridiagonal stencil."""
        f = self.check(f)
        return -solve_banded((1, 1), self._stencil_bands, f, check_finite=False)

    def sine_mode(self, k: int) -> np.ndarray:
        return sine_mode(self, k)


def make_grid(n: int) -> Grid:
    return Grid(int(n) if isinstance(n, (np.integer,)) else n)


def sine_mode(grid: Grid, k: int) -> np.ndarray:
    """Continuum eigenfunction ``sqrt(2/pi) sin(k xi)`` sampled at the nodes."""
    if k < 1:
        raise ValueError(f"mode index must be >= 1, got {k}")
    return _SQRT_2_OVER_PI * np.sin(k * grid.nodes)


def gamma_constant() -> float:
    """Continuum value of ``inf |x|_{L1} / |x|_{-1}`` on (0, pi), i.e. 2/sqrt(pi).

    The Green's function of ``-d^2/dxi^2`` with Dirichlet data has diagonal
    ``xi(pi - xi)/pi``, largest at pi/2 where it equals pi/4; point masses there
    give the extremal ratio ``1/sqrt(pi/4)``.
    """
    return 2.0 / math.sqrt(math.pi)


def impulse_ratios(n: int) -> np.ndarray:
    """``|x|_{L1}/|x|_{-1}`` for the unit-mass impulse at every node of ``Grid(n)``."""
    grid = make_grid(n)
    ratios = np.empty(n)
    for i in range(n):
        u = np.zeros(n)
        u[i] = 1.0 / grid.h
        ratios[i] = grid.l1_norm(u) / grid.h_minus1_norm(u)
    return ratios


def estimate_gamma(n: int) -> float:
    """Discrete infimum of ``|x|_{L1}/|x|_{-1}`` over single-node impulses.

    By the triangle inequality in ``H^{-1}`` no grid function does better than
    the best impulse, so this is the exact discrete constant.
    """
    return float(np.min(impulse_ratios(n)))
