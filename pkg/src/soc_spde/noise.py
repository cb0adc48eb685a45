"""Multiplicative spectral noise ``sum_k mu_k X e_k dbeta_k`` with finitely many modes.

Every Monte Carlo path owns a Philox generator keyed by ``(master_seed,
path_index)``.  Normals are drawn at the finest time resolution in fixed
order, so a path is reproduced bit-for-bit regardless of how many other
paths run or in which order.  Runs at a coarser step sum blocks of fine
increments, which keeps the Brownian path identical under time refinement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral_grid import Grid, sine_mode

__all__ = [
    "NoiseSpec",
    "BrownianStream",
    "mode_matrix",
    "noise_increment",
    "c_n_constant",
    "hypothesis_ii_report",
]


@dataclass(frozen=True)
class NoiseSpec:
    n_modes: int = 0
    mu: tuple[float, ...] = ()
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mu", tuple(float(m) for m in self.mu))
        if self.n_modes < 0:
            raise ValueError(f"number of noise modes must be >= 0, got {self.n_modes}")
        if len(self.mu) != self.n_modes:
            raise ValueError(f"mu has {len(self.mu)} entries but n_modes={self.n_modes}")
        # mu_k = 0 is accepted: it switches a mode off without changing the stream
        if any(not (m >= 0 and math.isfinite(m)) for m in self.mu):
            raise ValueError(f"mu entries must be finite and nonnegative, got {self.mu}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError(f"master_seed must fit in 64 bits, got {self.master_seed}")

    @property
    def is_deterministic(self) -> bool:
        return self.n_modes == 0 or not any(self.mu)


class BrownianStream:
    """Increments ``(dbeta_1, ..., dbeta_N)`` of one path, addressable by step index.

    ``substeps`` fine steps of length ``dt/substeps`` make up one step.  Two
    streams with equal ``dt/substeps`` and the same key share the underlying
    path exactly.
    """

    _CHUNK = 1024

    def __init__(self, spec: NoiseSpec, path_index: int, dt: float, substeps: int = 1):
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        if substeps < 1:
            raise ValueError(f"substeps must be >= 1, got {substeps}")
        self.spec = spec
        self.path_index = int(path_index)
        self.dt = float(dt)
        self.substeps = int(substeps)
        self._scale = math.sqrt(self.dt / self.substeps)
        seq = np.random.SeedSequence(int(spec.master_seed), spawn_key=(self.path_index,))
        self._gen = np.random.Generator(np.random.Philox(seq))
        self._normals = np.empty((0, spec.n_modes))

    def _ensure(self, fine_rows: int) -> None:
        have = self._normals.shape[0]
        if fine_rows <= have:
            return
        need = fine_rows - have
        draw = self._CHUNK * (need // self._CHUNK + 1)
        more = self._gen.standard_normal((draw, self.spec.n_modes))
        self._normals = np.concatenate((self._normals, more))

    def increment(self, step: int) -> np.ndarray:
        if step < 0:
            raise IndexError(f"step index must be >= 0, got {step}")
        if self.spec.n_modes == 0:
            return np.zeros(0)
        lo = step * self.substeps
        self._ensure(lo + self.substeps)
        return self._scale * self._normals[lo : lo + self.substeps].sum(axis=0)


def mode_matrix(grid: Grid, spec: NoiseSpec) -> np.ndarray:
    """Rows ``mu_k * e_k`` sampled at the grid nodes, shape ``(N, n)``."""
    if spec.n_modes == 0:
        return np.zeros((0, grid.n))
    return np.array([mu * sine_mode(grid, k) for k, mu in enumerate(spec.mu, start=1)])


def noise_increment(grid: Grid, x, spec: NoiseSpec, dbeta, modes: np.ndarray | None = None) -> np.ndarray:
    """``xi -> sum_k mu_k x(xi) e_k(xi) dbeta_k``.

    ``modes`` may carry a precomputed :func:`mode_matrix` to skip resampling
    the basis every step.
    """
    x = grid.check(x)
    dbeta = np.asarray(dbeta, dtype=float)
    if dbeta.shape != (spec.n_modes,):
        raise ValueError(f"expected {spec.n_modes} Brownian increments, got shape {dbeta.shape}")
    if spec.n_modes == 0:
        return np.zeros_like(x)
    if modes is None:
        modes = mode_matrix(grid, spec)
    return x * (dbeta @ modes)


def c_n_constant(spec: NoiseSpec) -> float:
    """``(pi/4) * sum_k (1 + k)**2 mu_k**2``."""
    k = np.arange(1, spec.n_modes + 1)
    mu = np.asarray(spec.mu, dtype=float)
    return float(math.pi / 4 * np.sum((1 + k) ** 2 * mu**2))


def hypothesis_ii_report(spec: NoiseSpec) -> float:
    """``sum_k mu_k**2 k**4``; finite whenever N is."""
    k = np.arange(1, spec.n_modes + 1, dtype=float)
    mu = np.asarray(spec.mu, dtype=float)
    return float(np.sum(mu**2 * k**4))
