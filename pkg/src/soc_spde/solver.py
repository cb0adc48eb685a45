"""Semi-implicit Euler-Maruyama integration of the regularised equation.

The unknown is the shifted field ``z = X - x_c``.  One step solves

    z_new - dt * Lap_h(Psi_lam(z_new)) = z + z * sum_k mu_k e_k dbeta_k

for ``z_new`` by damped Newton iteration: the drift is implicit, the Ito noise
is evaluated at the old state.  Because ``Psi_lam' >= delta > 0`` the map is
strictly monotone in the discrete ``H^{-1}`` pairing, so the solution exists,
is unique, and the Newton direction always decreases the residual norm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .noise import BrownianStream, NoiseSpec, mode_matrix
from .nonlinearity import (
    NonlinearitySpec,
    psi_lambda,
    psi_lambda_prime,
    validate_hypothesis,
)
from .spectral_grid import Grid, sine_mode

__all__ = [
    "InitialCondition",
    "SimulationConfig",
    "SolverState",
    "PathResult",
    "PathHistory",
    "SolverError",
    "NewtonConvergenceError",
    "NonFiniteStateError",
    "initial_state",
    "solve_implicit",
    "step",
    "simulate_path",
    "weak_form_residual",
]

DEFAULT_EXTINCTION_REL = 1e-4


class SolverError(RuntimeError):
    """Numerical failure inside a path; ``t`` is the simulated time it happened at."""

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message if t is None else f"{message} (t={t:.6g})")
        self.t = t


class NewtonConvergenceError(SolverError):
    pass


class NonFiniteStateError(SolverError):
    pass


@dataclass(frozen=True)
class InitialCondition:
    """Initial density ``x`` on the grid.

    kind is one of ``"sine"`` (``amplitude * sin(mode * xi)``), ``"constant"``,
    ``"bump"`` (``amplitude * cos^2`` bump of half-width ``width`` centred at
    pi/2) or ``"values"`` (explicit node values).  When ``h_minus1`` is set the
    profile is rescaled so that ``|x|_{-1}`` equals it.
    """

    kind: str = "sine"
    amplitude: float = 1.0
    mode: int = 1
    width: float = math.pi / 4
    values: tuple[float, ...] = ()
    h_minus1: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.kind not in ("sine", "constant", "bump", "values"):
            raise ValueError(f"unknown initial condition kind {self.kind!r}")
        if self.kind == "sine" and self.mode < 1:
            raise ValueError(f"sine mode must be >= 1, got {self.mode}")
        if self.kind == "bump" and not self.width > 0:
            raise ValueError(f"bump width must be positive, got {self.width}")
        if not math.isfinite(self.amplitude):
            raise ValueError("amplitude must be finite")
        if self.h_minus1 is not None and not self.h_minus1 >= 0:
            raise ValueError(f"target H^-1 norm must be >= 0, got {self.h_minus1}")

    def build(self, grid: Grid) -> np.ndarray:
        xi = grid.nodes
        if self.kind == "sine":
            x = self.amplitude * np.sin(self.mode * xi)
        elif self.kind == "constant":
            x = np.full(grid.n, float(self.amplitude))
        elif self.kind == "bump":
            s = (xi - math.pi / 2) / self.width
            x = np.where(np.abs(s) < 1, self.amplitude * np.cos(0.5 * math.pi * s) ** 2, 0.0)
        else:
            if len(self.values) != grid.n:
                raise ValueError(f"initial values have length {len(self.values)}, grid has n={grid.n}")
            x = np.array(self.values)
        if self.h_minus1 is not None:
            norm = grid.h_minus1_norm(x)
            if norm == 0:
                if self.h_minus1 > 0:
                    raise ValueError("cannot rescale a zero profile to a positive H^-1 norm")
            else:
                x = x * (self.h_minus1 / norm)
        return grid.check(x)


@dataclass(frozen=True)
class SimulationConfig:
    grid: Grid = field(default_factory=lambda: Grid(255))
    nonlinearity: NonlinearitySpec = field(default_factory=NonlinearitySpec)
    lam: float = 0.01
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    dt: float = 1e-4
    t_max: float = 1.0
    x_c: float = 0.0
    initial: InitialCondition = field(default_factory=InitialCondition)
    # None means DEFAULT_EXTINCTION_REL * |x - x_c|_{-1}
    extinction_epsilon: Optional[float] = None
    record_every: int = 1
    newton_tol: float = 1e-10
    newton_max_iter: int = 50

    def __post_init__(self):
        validate_hypothesis(self.nonlinearity, raise_on_error=True)
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_max >= self.dt:
            raise ValueError(f"t_max={self.t_max} must be >= dt={self.dt}")
        if self.extinction_epsilon is not None and not self.extinction_epsilon > 0:
            raise ValueError(f"extinction_epsilon must be positive, got {self.extinction_epsilon}")
        if self.record_every < 1:
            raise ValueError(f"record_every must be >= 1, got {self.record_every}")
        if not math.isfinite(self.x_c):
            raise ValueError("x_c must be finite")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    def initial_field(self) -> np.ndarray:
        return self.initial.build(self.grid)

    def epsilon_for(self, z0_norm: float) -> float:
        if self.extinction_epsilon is not None:
            return self.extinction_epsilon
        return DEFAULT_EXTINCTION_REL * z0_norm


@dataclass(frozen=True)
class SolverState:
    t: float
    z: np.ndarray
    eta: np.ndarray
    extinct: bool = False
    tau: Optional[float] = None
    step_index: int = 0
    newton_iterations: int = 0


@dataclass
class PathHistory:
    """Per-step fields needed to audit the weak formulation."""

    dt: float
    z: np.ndarray  # (steps + 1, n)
    eta: np.ndarray  # (steps + 1, n)
    dbeta: np.ndarray  # (steps, N)


@dataclass
class PathResult:
    times: np.ndarray
    h_minus1: np.ndarray
    l1: np.ndarray
    l2: np.ndarray
    min: np.ndarray
    max: np.ndarray
    tau: Optional[float]
    final_state: SolverState
    config: SimulationConfig
    path_index: int = 0
    states: Optional[np.ndarray] = None
    history: Optional[PathHistory] = None

    def table(self) -> np.ndarray:
        """Records as columns ``(t, h_minus1, l1, l2, min, max)``."""
        return np.column_stack((self.times, self.h_minus1, self.l1, self.l2, self.min, self.max))


def initial_state(cfg: SimulationConfig) -> SolverState:
    z = cfg.initial_field() - cfg.x_c
    eta = np.asarray(psi_lambda(z, cfg.nonlinearity, cfg.lam), dtype=float)
    return SolverState(t=0.0, z=z, eta=eta)


def _residual(grid, z, b, spec, lam, dt):
    return z - b - dt * grid.apply_laplacian(psi_lambda(z, spec, lam))


def solve_implicit(
    grid: Grid,
    b: np.ndarray,
    spec: NonlinearitySpec,
    lam: float,
    dt: float,
    guess: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> tuple[np.ndarray, int]:
    """Solve ``z - dt*Lap_h(Psi_lam(z)) = b``; returns ``(z, iterations)``.

    Newton steps are halved until the ``H^{-1}`` residual decreases
    (sufficient-decrease factor ``1 - 1e-4*s``).
    """
    z = np.array(b if guess is None else guess, dtype=float)
    F = _residual(grid, z, b, spec, lam, dt)
    res = grid.h_minus1_norm(F)
    c = dt / grid.h**2
    ab = np.empty((3, grid.n))
    for it in range(max_iter + 1):
        if res <= tol:
            return z, it
        if it == max_iter:
            break
        d = psi_lambda_prime(z, spec, lam)
        ab[0, :] = -c * d
        ab[2, :] = -c * d
        ab[1, :] = 1.0 + 2.0 * c * d
        p = -solve_banded((1, 1), ab, F, check_finite=False)
        s = 1.0
        for _ in range(40):
            z_try = z + s * p
            F_try = _residual(grid, z_try, b, spec, lam, dt)
            if not np.all(np.isfinite(F_try)):
                s *= 0.5
                continue
            res_try = grid.h_minus1_norm(F_try)
            if res_try <= (1.0 - 1e-4 * s) * res:
                break
            s *= 0.5
        else:
            raise NewtonConvergenceError(
                f"line search stalled at iteration {it}: residual {res:.3e}, dt={dt:g}, lam={lam:g}"
            )
        z, F, res = z_try, F_try, res_try
    raise NewtonConvergenceError(
        f"Newton did not converge in {max_iter} iterations: residual {res:.3e} > tol {tol:.1e} "
        f"(dt={dt:g} may be too large for rho/lam={spec.rho / lam:g})"
    )


@lru_cache(maxsize=32)
def _modes(grid: Grid, noise: NoiseSpec) -> np.ndarray:
    return mode_matrix(grid, noise)


def step(state: SolverState, cfg: SimulationConfig, dbeta=None) -> SolverState:
    """Advance one step of length ``cfg.dt`` with Brownian increments ``dbeta``.

    Extinct states are absorbing: they are returned with ``z = 0`` and only the
    clock advanced.
    """
    t_new = state.t + cfg.dt
    if state.extinct:
        zero = np.zeros(cfg.grid.n)
        return replace(state, t=t_new, z=zero, eta=zero, step_index=state.step_index + 1, newton_iterations=0)
    b = state.z
    if cfg.noise.n_modes:
        if dbeta is None:
            raise ValueError("Brownian increments required when the noise has modes")
        dbeta = np.asarray(dbeta, dtype=float)
        if dbeta.shape != (cfg.noise.n_modes,):
            raise ValueError(f"expected {cfg.noise.n_modes} increments, got shape {dbeta.shape}")
        b = b + b * (dbeta @ _modes(cfg.grid, cfg.noise))
    if not np.all(np.isfinite(b)):
        raise NonFiniteStateError("non-finite state before implicit solve", t=state.t)
    try:
        z, iters = solve_implicit(
            cfg.grid, b, cfg.nonlinearity, cfg.lam, cfg.dt,
            guess=state.z, tol=cfg.newton_tol, max_iter=cfg.newton_max_iter,
        )
    except NewtonConvergenceError as exc:
        raise NewtonConvergenceError(str(exc), t=t_new) from None
    if not np.all(np.isfinite(z)):
        raise NonFiniteStateError("non-finite state after implicit solve", t=t_new)
    eta = np.asarray(psi_lambda(z, cfg.nonlinearity, cfg.lam), dtype=float)
    return SolverState(t=t_new, z=z, eta=eta, step_index=state.step_index + 1, newton_iterations=iters)


def _absorb(state: SolverState) -> SolverState:
    zero = np.zeros_like(state.z)
    # eta = 0 is the selection from Psi(0) that keeps the absorbed state stationary
    return replace(state, z=zero, eta=zero, extinct=True, tau=state.t)


def simulate_path(
    cfg: SimulationConfig,
    path_index: int = 0,
    *,
    keep_states: bool = False,
    keep_history: bool = False,
    absorb: bool = True,
    substeps: int = 1,
) -> PathResult:
    """Integrate one path to ``cfg.t_max``.

    Norms are recorded at ``t = 0``, every ``cfg.record_every`` steps, at the
    extinction step and at the final step.  Extinction is declared the first
    time ``|z|_{-1} <= epsilon``; ``z`` is then clamped to zero for good.  With
    ``absorb=False`` extinction is neither detected nor enforced.  ``substeps``
    builds each Brownian increment from that many finer increments, so runs at
    ``dt`` and ``dt/2`` (with ``substeps`` doubled) see the same path.
    """
    grid = cfg.grid
    n_steps = cfg.n_steps
    state = initial_state(cfg)
    z0_norm = grid.h_minus1_norm(state.z)
    eps = cfg.epsilon_for(z0_norm)
    stream = BrownianStream(cfg.noise, path_index, cfg.dt, substeps) if cfg.noise.n_modes else None

    rec_t, rec = [], []
    states = [] if keep_states else None
    if keep_history:
        hz = np.zeros((n_steps + 1, grid.n))
        heta = np.zeros((n_steps + 1, grid.n))
        hdb = np.zeros((n_steps, cfg.noise.n_modes))
        hz[0], heta[0] = state.z, state.eta

    def record(s: SolverState, hnorm: float) -> None:
        rec_t.append(s.t)
        if s.extinct:
            rec.append((0.0, 0.0, 0.0, 0.0, 0.0))
        else:
            rec.append((hnorm, grid.l1_norm(s.z), grid.l2_norm(s.z), float(s.z.min()), float(s.z.max())))
        if states is not None:
            states.append(s.z.copy())

    if absorb and z0_norm <= eps:
        state = _absorb(state)
    record(state, z0_norm)

    for i in range(n_steps):
        last = i == n_steps - 1
        if state.extinct:
            state = replace(state, t=(i + 1) * cfg.dt, step_index=i + 1)
            if (i + 1) % cfg.record_every == 0 or last:
                record(state, 0.0)
            continue
        dbeta = stream.increment(i) if stream is not None else None
        state = step(state, cfg, dbeta)
        # keep the clock on the grid i*dt instead of accumulating roundoff
        state = replace(state, t=(i + 1) * cfg.dt)
        hnorm = grid.h_minus1_norm(state.z)
        just_died = absorb and hnorm <= eps
        if just_died:
            state = _absorb(state)
        if keep_history:
            hz[i + 1], heta[i + 1] = state.z, state.eta
            if dbeta is not None:
                hdb[i] = dbeta
        if just_died or (i + 1) % cfg.record_every == 0 or last:
            record(state, hnorm)

    rec_arr = np.array(rec, dtype=float).reshape(-1, 5)
    return PathResult(
        times=np.array(rec_t),
        h_minus1=rec_arr[:, 0],
        l1=rec_arr[:, 1],
        l2=rec_arr[:, 2],
        min=rec_arr[:, 3],
        max=rec_arr[:, 4],
        tau=state.tau,
        final_state=state,
        config=cfg,
        path_index=path_index,
        states=np.array(states) if states is not None else None,
        history=PathHistory(cfg.dt, hz, heta, hdb) if keep_history else None,
    )


def weak_form_residual(result: PathResult, j: int) -> float:
    """Largest deviation from the weak identity tested against ``e_j``.

    Checks, at every step time ``t_m``,

        <z(t_m), e_j> = <z(0), e_j> + int_0^t_m <eta, Lap e_j> ds
                        + sum_k mu_k int_0^t_m <z e_k, e_j> dbeta_k

    with left-point sums for both integrals and the stencil Laplacian of
    ``e_j``.  The scheme itself evaluates the drift at the right end point,
    so the mismatch is the time-discretisation error of the path.
    """
    hist = result.history
    if hist is None:
        raise ValueError("path has no stored history; rerun simulate_path with keep_history=True")
    cfg = result.config
    grid = cfg.grid
    ej = sine_mode(grid, j)
    proj = grid.h * hist.z @ ej
    drift = hist.dt * grid.h * (hist.eta[:-1] @ grid.apply_laplacian(ej))
    if cfg.noise.n_modes:
        field_ = hist.dbeta @ _modes(grid, cfg.noise)
        noise = grid.h * (hist.z[:-1] * field_) @ ej
    else:
        noise = np.zeros_like(drift)
    predicted = proj[0] + np.concatenate(([0.0], np.cumsum(drift + noise)))
    return float(np.max(np.abs(proj - predicted)))
