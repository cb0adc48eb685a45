"""Monte Carlo law of the extinction time and the closed-form bounds it is checked against."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from .noise import c_n_constant
from .solver import PathResult, SimulationConfig, SolverError, simulate_path
from .spectral_grid import estimate_gamma, gamma_constant

__all__ = [
    "MCSummary",
    "ExperimentFailedError",
    "theoretical_bound",
    "deterministic_bound",
    "check_admissible",
    "wilson_interval",
    "summarize_taus",
    "mc_extinction",
]

log = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.01


class ExperimentFailedError(RuntimeError):
    pass


@dataclass
class MCSummary:
    t_grid: np.ndarray
    empirical_cdf: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_paths: int
    bound: np.ndarray
    admissible: bool
    x_norm: float
    gamma: float
    c_n: float
    rho: float
    taus: np.ndarray  # nan for paths that did not go extinct
    n_failed: int = 0
    failures: list = field(default_factory=list)
    paths: Optional[list] = None

    def table(self) -> np.ndarray:
        """Columns ``(t, empirical_cdf, ci_low, ci_high, bound)``."""
        return np.column_stack((self.t_grid, self.empirical_cdf, self.ci_low, self.ci_high, self.bound))


def theoretical_bound(t: float, x_norm: float, rho: float, gamma: float, c_n: float) -> float:
    """Lower bound ``1 - x_norm / (rho*gamma*int_0^t exp(-c_n s) ds)`` on ``P(tau <= t)``.

    Returned as-is even when negative (the bound is then vacuous).
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if not (rho > 0 and gamma > 0):
        raise ValueError(f"rho and gamma must be positive, got rho={rho}, gamma={gamma}")
    if c_n < 0:
        raise ValueError(f"c_n must be nonnegative, got {c_n}")
    if math.isinf(t):
        integral = 1.0 / c_n if c_n > 0 else math.inf
    elif c_n == 0:
        integral = t
    else:
        integral = -math.expm1(-c_n * t) / c_n
    return 1.0 - x_norm / (rho * gamma * integral)


def deterministic_bound(x_norm: float, rho: float, gamma: float) -> float:
    """Noise-free extinction time bound ``x_norm / (rho*gamma)``."""
    if not (rho > 0 and gamma > 0):
        raise ValueError(f"rho and gamma must be positive, got rho={rho}, gamma={gamma}")
    if math.isinf(rho):
        return 0.0
    return x_norm / (rho * gamma)


def check_admissible(x_norm: float, rho: float, gamma: float, c_n: float) -> bool:
    return x_norm * c_n < rho * gamma


def wilson_interval(successes, n: int, alpha: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = proportion_confint(np.asarray(successes), n, alpha=alpha, method="wilson")
    return np.clip(lo, 0.0, 1.0), np.clip(hi, 0.0, 1.0)


def summarize_taus(
    taus: Sequence[float],
    t_grid: Sequence[float],
    *,
    x_norm: float,
    rho: float,
    gamma: float,
    c_n: float,
    n_failed: int = 0,
) -> MCSummary:
    """Empirical CDF, Wilson 95% band and bound column from extinction times.

    ``taus`` holds one entry per successful path, ``nan`` when the path never
    went extinct.
    """
    taus = np.asarray(taus, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    n = taus.size
    if n == 0:
        raise ExperimentFailedError("no successful paths to summarise")
    hit = np.where(np.isnan(taus), np.inf, taus)
    counts = np.array([(hit <= t).sum() for t in t_grid])
    lo, hi = wilson_interval(counts, n)
    bound = np.array([theoretical_bound(t, x_norm, rho, gamma, c_n) if t > 0 else -np.inf for t in t_grid])
    return MCSummary(
        t_grid=t_grid,
        empirical_cdf=counts / n,
        ci_low=lo,
        ci_high=hi,
        n_paths=n,
        bound=bound,
        admissible=check_admissible(x_norm, rho, gamma, c_n),
        x_norm=x_norm,
        gamma=gamma,
        c_n=c_n,
        rho=rho,
        taus=taus,
        n_failed=n_failed,
    )


def _run_paths(cfg: SimulationConfig, indices: Sequence[int], keep_paths: bool):
    out = []
    for i in indices:
        try:
            res = simulate_path(cfg, i)
        except SolverError as exc:
            out.append((i, None, str(exc)))
            continue
        out.append((i, res if keep_paths else res.tau, None))
    return out


def mc_extinction(
    cfg: SimulationConfig,
    n_paths: int,
    t_grid: Sequence[float],
    *,
    gamma: float | str | None = None,
    threads: int = 1,
    keep_paths: bool = False,
) -> MCSummary:
    """Run ``n_paths`` independent paths and tabulate ``P(tau <= t)``.

    Path ``i`` uses Brownian stream ``(cfg.noise.master_seed, i)``, so the
    result does not depend on ``threads``.  ``gamma`` defaults to the continuum
    constant; ``"discrete"`` uses the grid's own constant.
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid < 0) or np.any(t_grid > cfg.t_max + 1e-12):
        raise ValueError(f"probe times must lie in [0, t_max={cfg.t_max}]")
    if gamma is None or gamma == "continuum":
        gamma = gamma_constant()
    elif gamma == "discrete":
        gamma = estimate_gamma(cfg.grid.n)
    gamma = float(gamma)

    indices = list(range(n_paths))
    if threads <= 1 or n_paths == 1:
        rows = _run_paths(cfg, indices, keep_paths)
    else:
        chunks = [indices[k::threads] for k in range(threads)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = pool.map(_run_paths, [cfg] * threads, chunks, [keep_paths] * threads)
            rows = [r for part in parts for r in part]
    rows.sort(key=lambda r: r[0])

    failures = [(i, msg) for i, _, msg in rows if msg is not None]
    ok = [val for _, val, msg in rows if msg is None]
    if failures:
        log.warning("%d of %d paths failed; first: %s", len(failures), n_paths, failures[0][1])
    if len(failures) > MAX_FAILURE_FRACTION * n_paths:
        raise ExperimentFailedError(
            f"{len(failures)} of {n_paths} paths failed (limit {MAX_FAILURE_FRACTION:.0%}); "
            f"first failure: path {failures[0][0]}: {failures[0][1]}"
        )
    if keep_paths:
        taus = [np.nan if r.tau is None else r.tau for r in ok]
    else:
        taus = [np.nan if tau is None else tau for tau in ok]

    z0 = cfg.initial_field() - cfg.x_c
    summary = summarize_taus(
        taus,
        t_grid,
        x_norm=cfg.grid.h_minus1_norm(z0),
        rho=cfg.nonlinearity.rho,
        gamma=gamma,
        c_n=c_n_constant(cfg.noise),
        n_failed=len(failures),
    )
    summary.failures = failures
    if keep_paths:
        summary.paths = ok
    return summary
