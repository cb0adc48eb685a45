"""Refinement and contraction experiments with stored measurements and verdicts.

Each study returns a :class:`StudyReport`.  The verdict is recomputed by
:func:`evaluate_verdict` from the stored numbers alone, so a saved report can
be re-judged without rerunning any path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .solver import InitialCondition, PathResult, SimulationConfig, simulate_path
from .spectral_grid import Grid

__all__ = [
    "StudyReport",
    "evaluate_verdict",
    "lambda_refinement",
    "mesh_refinement",
    "contraction_study",
    "cross_grid_h_minus1",
]


@dataclass
class StudyReport:
    name: str
    ladder: tuple
    measurements: dict[str, list[float]]
    rates: list[float]
    thresholds: dict[str, float]
    verdict: bool = False
    notes: list[str] = field(default_factory=list)

    def rows(self) -> list[tuple]:
        keys = list(self.measurements)
        return [tuple(self.measurements[k][i] for k in keys) for i in range(len(self.measurements[keys[0]]))]


def _ratios(gaps: Sequence[float]) -> list[float]:
    out = []
    for a, b in zip(gaps[:-1], gaps[1:]):
        out.append(b / a if a > 0 else math.nan)
    return out


def evaluate_verdict(report: StudyReport) -> bool:
    """Pass/fail from ``report.measurements`` and ``report.thresholds`` only."""
    th = report.thresholds
    if report.name == "lambda_refinement":
        gaps = report.measurements["gap_h_minus1_sq"]
        ratios = _ratios(gaps)
        slack = th["decrease_slack"]
        decreasing = all(b < a * (1 + slack) for a, b in zip(gaps[:-1], gaps[1:]))
        in_window = all(th["ratio_low"] <= r <= th["ratio_high"] for r in ratios)
        return bool(decreasing and in_window)
    if report.name == "mesh_refinement":
        gaps = report.measurements["gap_h_minus1"]
        return bool(all(b < a for a, b in zip(gaps[:-1], gaps[1:])) or all(g == 0 for g in gaps))
    if report.name == "contraction":
        dist = np.asarray(report.measurements["distance_h_minus1"])
        return bool(np.all(np.diff(dist) <= th["step_slack"]))
    raise ValueError(f"unknown study {report.name!r}")


def _common_states(a: PathResult, b: PathResult):
    """States of both paths at the record times they share.

    Each path adds an extra record at its own extinction step, so only the
    regular cadence is common.  Record times are exact multiples of ``dt``.
    """
    if a.states is None or b.states is None:
        raise ValueError("paths must be run with keep_states=True")
    times, ia, ib = np.intersect1d(a.times, b.times, return_indices=True)
    if times.size < 2:
        raise ValueError("paths share fewer than two record times")
    return times, a.states[ia], b.states[ib]


def _sup_gap(a: PathResult, b: PathResult, norm) -> float:
    _, sa, sb = _common_states(a, b)
    return max(norm(za - zb) for za, zb in zip(sa, sb))


def _integrated_l2_sq(a: PathResult, b: PathResult, grid: Grid) -> float:
    times, sa, sb = _common_states(a, b)
    sq = np.array([grid.l2_norm(za - zb) ** 2 for za, zb in zip(sa, sb)])
    return float(np.sum(0.5 * (sq[1:] + sq[:-1]) * np.diff(times)))


def lambda_refinement(
    cfg: SimulationConfig,
    lambdas: Sequence[float],
    *,
    path_index: int = 0,
    ratio_window: tuple[float, float] = (0.3, 0.8),
    decrease_slack: float = 0.05,
) -> StudyReport:
    """``sup_t |X_lam - X_lam'|_{-1}^2`` between consecutive rungs, one Brownian path.

    Also records ``int_0^T |X_lam - X_lam'|_2^2 dt`` (trapezoid rule over the
    recorded times).  Equal consecutive rungs are allowed and give a zero gap.
    """
    lambdas = tuple(float(v) for v in lambdas)
    if len(lambdas) < 2:
        raise ValueError("lambda ladder needs at least two values")
    if any(b > a for a, b in zip(lambdas[:-1], lambdas[1:])):
        raise ValueError(f"lambda ladder must be nonincreasing, got {lambdas}")
    # the record cadence must be shared, extinction clamping is part of the model
    runs = [simulate_path(replace(cfg, lam=lam), path_index, keep_states=True) for lam in lambdas]
    grid = cfg.grid
    gaps = [_sup_gap(a, b, grid.h_minus1_norm) ** 2 for a, b in zip(runs[:-1], runs[1:])]
    gaps_l2 = [_integrated_l2_sq(a, b, grid) for a, b in zip(runs[:-1], runs[1:])]
    report = StudyReport(
        name="lambda_refinement",
        ladder=lambdas,
        measurements={
            "lam_coarse": list(lambdas[:-1]),
            "lam_fine": list(lambdas[1:]),
            "gap_h_minus1_sq": gaps,
            "gap_l2_time_integrated_sq": gaps_l2,
        },
        rates=_ratios(gaps),
        thresholds={"ratio_low": ratio_window[0], "ratio_high": ratio_window[1], "decrease_slack": decrease_slack},
        notes=[f"tau[{lam:g}]={r.tau}" for lam, r in zip(lambdas, runs)],
    )
    report.verdict = evaluate_verdict(report)
    return report


def cross_grid_h_minus1(coarse: Grid, u_coarse, fine: Grid, u_fine) -> float:
    """``H^{-1}`` distance of two fields on different grids via their sine coefficients.

    Shared modes ``k <= coarse.n`` are compared directly and the fine-only modes
    enter as they are; all modes are weighted by the continuum ``1/k**2``.
    """
    cc = coarse.sine_transform(u_coarse)
    cf = fine.sine_transform(u_fine)
    k = np.arange(1, fine.n + 1, dtype=float)
    diff = cf.copy()
    diff[: coarse.n] -= cc
    return float(math.sqrt(np.sum(diff**2 / k**2)))


def mesh_refinement(cfg: SimulationConfig, n_ladder: Sequence[int], *, path_index: int = 0) -> StudyReport:
    """Sup-in-time ``H^{-1}`` gap between consecutive resolutions, same ``dt`` and Brownian path."""
    n_ladder = tuple(int(v) for v in n_ladder)
    if len(n_ladder) < 2:
        raise ValueError("mesh ladder needs at least two grid sizes")
    if any(b <= a for a, b in zip(n_ladder[:-1], n_ladder[1:])):
        raise ValueError(f"mesh ladder must be strictly increasing, got {n_ladder}")
    if cfg.initial.kind == "values":
        raise ValueError("mesh refinement needs a resolution-independent initial condition")
    runs = [simulate_path(replace(cfg, grid=Grid(n)), path_index, keep_states=True) for n in n_ladder]
    gaps = []
    for (na, ra), (nb, rb) in zip(zip(n_ladder[:-1], runs[:-1]), zip(n_ladder[1:], runs[1:])):
        _, sa, sb = _common_states(ra, rb)
        ga, gb = Grid(na), Grid(nb)
        gaps.append(max(cross_grid_h_minus1(ga, za, gb, zb) for za, zb in zip(sa, sb)))
    report = StudyReport(
        name="mesh_refinement",
        ladder=n_ladder,
        measurements={"n_coarse": list(n_ladder[:-1]), "n_fine": list(n_ladder[1:]), "gap_h_minus1": gaps},
        rates=_ratios(gaps),
        thresholds={},
    )
    report.verdict = evaluate_verdict(report)
    return report


def contraction_study(
    cfg: SimulationConfig,
    x: InitialCondition,
    y: InitialCondition,
    *,
    step_slack: float = 1e-8,
) -> StudyReport:
    """Track ``|X(t,x) - X(t,y)|_{-1}`` for the noise-free flow at every step.

    Paths run without extinction clamping: clamping moves a state by up to
    ``epsilon``, which is not a property of the flow being tested.
    """
    if not cfg.noise.is_deterministic:
        raise ValueError("contraction study requires the noise-free equation")
    base = replace(cfg, record_every=1)
    rx = simulate_path(replace(base, initial=x), keep_states=True, absorb=False)
    ry = simulate_path(replace(base, initial=y), keep_states=True, absorb=False)
    grid = cfg.grid
    dist = [grid.h_minus1_norm(a - b) for a, b in zip(rx.states, ry.states)]
    t_end = float(rx.times[-1])
    if dist[0] > 0 and dist[-1] > 0:
        rate = -math.log(dist[-1] / dist[0]) / t_end
    else:
        rate = math.inf if dist[0] > 0 else 0.0
    report = StudyReport(
        name="contraction",
        ladder=tuple(float(t) for t in rx.times),
        measurements={"t": [float(t) for t in rx.times], "distance_h_minus1": dist},
        rates=[rate],
        thresholds={"step_slack": step_slack},
    )
    report.verdict = evaluate_verdict(report)
    return report
