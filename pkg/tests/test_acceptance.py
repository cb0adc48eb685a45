"""Exit criteria for the package, one test per criterion.

Each test appends a ``[k] PASS|FAIL ...`` line that the terminal summary
prints after the run.  Tolerances are fixed here and never tuned per run.
"""
import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from soc_spde.extinction import check_admissible, mc_extinction, theoretical_bound
from soc_spde.noise import NoiseSpec, c_n_constant
from soc_spde.nonlinearity import Linear, NonlinearitySpec
from soc_spde.solver import InitialCondition, SimulationConfig, initial_state, simulate_path, step, weak_form_residual
from soc_spde.spectral_grid import Grid, estimate_gamma, gamma_constant, sine_mode
from soc_spde.studies import contraction_study, lambda_refinement

GAMMA = gamma_constant()
RHO = 1.0


def report(k: int, ok: bool, detail: str) -> None:
    line = f"[{k}] {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.fixture(scope="module")
def deterministic_run():
    cfg = SimulationConfig(
        grid=Grid(255), nonlinearity=NonlinearitySpec(RHO, Linear(1.0)), lam=0.01,
        dt=1e-4, t_max=0.6, x_c=0.0, initial=InitialCondition("sine", 0.5),
    )
    return cfg, simulate_path(cfg)


def stochastic_cfg(**kw):
    base = dict(
        grid=Grid(127), nonlinearity=NonlinearitySpec(RHO, Linear(1.0)), lam=0.01,
        dt=1e-3, t_max=0.8, x_c=0.0, record_every=10,
        noise=NoiseSpec(1, (0.2,), master_seed=20240101),
        initial=InitialCondition("sine", 1.0, h_minus1=0.2),
    )
    base.update(kw)
    return SimulationConfig(**base)


@pytest.fixture(scope="module")
def monte_carlo():
    cfg = stochastic_cfg()
    return cfg, mc_extinction(cfg, 1000, [0.2, 0.4, 0.8], keep_paths=True)


def test_1_deterministic_extinction_time(deterministic_run):
    cfg, r = deterministic_run
    limit = 0.5 / (RHO * GAMMA) * 1.05 + 2 * cfg.dt
    ok = r.tau is not None and r.tau <= limit
    x_norm = cfg.grid.h_minus1_norm(cfg.initial_field())
    report(1, ok, f"deterministic tau={r.tau} <= {limit:.5f} (|x|_-1={x_norm:.5f}, bound with it {x_norm / GAMMA:.5f})")
    assert ok


def test_2_deterministic_decay_rate(deterministic_run):
    cfg, r = deterministic_run
    eps = 1e-4 * r.h_minus1[0]
    h = r.h_minus1
    alive = h[:-1] > eps
    rate = -np.diff(h)[alive] / cfg.dt
    need = 0.9 * GAMMA * RHO
    ok = bool(np.all(rate >= need))
    bad = h[:-1][alive][rate < need]
    detail = f"min per-step decrement/dt={rate.min():.4f} vs {need:.4f} while |z|_-1 > eps={eps:.2e}"
    if bad.size:
        detail += f"; {bad.size} steps below, all with |z|_-1 <= {bad.max():.4f} (lam-band, lam={cfg.lam})"
    report(2, ok, detail)
    assert ok


def test_3_stochastic_bound(monte_carlo):
    cfg, s = monte_carlo
    c_n = c_n_constant(cfg.noise)
    assert c_n == pytest.approx(0.04 * math.pi)
    assert s.x_norm == pytest.approx(0.2, rel=1e-12)
    admissible = check_admissible(s.x_norm, RHO, GAMMA, c_n) and s.x_norm < RHO * GAMMA / c_n
    ok = admissible and bool(np.all(s.ci_high >= s.bound)) and s.n_paths + s.n_failed == 1000
    cells = ", ".join(f"t={t}: cdf={p:.3f} ci_high={hi:.3f} bound={b:.4f}" for t, p, hi, b in zip(s.t_grid, s.empirical_cdf, s.ci_high, s.bound))
    report(3, ok, f"admissible={admissible}, failed={s.n_failed}; {cells}")
    assert s.bound[1] == pytest.approx(0.546, abs=1e-3)
    assert ok


def test_4_positivity():
    cfg = stochastic_cfg(
        t_max=0.4, record_every=1, noise=NoiseSpec(3, (0.2, 0.2, 0.2), master_seed=7),
        initial=InitialCondition("bump", 0.5, width=math.pi / 4),
    )
    x_max = cfg.initial_field().max()
    floor = -1e-6 * max(1.0, x_max)
    worst = min(simulate_path(cfg, p).min.min() for p in range(100))
    ok = worst >= floor
    report(4, ok, f"min recorded value over 100 paths = {worst:.3e} >= {floor:.1e}")
    assert ok


def test_5_absorption(monte_carlo):
    _, s = monte_carlo
    extinct = [p for p in s.paths if p.tau is not None]
    bad = 0
    for p in extinct:
        after = p.times >= p.tau
        if not np.all(p.table()[after, 1:] == 0) or not np.all(p.final_state.z == 0):
            bad += 1
    ok = bad == 0 and len(extinct) > 0
    report(5, ok, f"{len(extinct)} extinct paths, {bad} with nonzero norms after tau")
    assert ok


def test_6_gamma_constant():
    vals = [estimate_gamma(n) for n in (255, 511, 1023)]
    within = all(abs(v / GAMMA - 1) <= 0.02 for v in vals)
    monotone = all(b <= a * (1 + 1e-12) for a, b in zip(vals, vals[1:]))
    ok = within and monotone
    report(6, ok, f"estimates {[round(v, 10) for v in vals]} vs 2/sqrt(pi)={GAMMA:.10f}")
    assert ok


def test_7_lambda_cauchy_rate():
    cfg = stochastic_cfg(grid=Grid(255), dt=1e-4, t_max=0.5, record_every=10)
    rep = lambda_refinement(cfg, [0.2, 0.1, 0.05, 0.025], ratio_window=(0.3, 0.8))
    gaps = rep.measurements["gap_h_minus1_sq"]
    strictly = all(b < a for a, b in zip(gaps, gaps[1:]))
    in_window = all(0.3 <= r <= 0.8 for r in rep.rates)
    ok = strictly and in_window
    report(7, ok, f"sup gap^2={[f'{g:.3e}' for g in gaps]}, ratios={[round(r, 3) for r in rep.rates]} (window [0.3, 0.8])")
    assert ok


def test_8_contraction():
    rng = np.random.default_rng(8)
    n = 255
    x = InitialCondition("values", values=tuple(rng.uniform(0.0, 0.6, n)))
    y = InitialCondition("values", values=tuple(rng.uniform(0.0, 0.6, n)))
    cfg = SimulationConfig(grid=Grid(n), lam=0.01, dt=1e-4, t_max=0.3)
    rep = contraction_study(cfg, x, y, step_slack=1e-8)
    d = np.diff(rep.measurements["distance_h_minus1"])
    ok = bool(np.all(d <= 1e-8))
    report(8, ok, f"max per-step increase of |X(t,x)-X(t,y)|_-1 = {d.max():.3e} (slack 1e-8)")
    assert ok


def test_9_infrastructure_exactness():
    rng = np.random.default_rng(9)
    worst_rt = worst_inv = 0.0
    for n in (1, 2, 63, 255, 1000, 1023):
        g = Grid(n)
        u = rng.normal(size=n)
        worst_rt = max(worst_rt, np.max(np.abs(g.inverse_sine_transform(g.sine_transform(u)) - u)) / np.max(np.abs(u)))
        f = rng.normal(size=n)
        w = g.apply_inverse_laplacian(f)
        worst_inv = max(worst_inv, np.linalg.norm(g.apply_laplacian(w) - f) / np.linalg.norm(f))
    lam = 0.1
    g = Grid(255)
    a = 0.9 * lam / math.sqrt(2 / math.pi)
    cfg = SimulationConfig(grid=g, lam=lam, dt=1e-3, t_max=1e-3,
                           initial=InitialCondition("values", values=tuple(a * sine_mode(g, 1))))
    s0 = initial_state(cfg)
    s1 = step(s0, cfg)
    expected = s0.z / (1 + cfg.dt * (RHO / lam + 1.0) * g.eigenvalues[0])
    worst_lin = np.max(np.abs(s1.z - expected)) / np.max(np.abs(expected))
    ok = worst_rt <= 1e-12 and worst_inv <= 1e-10 and worst_lin <= 1e-10
    report(9, ok, f"round trip {worst_rt:.1e}, inverse Laplacian {worst_inv:.1e}, linear step {worst_lin:.1e}")
    assert ok


def test_10_weak_form_residual():
    cfg = stochastic_cfg(
        grid=Grid(127), dt=1e-3, t_max=0.1, record_every=1, lam=0.01,
        noise=NoiseSpec(2, (0.3, 0.2), master_seed=10), initial=InitialCondition("sine", 0.5),
    )
    coarse = simulate_path(cfg, keep_history=True, substeps=2)
    fine = simulate_path(replace(cfg, dt=cfg.dt / 2), keep_history=True, substeps=1)
    ratios = [weak_form_residual(fine, j) / weak_form_residual(coarse, j) for j in (1, 2, 3)]
    ok = all(0.4 <= r <= 0.6 for r in ratios)
    report(10, ok, f"residual ratios (dt/2 vs dt) for j=1,2,3: {[round(r, 4) for r in ratios]} (target 0.5 +- 20%)")
    assert ok
