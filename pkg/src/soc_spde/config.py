"""Flat ``key=value`` run configuration with dotted section keys.

Example::

    grid.n = 255
    nonlinearity.lambda = 0.01
    noise.N = 1
    noise.mu = 0.2
    initial.kind = sine
    initial.h_minus1 = 0.2

Lists are comma separated.  ``#`` starts a comment.  Unknown keys are errors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from .noise import NoiseSpec
from .nonlinearity import Linear, NonlinearitySpec, PiecewiseLinear, validate_hypothesis
from .solver import InitialCondition, SimulationConfig
from .spectral_grid import Grid

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_config_text", "DEFAULTS"]


class ConfigError(ValueError):
    def __init__(self, key: str, reason: str):
        super().__init__(f"{key}: {reason}")
        self.key = key
        self.reason = reason


def _floats(text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(v) for v in text.split(","))


def _ints(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(v) for v in text.split(","))


def _opt_floats(text: str) -> Optional[tuple[float, ...]]:
    return None if text.strip().lower() in ("", "none", "auto") else _floats(text)


def _opt_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


# key -> (parser, default as text)
DEFAULTS: dict[str, tuple[Callable[[str], Any], str]] = {
    "grid.n": (int, "255"),
    "nonlinearity.rho": (float, "1.0"),
    "nonlinearity.psi_tilde": (str, "linear"),
    "nonlinearity.slope": (float, "1.0"),
    "nonlinearity.alpha1": (float, "1.0"),
    "nonlinearity.alpha2": (float, "1.0"),
    "nonlinearity.c": (float, "0.0"),
    "nonlinearity.lambda": (float, "0.01"),
    "noise.N": (int, "0"),
    "noise.mu": (_floats, ""),
    "noise.seed": (int, "0"),
    "time.dt": (float, "1e-4"),
    "time.t_max": (float, "1.0"),
    "time.record_every": (int, "1"),
    "x_c": (float, "0.0"),
    "initial.kind": (str, "sine"),
    "initial.amplitude": (float, "1.0"),
    "initial.mode": (int, "1"),
    "initial.width": (float, repr(math.pi / 4)),
    "initial.values": (_floats, ""),
    "initial.h_minus1": (_opt_float, "none"),
    "initial2.kind": (str, "bump"),
    "initial2.amplitude": (float, "1.0"),
    "initial2.mode": (int, "1"),
    "initial2.width": (float, repr(math.pi / 4)),
    "initial2.values": (_floats, ""),
    "initial2.h_minus1": (_opt_float, "none"),
    "extinction.epsilon": (_opt_float, "auto"),
    "extinction.n_paths": (int, "100"),
    # auto: ten evenly spaced probes ending at time.t_max
    "extinction.t_grid": (_opt_floats, "auto"),
    "extinction.gamma": (str, "continuum"),
    "newton.tol": (float, "1e-10"),
    "newton.max_iter": (int, "50"),
    "bounds.t_grid": (_floats, "0.1,0.2,0.4,0.8,1.6"),
    "bounds.x_norm": (_opt_float, "auto"),
    "gamma.n_values": (_ints, "63,127,255,511,1023"),
    "study.kind": (str, "lambda"),
    "study.lambdas": (_floats, "0.2,0.1,0.05,0.025"),
    "study.n_values": (_ints, "63,127,255"),
}


@dataclass
class RunConfig:
    simulation: SimulationConfig
    values: dict[str, Any]
    initial2: InitialCondition
    extinction_n_paths: int
    extinction_t_grid: tuple[float, ...]
    extinction_gamma: str
    bounds_t_grid: tuple[float, ...]
    bounds_x_norm: Optional[float]
    gamma_n_values: tuple[int, ...]
    study_kind: str
    study_lambdas: tuple[float, ...]
    study_n_values: tuple[int, ...]
    raw: dict[str, str] = field(default_factory=dict)

    def resolved(self) -> dict[str, str]:
        """Every key with the text value in effect, defaults included."""
        return {k: _render(v) for k, v in sorted(self.values.items())}


def _render(v: Any) -> str:
    if v is None:
        return "auto"
    if isinstance(v, tuple):
        return ",".join(repr(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _read_pairs(text: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(key, "unknown key")
        if key in pairs:
            raise ConfigError(key, "duplicate key")
        pairs[key] = value
    return pairs


def _initial(v: dict[str, Any], prefix: str) -> InitialCondition:
    try:
        return InitialCondition(
            kind=v[f"{prefix}.kind"],
            amplitude=v[f"{prefix}.amplitude"],
            mode=v[f"{prefix}.mode"],
            width=v[f"{prefix}.width"],
            values=v[f"{prefix}.values"],
            h_minus1=v[f"{prefix}.h_minus1"],
        )
    except ValueError as exc:
        raise ConfigError(prefix, str(exc)) from None


def parse_config_text(text: str, seed: Optional[int] = None) -> RunConfig:
    pairs = _read_pairs(text)
    v: dict[str, Any] = {}
    for key, (parse, default) in DEFAULTS.items():
        raw = pairs.get(key, default)
        try:
            v[key] = parse(raw)
        except ValueError:
            raise ConfigError(key, f"cannot parse {raw!r}") from None
    if seed is not None:
        v["noise.seed"] = int(seed)

    def positive(key: str, strict: bool = True) -> None:
        val = v[key]
        ok = val > 0 if strict else val >= 0
        if not ok or (isinstance(val, float) and not math.isfinite(val)):
            raise ConfigError(key, f"must be {'positive' if strict else 'nonnegative'}, got {val}")

    for key in ("grid.n", "nonlinearity.rho", "nonlinearity.lambda", "time.dt", "time.t_max",
                "time.record_every", "extinction.n_paths", "newton.tol", "newton.max_iter"):
        positive(key)
    positive("noise.N", strict=False)
    if v["time.t_max"] < v["time.dt"]:
        raise ConfigError("time.t_max", f"must be >= time.dt ({v['time.dt']})")
    if len(v["noise.mu"]) != v["noise.N"]:
        raise ConfigError("noise.mu", f"has {len(v['noise.mu'])} entries but noise.N={v['noise.N']}")
    if any(m < 0 for m in v["noise.mu"]):
        raise ConfigError("noise.mu", "entries must be nonnegative")
    if not 0 <= v["noise.seed"] < 2**64:
        raise ConfigError("noise.seed", "must be an unsigned 64-bit integer")
    if v["extinction.epsilon"] is not None and not v["extinction.epsilon"] > 0:
        raise ConfigError("extinction.epsilon", "must be positive")
    if v["extinction.gamma"] not in ("continuum", "discrete"):
        raise ConfigError("extinction.gamma", "must be 'continuum' or 'discrete'")
    if v["study.kind"] not in ("lambda", "mesh", "contraction"):
        raise ConfigError("study.kind", "must be one of lambda, mesh, contraction")
    if v["extinction.t_grid"] is None:
        v["extinction.t_grid"] = tuple(v["time.t_max"] * k / 10 for k in range(1, 11))
    if any(t < 0 or t > v["time.t_max"] for t in v["extinction.t_grid"]):
        raise ConfigError("extinction.t_grid", "probe times must lie in [0, time.t_max]")
    if any(t <= 0 for t in v["bounds.t_grid"]):
        raise ConfigError("bounds.t_grid", "times must be positive")
    if any(n < 1 for n in v["gamma.n_values"]):
        raise ConfigError("gamma.n_values", "grid sizes must be >= 1")

    kind = v["nonlinearity.psi_tilde"]
    if kind == "linear":
        psi_tilde = Linear(v["nonlinearity.slope"])
    elif kind == "piecewise_linear":
        psi_tilde = PiecewiseLinear(v["nonlinearity.alpha1"], v["nonlinearity.alpha2"], v["nonlinearity.c"])
    else:
        raise ConfigError("nonlinearity.psi_tilde", f"must be 'linear' or 'piecewise_linear', got {kind!r}")
    nl = NonlinearitySpec(rho=v["nonlinearity.rho"], psi_tilde=psi_tilde)
    report = validate_hypothesis(nl)
    if not report.valid:
        if report.delta_min <= 0:
            key = "nonlinearity.slope" if kind == "linear" else "nonlinearity.alpha1/alpha2"
        else:
            key = "nonlinearity.c"
        raise ConfigError(key, "; ".join(report.violations))

    grid = Grid(v["grid.n"])
    initial = _initial(v, "initial")
    try:
        initial.build(grid)
    except ValueError as exc:
        raise ConfigError("initial", str(exc)) from None
    sim = SimulationConfig(
        grid=grid,
        nonlinearity=nl,
        lam=v["nonlinearity.lambda"],
        noise=NoiseSpec(v["noise.N"], v["noise.mu"], v["noise.seed"]),
        dt=v["time.dt"],
        t_max=v["time.t_max"],
        x_c=v["x_c"],
        initial=initial,
        extinction_epsilon=v["extinction.epsilon"],
        record_every=v["time.record_every"],
        newton_tol=v["newton.tol"],
        newton_max_iter=v["newton.max_iter"],
    )
    return RunConfig(
        simulation=sim,
        values=v,
        initial2=_initial(v, "initial2"),
        extinction_n_paths=v["extinction.n_paths"],
        extinction_t_grid=v["extinction.t_grid"],
        extinction_gamma=v["extinction.gamma"],
        bounds_t_grid=v["bounds.t_grid"],
        bounds_x_norm=v["bounds.x_norm"],
        gamma_n_values=v["gamma.n_values"],
        study_kind=v["study.kind"],
        study_lambdas=v["study.lambdas"],
        study_n_values=v["study.n_values"],
        raw=pairs,
    )


def parse_config(path, seed: Optional[int] = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config_text(text, seed=seed)
