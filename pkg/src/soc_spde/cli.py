"""Command line front end.

    soc-spde SUBCOMMAND --config FILE [--seed S] [--out DIR] [--threads N]

Subcommands: simulate, extinction, bounds, gamma, study.  Every CSV starts
with ``#`` comment lines, one of which is ``# manifest_sha256=<digest>``; the
digest covers the resolved configuration, seed, subcommand and tool version.
``manifest.json`` in the output directory repeats those and lists a SHA-256
for each CSV.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.  Errors
are reported as one ``key=value`` line on stderr.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, parse_config
from .extinction import ExperimentFailedError, check_admissible, deterministic_bound, mc_extinction, theoretical_bound
from .noise import c_n_constant
from .solver import SolverError, simulate_path
from .spectral_grid import estimate_gamma, gamma_constant
from .studies import contraction_study, lambda_refinement, mesh_refinement

SUBCOMMANDS = ("simulate", "extinction", "bounds", "gamma", "study")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _csv_text(digest: str, meta: dict, columns: list[str], rows) -> str:
    buf = io.StringIO()
    buf.write(f"# soc_spde {__version__}\n")
    buf.write(f"# manifest_sha256={digest}\n")
    for k, val in meta.items():
        buf.write(f"# {k}={val}\n")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def manifest_digest(run: RunConfig, subcommand: str) -> str:
    payload = {
        "tool": "soc_spde",
        "version": __version__,
        "subcommand": subcommand,
        "seed": run.simulation.noise.master_seed,
        "config": run.resolved(),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _simulate(run: RunConfig, threads: int):
    res = simulate_path(run.simulation, 0)
    meta = {"tau": "none" if res.tau is None else repr(res.tau)}
    return {"timeseries.csv": (meta, ["t", "h_minus1", "l1", "l2", "min", "max"], res.table())}


def _extinction(run: RunConfig, threads: int):
    s = mc_extinction(
        run.simulation, run.extinction_n_paths, run.extinction_t_grid,
        gamma=run.extinction_gamma, threads=threads,
    )
    meta = {
        "n_paths": s.n_paths,
        "n_failed": s.n_failed,
        "admissible": _fmt(s.admissible),
        "x_norm": repr(s.x_norm),
        "gamma": repr(s.gamma),
        "c_n": repr(s.c_n),
    }
    return {"extinction.csv": (meta, ["t", "empirical_cdf", "ci_low", "ci_high", "bound"], s.table())}


def _bounds(run: RunConfig, threads: int):
    sim = run.simulation
    x_norm = run.bounds_x_norm
    if x_norm is None:
        x_norm = sim.grid.h_minus1_norm(sim.initial_field() - sim.x_c)
    rho, gamma, c_n = sim.nonlinearity.rho, gamma_constant(), c_n_constant(sim.noise)
    det = deterministic_bound(x_norm, rho, gamma)
    rows = [(t, x_norm, c_n, theoretical_bound(t, x_norm, rho, gamma, c_n), det) for t in run.bounds_t_grid]
    meta = {"rho": repr(rho), "gamma": repr(gamma), "admissible": _fmt(check_admissible(x_norm, rho, gamma, c_n))}
    return {"bounds.csv": (meta, ["t", "x_norm", "c_n", "theoretical_bound", "deterministic_bound"], rows)}


def _gamma(run: RunConfig, threads: int):
    rows = [(n, estimate_gamma(n)) for n in run.gamma_n_values]
    return {"gamma.csv": ({"gamma_continuum": repr(gamma_constant())}, ["n", "gamma_estimate"], rows)}


def _study(run: RunConfig, threads: int):
    sim = run.simulation
    if run.study_kind == "lambda":
        rep = lambda_refinement(sim, run.study_lambdas)
    elif run.study_kind == "mesh":
        rep = mesh_refinement(sim, run.study_n_values)
    else:
        if not sim.noise.is_deterministic:
            raise ConfigError("noise.N", "contraction study requires the noise-free equation")
        rep = contraction_study(sim, sim.initial, run.initial2)
    meta = {
        "study": rep.name,
        "verdict": "pass" if rep.verdict else "fail",
        "rates": ",".join(repr(r) for r in rep.rates),
        "thresholds": ",".join(f"{k}:{v!r}" for k, v in rep.thresholds.items()),
    }
    return {f"study_{rep.name}.csv": (meta, list(rep.measurements), rep.rows())}


_DISPATCH = {
    "simulate": _simulate,
    "extinction": _extinction,
    "bounds": _bounds,
    "gamma": _gamma,
    "study": _study,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="soc-spde", description=__doc__.split("\n\n")[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="key=value configuration file")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides noise.seed)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker processes for Monte Carlo paths")
    return p


def _fail(code: int, kind: str, message: str, key: str | None = None) -> int:
    parts = [f"error={kind}"]
    if key:
        parts.append(f"key={key}")
    parts.append("message=" + json.dumps(message))
    print(" ".join(parts), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        return _fail(EXIT_CONFIG, "config", "must be >= 1", key="--threads")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        return _fail(EXIT_CONFIG, "config", "must be an unsigned 64-bit integer", key="--seed")
    try:
        run = parse_config(args.config, seed=args.seed)
        digest = manifest_digest(run, args.subcommand)
        outputs = _DISPATCH[args.subcommand](run, args.threads)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc.reason, key=exc.key)
    except (SolverError, ExperimentFailedError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", str(exc))
    except ValueError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    checksums = {}
    for name, (meta, columns, rows) in outputs.items():
        text = _csv_text(digest, meta, columns, rows)
        data = text.encode("utf-8")
        (out / name).write_bytes(data)
        checksums[name] = hashlib.sha256(data).hexdigest()
    manifest = {
        "tool": "soc_spde",
        "version": __version__,
        "subcommand": args.subcommand,
        "seed": run.simulation.noise.master_seed,
        "config": run.resolved(),
        "manifest_sha256": digest,
        "outputs": checksums,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for name in outputs:
        print(out / name)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
