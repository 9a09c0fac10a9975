"""Command-line front end: ``hslevy simulate | verify | hermite``."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .coefficients import SyntheticField, verify_hypotheses
from .config import ConfigError, RunConfig, load_config, preset_names
from .engine import (interlace_solve, picard_batch, picard_solve, solve_local,
                     solve_reduced_euler)
from .harness import (CheckReport, check_growth_bound, check_interlace, check_picard_decay,
                      check_truncation, check_uniqueness, digest, picard_rate_constant)
from .hermite import (ExpansionVector, hermite_eval, project, sobolev_norm, translate)
from .noise import sample_noise


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def _map(threads: int, fn, items):
    """Ordered map over a worker pool; results come back in input order."""
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def simulate(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    prob = cfg.problem()

    def one(rep: int):
        noise = sample_noise(cfg.model, cfg.horizon, cfg.steps, cfg.seed, rep)
        trace = None
        if cfg.solver == "euler":
            rec = solve_reduced_euler(prob, noise)
        elif cfg.solver == "picard":
            rec, trace = picard_solve(prob, noise, cfg.k_max, cfg.tol)
        elif cfg.solver == "interlace":
            rec = interlace_solve(prob, noise)
        else:
            rec = solve_local(prob, noise, cfg.m_levels)
        return rec, trace

    results = _map(threads, one, range(cfg.replications))
    paths = out / "paths"
    paths.mkdir(parents=True, exist_ok=True)
    runs = []
    for rep, (rec, trace) in enumerate(results):
        (paths / f"path_{rep:05d}.csv").write_text(rec.to_csv())
        entry = rec.summary()
        if trace is not None:
            entry["picard"] = trace.to_dict()
        runs.append(entry)
    _dump(out / "summary.json", {
        "solver": cfg.solver,
        "seed": cfg.seed,
        "replications": cfg.replications,
        "steps": cfg.steps,
        "horizon": cfg.horizon,
        "config_digest": digest(cfg.raw),
        "runs": runs,
    })
    return 1 if any(rec.numerical_failure for rec, _ in results) and cfg.solver != "local" else 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _hypotheses(cfg: RunConfig, radii):
    return verify_hypotheses(cfg.coefficients, cfg.small_family, cfg.large_family, cfg.model,
                             [cfg.parameter], radii, cfg.check_options["hypothesis_samples"], cfg.seed)


def _cubic(cfg: RunConfig) -> SyntheticField:
    return SyntheticField(cfg.dimension, drift=lambda Z: Z ** 3)


def run_check(name: str, cfg: RunConfig, threads: int = 1) -> CheckReport:
    opts = cfg.check_options
    prob = cfg.problem()
    lifted_only = ("hypotheses", "picard_decay", "truncation")
    if cfg.is_synthetic and name in lifted_only:
        raise ConfigError(f"checks", f"check {name!r} needs lifted coefficients")
    if name == "hypotheses":
        hyp = _hypotheses(cfg, opts["hypothesis_radii"])
        return CheckReport("hypotheses", hyp.passed, 0.0, hyp.to_dict(), digest("hypotheses", cfg.raw))
    if name in ("growth", "growth_control"):
        fld = _cubic(cfg) if name == "growth_control" else prob.field
        rep = check_growth_bound(fld, cfg.model, float(opts["growth_radius"]),
                                 int(opts["growth_samples"]), cfg.seed,
                                 negative_control=name == "growth_control")
        rep.check_id = name
        return rep
    if name in ("uniqueness", "uniqueness_control"):
        ref = int(opts["uniqueness_reference_steps"])
        reps = range(cfg.replications)
        noises = _map(threads, lambda r: sample_noise(cfg.model, cfg.horizon, ref, cfg.seed, r), reps)
        oracle = None
        if name == "uniqueness_control":
            oracle = [sample_noise(cfg.model, cfg.horizon, ref, cfg.seed + 1, r) for r in reps]
        rep = check_uniqueness(prob, noises, [int(m) for m in opts["uniqueness_M"]],
                               float(opts["uniqueness_tolerance"]), oracle, cfg.k_max, cfg.tol,
                               negative_control=name == "uniqueness_control")
        rep.check_id = name
        return rep
    if name == "picard_decay":
        hyp = _hypotheses(cfg, opts["hypothesis_radii"])
        noises = [sample_noise(cfg.model, cfg.horizon, cfg.steps, cfg.seed, r) for r in range(cfg.replications)]
        traces = [t for _, t in picard_batch(prob, noises, int(opts["picard_k_max"]), 0.0)]
        return check_picard_decay(traces, cfg.horizon, picard_rate_constant(hyp, cfg.horizon))
    if name == "interlace":
        noises = [sample_noise(cfg.model, cfg.horizon, cfg.steps, cfg.seed, r) for r in range(cfg.replications)]
        return check_interlace(prob, noises)
    if name == "truncation":
        radius = float(opts["truncation_radius"])
        hyp = _hypotheses(cfg, [radius])
        return check_truncation(prob.field, cfg.model, radius, hyp, int(opts["truncation_samples"]), cfg.seed)
    raise ConfigError("checks", f"unknown check {name!r}")


def verify(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    names = cfg.checks or ["growth"]
    reports = _map(threads, lambda n: run_check(n, cfg, 1), names)
    rdir = out / "reports"
    rdir.mkdir(parents=True, exist_ok=True)
    for rep in reports:
        (rdir / f"{rep.check_id}.json").write_text(rep.dumps() + "\n")
    failed = [r.check_id for r in reports if not r.negative_control and not r.passed]
    controls_ok = {r.check_id: not r.passed for r in reports if r.negative_control}
    _dump(out / "summary.json", {
        "checks": {r.check_id: r.passed for r in reports},
        "negative_controls_failed_as_expected": controls_ok,
        "failed": failed,
        "seed": cfg.seed,
        "config_digest": digest(cfg.raw),
    })
    for r in reports:
        tag = "control" if r.negative_control else ("PASS" if r.passed else "FAIL")
        print(f"{r.check_id}: {tag}")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# hermite utilities
# ---------------------------------------------------------------------------

def _index(text: str) -> tuple[int, ...]:
    return tuple(int(k) for k in text.split(","))


def _floats(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",")])


FUNCTIONS = {
    "gaussian": lambda x: np.exp(-np.sum(x ** 2, axis=-1)),
    "sech": lambda x: np.prod(1.0 / np.cosh(x), axis=-1),
    "bump": lambda x: np.where(np.sum(x ** 2, axis=-1) < 1,
                               np.exp(-1.0 / np.maximum(1e-300, 1 - np.sum(x ** 2, axis=-1))), 0.0),
}


def hermite_command(args) -> int:
    if args.action == "eval":
        n = _index(args.index)
        for x in args.points:
            print(repr(hermite_eval(n, _floats(x))))
    elif args.action == "norm":
        n = _index(args.index)
        vec = ExpansionVector.basis(n, sum(n))
        print(repr(sobolev_norm(vec, args.p)))
    elif args.action == "translate":
        n = _index(args.index)
        vec = ExpansionVector.basis(n, args.cutoff)
        moved = translate(vec, _floats(args.shift))
        print(json.dumps(moved.to_dict()))
    elif args.action == "project":
        f = FUNCTIONS[args.function]
        vec = project(lambda x: f(np.asarray(x).reshape(-1, args.dim)), args.cutoff, dim=args.dim)
        print(json.dumps(vec.to_dict()))
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hslevy", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("simulate", "solve and write paths"), ("verify", "run checks and write reports")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True,
                       help=f"TOML file, or preset:NAME with NAME in {{{', '.join(preset_names())}}}")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--replications", type=int, help="override the replication count")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
    h = sub.add_parser("hermite", help="Hermite utilities for debugging")
    hs = h.add_subparsers(dest="action", required=True)
    e = hs.add_parser("eval", help="h_n at points")
    e.add_argument("--index", required=True, help="multi-index, e.g. 2 or 1,0")
    e.add_argument("points", nargs="+", help="points, components separated by commas")
    n = hs.add_parser("norm", help="||h_n||_p")
    n.add_argument("--index", required=True)
    n.add_argument("--p", type=float, required=True)
    t = hs.add_parser("translate", help="coefficients of tau_z h_n")
    t.add_argument("--index", required=True)
    t.add_argument("--shift", required=True, help="shift vector, components separated by commas")
    t.add_argument("--cutoff", type=int, default=16)
    pr = hs.add_parser("project", help="coefficients of a named test function")
    pr.add_argument("--function", choices=sorted(FUNCTIONS), required=True)
    pr.add_argument("--cutoff", type=int, default=16)
    pr.add_argument("--dim", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "hermite":
        return hermite_command(args)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed", "must be >= 0")
            cfg.seed = args.seed
        if args.replications is not None:
            if args.replications < 1:
                raise ConfigError("--replications", "must be >= 1")
            cfg.replications = args.replications
        if args.threads < 1:
            raise ConfigError("--threads", "must be >= 1")
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "simulate":
        return simulate(cfg, out, args.threads)
    return verify(cfg, out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
