"""Run configuration: TOML loading, validation and problem construction.

See the README for the full grammar.  Every validation error names the
offending field, for example ``coefficients.drift[0].terms[1]``.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .coefficients import (ClampedLinearSmallJump, DistributionCoefficientSet, IdentityLargeJump,
                           LargeJumpFamily, LinearLargeJump, SmallJumpFamily,
                           TanhLargeJump, ZeroLargeJump, ZeroSmallJump, synthetic_from_dict)
from .engine import SolveProblem
from .hermite import ExpansionVector, order
from .noise import LargeJumpSampler, LevyModel

SOLVERS = ("euler", "picard", "interlace", "local")
CHECKS = ("hypotheses", "growth", "uniqueness", "picard_decay", "interlace", "truncation",
          "growth_control", "uniqueness_control")

CHECK_DEFAULTS = {
    "growth_radius": 4.0,
    "growth_samples": 4000,
    "uniqueness_M": [64, 256, 1024, 4096],
    "uniqueness_reference_steps": 16384,
    "uniqueness_tolerance": 1e-3,
    "truncation_radius": 2.0,
    "truncation_samples": 100_000,
    "hypothesis_radii": [1.0, 2.0, 4.0],
    "hypothesis_samples": 2000,
    "picard_k_max": 20,
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class RunConfig:
    dimension: int
    regularity: float
    cutoff: int
    horizon: float
    steps: int
    seed: int
    replications: int
    initial_state: np.ndarray
    model: LevyModel
    solver: str = "euler"
    coefficients: DistributionCoefficientSet | None = None
    synthetic: dict | None = None
    small_family: SmallJumpFamily | None = None
    large_family: LargeJumpFamily | None = None
    parameter: ExpansionVector | None = None
    k_max: int = 50
    tol: float = 1e-10
    m_levels: list = field(default_factory=lambda: [2.0, 4.0, 8.0, 16.0, 32.0])
    checks: list = field(default_factory=list)
    check_options: dict = field(default_factory=lambda: dict(CHECK_DEFAULTS))
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def is_synthetic(self) -> bool:
        return self.synthetic is not None

    def problem(self) -> SolveProblem:
        if self.is_synthetic:
            fld = synthetic_from_dict(self.synthetic, self.dimension)
            return SolveProblem(fld, None, None, None, self.initial_state, self.model,
                                self.horizon, self.steps)
        return SolveProblem(self.coefficients, self.small_family, self.large_family, self.parameter,
                            self.initial_state, self.model, self.horizon, self.steps)


# ---------------------------------------------------------------------------
# Typed getters
# ---------------------------------------------------------------------------

def _get(table: dict, key: str, path: str, kind, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"{path}{key}", "is required")
        return default
    value = table[key]
    full = f"{path}{key}"
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(full, f"expected a number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(full, f"expected an integer, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(full, f"expected a string, got {value!r}")
        return value
    if kind is list:
        if not isinstance(value, list):
            raise ConfigError(full, f"expected an array, got {value!r}")
        return value
    if kind is dict:
        if not isinstance(value, dict):
            raise ConfigError(full, f"expected a table, got {value!r}")
        return value
    raise TypeError(kind)


def _vector(value, dim: int, path: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != dim or \
            any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
        raise ConfigError(path, f"expected {dim} numbers, got {value!r}")
    return np.array(value, dtype=float)


def parse_expansion(entry: Any, dim: int, cutoff: int, regularity: float, path: str) -> ExpansionVector:
    """Build an expansion from its config form (see README)."""
    if not isinstance(entry, dict):
        raise ConfigError(path, f"expected an expansion table, got {entry!r}")
    if "preset" in entry:
        name = _get(entry, "preset", f"{path}.", str)
        if name == "zero":
            return ExpansionVector.zeros(dim, cutoff, regularity)
        if name in ("delta0", "delta"):
            point = np.zeros(dim) if name == "delta0" else _vector(entry.get("point"), dim, f"{path}.point")
            return ExpansionVector.delta(point, cutoff, regularity)
        if name == "basis":
            index = entry.get("index", [0] * dim)
            if not isinstance(index, list) or len(index) != dim or \
                    any(isinstance(k, bool) or not isinstance(k, int) or k < 0 for k in index):
                raise ConfigError(f"{path}.index", f"expected {dim} non-negative integers")
            if order(index) > cutoff:
                raise ConfigError(f"{path}.index", f"|n| exceeds cutoff {cutoff}")
            scale = _get(entry, "scale", f"{path}.", float, 1.0)
            return ExpansionVector.basis(index, cutoff, scale, regularity)
        raise ConfigError(f"{path}.preset", f"unknown expansion preset {name!r}")
    terms = _get(entry, "terms", f"{path}.", list, required=True)
    coeffs = {}
    for i, term in enumerate(terms):
        tpath = f"{path}.terms[{i}]"
        if not isinstance(term, list) or len(term) != dim + 1:
            raise ConfigError(tpath, f"expected [n_1, ..., n_{dim}, value]")
        *index, value = term
        if any(isinstance(k, bool) or not isinstance(k, int) or k < 0 for k in index):
            raise ConfigError(tpath, "multi-index entries must be non-negative integers")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(tpath, f"coefficient must be a number, got {value!r}")
        if sum(index) > cutoff:
            raise ConfigError(tpath, f"|n| = {sum(index)} exceeds cutoff {cutoff}")
        coeffs[tuple(index)] = coeffs.get(tuple(index), 0.0) + float(value)
    return ExpansionVector.from_dict({"dim": dim, "cutoff": cutoff, "regularity": regularity,
                                      "coeffs": [[list(k), v] for k, v in coeffs.items()]})


# ---------------------------------------------------------------------------
# Blocks
# ---------------------------------------------------------------------------

def _levy(table: dict, dim: int) -> LevyModel:
    atoms = []
    for i, atom in enumerate(_get(table, "small_atoms", "levy.", list, [])):
        path = f"levy.small_atoms[{i}]"
        if not isinstance(atom, dict):
            raise ConfigError(path, "expected a table {mark = [...], rate = ...}")
        mark = _vector(atom.get("mark"), dim, f"{path}.mark")
        rate = _get(atom, "rate", f"{path}.", float, required=True)
        r = float(np.linalg.norm(mark))
        if not 0 < r < 1:
            raise ConfigError(f"{path}.mark", "small marks must satisfy 0 < |x| < 1")
        if not rate > 0:
            raise ConfigError(f"{path}.rate", "must be > 0")
        atoms.append((tuple(mark), rate))
    large_rate = _get(table, "large_rate", "levy.", float, 0.0)
    if large_rate < 0:
        raise ConfigError("levy.large_rate", "must be >= 0")
    sampler_tab = _get(table, "large_sampler", "levy.", dict, {"kind": "fixed", "marks": [[1.0] * dim]})
    try:
        sampler = LargeJumpSampler.from_dict(sampler_tab)
        if sampler.kind == "fixed" and np.asarray(sampler.marks).shape[1] != dim:
            raise ValueError(f"marks must have {dim} components")
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError("levy.large_sampler", str(exc)) from None
    return LevyModel(dim, tuple(atoms), large_rate, sampler)


def _small_family(table: dict, dim: int, cutoff: int, p: float) -> SmallJumpFamily:
    kind = _get(table, "kind", "small_jump.", str, "zero")
    if kind == "zero":
        return ZeroSmallJump(dim)
    if kind == "clamped_linear":
        phi = parse_expansion(table.get("phi", {"preset": "basis"}), dim, cutoff, p, "small_jump.phi")
        clamp = _get(table, "clamp", "small_jump.", float, 1.0)
        if clamp <= 0:
            raise ConfigError("small_jump.clamp", "must be > 0")
        return ClampedLinearSmallJump(phi, _get(table, "slope", "small_jump.", float, 1.0),
                                      _get(table, "intercept", "small_jump.", float, 0.0), clamp, p)
    raise ConfigError("small_jump.kind", f"unknown family {kind!r}")


def _large_family(table: dict, dim: int, cutoff: int, p: float) -> LargeJumpFamily:
    kind = _get(table, "kind", "large_jump.", str, "identity")
    if kind == "identity":
        return IdentityLargeJump(dim)
    if kind == "zero":
        return ZeroLargeJump(dim)
    if kind in ("tanh", "linear"):
        phi = parse_expansion(table.get("phi", {"preset": "basis"}), dim, cutoff, p, "large_jump.phi")
        return TanhLargeJump(phi) if kind == "tanh" else LinearLargeJump(phi)
    raise ConfigError("large_jump.kind", f"unknown family {kind!r}")


def parse_config(data: dict) -> RunConfig:
    """Validate a parsed TOML document and build a :class:`RunConfig`."""
    d = _get(data, "dimension", "", int, required=True)
    if d < 1:
        raise ConfigError("dimension", "must be >= 1")
    p = _get(data, "regularity", "", float, required=True)
    if p <= 0:
        raise ConfigError("regularity", "must be > 0")
    N = _get(data, "cutoff", "", int, 16)
    if N < 0:
        raise ConfigError("cutoff", "must be >= 0")
    T = _get(data, "horizon", "", float, 1.0)
    if T <= 0:
        raise ConfigError("horizon", "must be > 0")
    M = _get(data, "steps", "", int, 1024)
    if M < 1:
        raise ConfigError("steps", "must be >= 1")
    seed = _get(data, "seed", "", int, 0)
    if seed < 0:
        raise ConfigError("seed", "must be >= 0")
    reps = _get(data, "replications", "", int, 1)
    if reps < 1:
        raise ConfigError("replications", "must be >= 1")
    kappa = _vector(data.get("initial_state", [0.0] * d), d, "initial_state")
    solver = _get(data, "solver", "", str, "euler")
    if solver not in SOLVERS:
        raise ConfigError("solver", f"must be one of {', '.join(SOLVERS)}")
    checks = _get(data, "checks", "", list, [])
    for i, name in enumerate(checks):
        if name not in CHECKS:
            raise ConfigError(f"checks[{i}]", f"unknown check {name!r}; known: {', '.join(CHECKS)}")

    opts = _get(data, "solver_options", "", dict, {})
    k_max = _get(opts, "k_max", "solver_options.", int, 50)
    tol = _get(opts, "tol", "solver_options.", float, 1e-10)
    if k_max < 1:
        raise ConfigError("solver_options.k_max", "must be >= 1")
    if tol < 0:
        raise ConfigError("solver_options.tol", "must be >= 0")
    levels = [float(v) for v in _get(opts, "m_levels", "solver_options.", list, [2, 4, 8, 16, 32])]
    if not levels or levels[0] <= 0 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError("solver_options.m_levels", "must be positive and strictly increasing")

    check_options = dict(CHECK_DEFAULTS)
    for key, value in _get(data, "check_options", "", dict, {}).items():
        if key not in CHECK_DEFAULTS:
            raise ConfigError(f"check_options.{key}", "unknown option")
        check_options[key] = value

    model = _levy(_get(data, "levy", "", dict, {}), d)
    cfg = RunConfig(d, p, N, T, M, seed, reps, kappa, model, solver, k_max=k_max, tol=tol,
                    m_levels=levels, checks=list(checks), check_options=check_options, raw=data)

    coeff_tab = _get(data, "coefficients", "", dict, {})
    kind = _get(coeff_tab, "kind", "coefficients.", str, "lifted")
    if kind == "synthetic":
        try:
            synthetic_from_dict(coeff_tab, d)
        except ValueError as exc:
            raise ConfigError("coefficients.drift", str(exc)) from None
        cfg.synthetic = dict(coeff_tab)
        return cfg
    if kind != "lifted":
        raise ConfigError("coefficients.kind", "must be 'lifted' or 'synthetic'")

    zero = {"preset": "zero"}
    drift_specs = _get(coeff_tab, "drift", "coefficients.", list, [zero] * d)
    if len(drift_specs) != d:
        raise ConfigError("coefficients.drift", f"expected {d} expansions")
    diff_specs = _get(coeff_tab, "diffusion", "coefficients.", list, [[zero] * d for _ in range(d)])
    if len(diff_specs) != d or any(not isinstance(r, list) or len(r) != d for r in diff_specs):
        raise ConfigError("coefficients.diffusion", f"expected a {d} x {d} array of expansions")
    drift = [parse_expansion(s, d, N, p, f"coefficients.drift[{i}]") for i, s in enumerate(drift_specs)]
    sigma = [[parse_expansion(s, d, N, p, f"coefficients.diffusion[{i}][{j}]") for j, s in enumerate(row)]
             for i, row in enumerate(diff_specs)]
    beta = _get(coeff_tab, "beta", "coefficients.", float, None)
    try:
        cfg.coefficients = DistributionCoefficientSet.build(sigma, drift, p, beta)
    except ValueError as exc:
        raise ConfigError("coefficients.beta", str(exc)) from None
    cfg.small_family = _small_family(_get(data, "small_jump", "", dict, {}), d, N, p)
    cfg.large_family = _large_family(_get(data, "large_jump", "", dict, {}), d, N, p)
    cfg.parameter = parse_expansion(data.get("parameter", {"preset": "delta0"}), d, N, -p, "parameter")
    return cfg


# ---------------------------------------------------------------------------
# Files and presets
# ---------------------------------------------------------------------------

def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("hslevy.presets").iterdir()
                  if p.name.endswith(".toml"))


def preset_text(name: str) -> str:
    target = resources.files("hslevy.presets") / f"{name}.toml"
    if not target.is_file():
        raise FileNotFoundError(f"no preset named {name!r}; available: {', '.join(preset_names())}")
    return target.read_text()


def loads_config(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<document>", str(exc)) from None
    return parse_config(data)


def load_config(source: str | Path) -> RunConfig:
    """Load a config file, or a packaged preset written as ``preset:NAME``."""
    source = str(source)
    if source.startswith("preset:"):
        return loads_config(preset_text(source[len("preset:"):]))
    return loads_config(Path(source).read_text())


def load_preset(name: str) -> RunConfig:
    return loads_config(preset_text(name))
