"""Runnable checks of the quantitative estimates, with machine-readable reports.

The module also carries a second, independent integrator for the full
equation (:func:`inline_full_solve`).  It shares no stepping code with
:mod:`hslevy.engine`: small events are applied one at a time, event bins are
computed from the event times directly and large jumps are applied inline.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .coefficients import (CoefficientField, DistributionCoefficientSet, HypothesisReport,
                           SmallJumpFamily, lipschitz_ratio)
from .engine import (PathRecord, PicardTrace, SolveProblem, TruncatedField, _json_float,
                     interlace_solve, picard_batch, solve_reduced_euler)
from .hermite import ExpansionVector, sobolev_norm
from .noise import LevyModel, NoiseRealization, compensator_integral


@dataclass
class CheckReport:
    check_id: str
    passed: bool
    tolerance: float
    scalars: dict = field(default_factory=dict)
    inputs_digest: str = ""
    negative_control: bool = False
    report_only: bool = False

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, dict):
                return {str(k): clean(x) for k, x in v.items()}
            if isinstance(v, (list, tuple, np.ndarray)):
                return [clean(x) for x in v]
            if isinstance(v, (bool, np.bool_)):
                return bool(v)
            if isinstance(v, (int, np.integer)):
                return int(v)
            if isinstance(v, (float, np.floating)):
                return _json_float(v)
            return v
        return clean({"check_id": self.check_id, "passed": self.passed, "tolerance": self.tolerance,
                      "scalars": self.scalars, "inputs_digest": self.inputs_digest,
                      "negative_control": self.negative_control, "report_only": self.report_only})

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def digest(*parts) -> str:
    """Short SHA-256 of a JSON rendering of ``parts`` (arrays as lists)."""
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if hasattr(o, "to_dict"):
            return o.to_dict()
        return repr(o)
    text = json.dumps(parts, default=default, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Independent full-equation integrator
# ---------------------------------------------------------------------------

def _step_of(times: np.ndarray, horizon: float, steps: int) -> np.ndarray:
    """Step index ``k`` with ``t in (t_k, t_{k+1}]``."""
    k = np.ceil(times * steps / horizon).astype(np.int64) - 1
    return np.clip(k, 0, steps - 1)


def inline_full_solve(fld: CoefficientField, model: LevyModel, initial_state,
                      noises: Sequence[NoiseRealization], include_large: bool = True) -> list[PathRecord]:
    """Euler scheme for the full equation with every jump applied in place.

    Works on root realisations sharing one grid, batched over replications.
    """
    n = noises[0].steps
    horizon = noises[0].horizon
    d = fld.dim
    R = len(noises)
    dt = horizon / n
    rates = model.small_rates
    marks_table = model.small_marks

    small_at: dict[int, list] = {}
    large_at: dict[int, list] = {}
    for r, w in enumerate(noises):
        if w.offset != 0.0 or w.steps != n:
            raise ValueError("inline integrator needs root realisations on a common grid")
        for k, a in zip(_step_of(w.small_times, horizon, n), w.small_atoms):
            small_at.setdefault(int(k), []).append((r, int(a)))
        if include_large:
            for i, k in enumerate(_step_of(w.large_times, horizon, n)):
                large_at.setdefault(int(k), []).append((r, i))

    U = np.tile(np.asarray(initial_state, dtype=float), (R, 1))
    path = np.empty((R, n + 1, d))
    path[:, 0] = U
    dB = np.stack([w.brownian for w in noises])
    pre = [[] for _ in range(R)]
    post = [[] for _ in range(R)]
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            b, s, F = fld.coefficients(U, marks_table)
            nxt = U + dt * b + np.einsum("rij,rj->ri", s, dB[:, k])
            if len(rates):
                nxt = nxt - dt * np.einsum("a,rad->rd", rates, F)
            for r, a in small_at.get(k, ()):
                nxt[r] = nxt[r] + F[r, a]
            for r, i in large_at.get(k, ()):
                before = nxt[r].copy()
                nxt[r] = before + fld.large_jump(before[None, :], noises[r].large_marks[i])[0]
                pre[r].append(before)
                post[r].append(nxt[r].copy())
            U = nxt
            path[:, k + 1] = U
    grid = noises[0].grid
    out = []
    for r, w in enumerate(noises):
        rec = PathRecord(times=grid.copy(), states=path[r],
                         numerical_failure=not np.isfinite(path[r]).all(),
                         seed=w.seed, replication=w.replication)
        rec.pre_jump_states = np.array(pre[r]).reshape(-1, d)
        rec.post_jump_states = np.array(post[r]).reshape(-1, d)
        if include_large:
            rec.large_jump_times = w.large_times.copy()
            rec.large_jump_marks = w.large_marks.copy()
            rec.large_jump_rows = _step_of(w.large_times, horizon, n) + 1
        out.append(rec)
    return out


# ---------------------------------------------------------------------------
# Growth bound
# ---------------------------------------------------------------------------

def _ball(rng, dim, radius, count):
    v = rng.standard_normal((count, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * (radius * rng.random((count, 1)) ** (1.0 / dim))


def growth_ratios(fld: CoefficientField, model: LevyModel, Z: np.ndarray) -> np.ndarray:
    b, s, F = fld.coefficients(Z, model.small_marks)
    jump = (np.sum(F ** 2, axis=2) * model.small_rates[None, :]).sum(axis=1) if F.shape[1] else 0.0
    total = np.sum(b ** 2, axis=1) + np.sum(s ** 2, axis=(1, 2)) + jump
    return total / (1.0 + np.sum(Z ** 2, axis=1))


def analytic_growth_bound(coeffs: DistributionCoefficientSet, fam_small: SmallJumpFamily,
                          model: LevyModel, parameter: ExpansionVector) -> float:
    """Upper bound for the growth constant of lifted coefficients.

    Pairings satisfy ``|<a, tau_z y>| <= ||a||_0 ||y||_0`` because translation
    is an L2 isometry (and its truncation a contraction).  Jumps use
    ``|F(y,x)| <= |F(0,x)| + C_x ||y||_{-p-1/2}`` with
    ``||y||_{-p-1/2} <= ||y||_0``.  The small factor ``1 + 1e-9`` absorbs
    quadrature error in the translation.
    """
    y0 = sobolev_norm(parameter, 0.0)
    pair = sum(sobolev_norm(e, 0.0) ** 2 for e in coeffs.entries()) * y0 ** 2
    zero = ExpansionVector.zeros(coeffs.dim, coeffs.cutoff)
    jump = compensator_integral(
        model, lambda x: (np.linalg.norm(fam_small(zero, x)) + fam_small.lipschitz_profile(x) * y0) ** 2)
    return float((pair + jump) * (1 + 1e-9))


def check_growth_bound(fld: CoefficientField, model: LevyModel, radius: float, samples: int = 4000,
                       seed: int = 0, stability: float = 0.2,
                       negative_control: bool = False) -> CheckReport:
    """Fit the smallest ``D`` with ``|b|^2 + |sigma|^2 + int|F|^2 <= D (1 + |z|^2)``.

    Passes when ``D`` is finite and moves by less than ``stability`` (relative)
    both from radius ``r/2`` to ``r`` and when the sample count doubles.
    """
    rng = np.random.default_rng(seed)
    d = fld.dim
    D_half = float(growth_ratios(fld, model, _ball(rng, d, radius / 2, samples)).max())
    D = float(growth_ratios(fld, model, _ball(rng, d, radius, samples)).max())
    D_double = float(growth_ratios(fld, model, _ball(rng, d, radius, 2 * samples)).max())

    def close(a, b):
        top = max(abs(a), abs(b))
        return top == 0 or abs(a - b) <= stability * top

    passed = all(math.isfinite(v) for v in (D_half, D, D_double)) and close(D_half, D) and close(D, D_double)
    return CheckReport("growth", bool(passed), stability,
                       {"D": D, "D_half_radius": D_half, "D_double_samples": D_double,
                        "radius": radius, "samples": samples},
                       digest("growth", radius, samples, seed, model), negative_control)


# ---------------------------------------------------------------------------
# Uniqueness
# ---------------------------------------------------------------------------

ROUNDOFF_FLOOR = 1e-12


def check_uniqueness(prob: SolveProblem, noises: Sequence[NoiseRealization], M_list: Sequence[int],
                     tolerance: float = 1e-3, oracle_noises: Sequence[NoiseRealization] | None = None,
                     k_max: int = 50, tol: float = 1e-10,
                     negative_control: bool = False) -> CheckReport:
    """Picard paths on each grid in ``M_list`` against the inline integrator.

    ``noises`` are root realisations on a reference grid that every ``M``
    divides.  Picard runs on the coarsened noise; the inline integrator runs
    once on the reference grid, and the two are compared at the coarse grid
    times.  Distances are averaged over realisations.  The check passes when
    the averages decrease strictly with ``M`` (ties allowed below
    ``ROUNDOFF_FLOOR``) and the last is at most ``tolerance``.  ``oracle_noises`` replaces the noise fed to the inline
    integrator (used for the mismatched-noise control).
    """
    ref_steps = noises[0].steps
    if any(ref_steps % M for M in M_list):
        raise ValueError("every M must divide the reference step count")
    oracle = inline_full_solve(prob.field, prob.model, prob.initial_state,
                               noises if oracle_noises is None else oracle_noises, include_large=False)
    distances, iterations, all_converged = [], [], True
    for M in M_list:
        factor = ref_steps // M
        coarse = [w.coarsen(factor) for w in noises]
        results = picard_batch(prob, coarse, k_max=k_max, tol=tol)
        per_path = []
        for (rec, trace), ref in zip(results, oracle):
            per_path.append(float(np.max(np.abs(rec.states - ref.states[::factor]))))
            iterations.append(trace.iterations)
            all_converged &= trace.converged
        distances.append(float(np.mean(per_path)))
    # distances at round-off level count as ties (exactly solvable problems)
    monotone = all(b < a or max(a, b) <= ROUNDOFF_FLOOR for a, b in zip(distances, distances[1:]))
    finite = all(math.isfinite(v) for v in distances)
    passed = bool(finite and monotone and distances[-1] <= tolerance)
    return CheckReport("uniqueness", passed, tolerance,
                       {"M": list(M_list), "mean_sup_distance": distances, "monotone": monotone,
                        "reference_steps": ref_steps, "replications": len(noises),
                        "max_picard_iterations": max(iterations), "picard_converged": bool(all_converged)},
                       digest("uniqueness", list(M_list), [(w.seed, w.replication) for w in noises]),
                       negative_control)


# ---------------------------------------------------------------------------
# Picard decay
# ---------------------------------------------------------------------------

def picard_rate_constant(hyp: HypothesisReport, horizon: float) -> float:
    """``C~ = 3 (T + 8) C(K)``: the Gronwall constant of the Picard estimate."""
    return 3.0 * (horizon + 8.0) * hyp.C_K


def check_picard_decay(traces: PicardTrace | Sequence[PicardTrace], horizon: float,
                       rate_constant: float) -> CheckReport:
    """``mean e_k^2 <= A (C~ T)^(k+1) / (k+1)!`` for every ``k >= 1``, ``A`` fitted at ``k = 1``.

    The estimate bounds an expectation, so a single trace gives a report
    only; several traces are averaged before the comparison.  Iterates past a
    trace's last one count as zero.
    """
    single = isinstance(traces, PicardTrace)
    traces = [traces] if single else list(traces)
    K = max(t.iterations for t in traces)
    sq = np.zeros((len(traces), K))
    for i, t in enumerate(traces):
        sq[i, :t.iterations] = np.square(t.errors)
    mean_sq = sq.mean(axis=0)
    x = rate_constant * horizon
    envelope = np.array([x ** (k + 1) / math.factorial(k + 1) for k in range(K)])
    A = float(mean_sq[1] / envelope[1]) if K > 1 and envelope[1] > 0 else 0.0
    ks = range(1, K)
    slack = 1e-12
    violations = [k for k in ks if mean_sq[k] > A * envelope[k] * (1 + slack)]
    finite = bool(np.all(np.isfinite(mean_sq)))
    passed = finite and not violations
    return CheckReport("picard_decay", bool(passed), slack,
                       {"C_tilde": rate_constant, "A": A, "mean_e2": mean_sq.tolist(),
                        "envelope": (A * envelope).tolist(), "violations": violations,
                        "traces": len(traces)},
                       digest("picard_decay", horizon, rate_constant, mean_sq),
                       report_only=single)


# ---------------------------------------------------------------------------
# Interlacing
# ---------------------------------------------------------------------------

def path_lipschitz_estimate(rec: PathRecord) -> float:
    """Largest ``|U_{k+1} - U_k| / dt`` over steps that carry no large jump."""
    steps = np.linalg.norm(np.diff(rec.states, axis=0), axis=1) / np.diff(rec.times)
    keep = np.ones(len(steps), dtype=bool)
    keep[np.asarray(rec.large_jump_rows, dtype=np.int64) - 1] = False
    return float(steps[keep].max()) if keep.any() else 0.0


def check_interlace(prob: SolveProblem, noises: Sequence[NoiseRealization],
                    jump_tolerance: float = 1e-12) -> CheckReport:
    """Interlaced paths against the inline integrator on identical noise.

    Passes when each sup-distance is at most ``5 dt L`` (``L`` the path's
    Lipschitz estimate) and each interlaced post-jump state equals the inline
    jump map applied to the interlaced pre-jump state within
    ``jump_tolerance``.  Realisations without large events must also match
    the reduced Euler path bit for bit.
    """
    oracle = inline_full_solve(prob.field, prob.model, prob.initial_state, noises)
    distances, bounds, jump_errors, degenerate_ok = [], [], [], True
    for w, ref in zip(noises, oracle):
        rec = interlace_solve(prob, w)
        dt = float(np.max(w.dt))
        distances.append(rec.sup_distance(ref))
        bounds.append(5 * dt * path_lipschitz_estimate(rec))
        times, marks = w.large_events
        for before, after, mark in zip(rec.pre_jump_states, rec.post_jump_states, marks):
            expected = before + prob.field.large_jump(before[None, :], mark)[0]
            jump_errors.append(float(np.max(np.abs(after - expected))))
        if not len(times):
            degenerate_ok &= bool(np.array_equal(rec.states, solve_reduced_euler(prob, w).states))
    within = [dist <= bound for dist, bound in zip(distances, bounds)]
    max_jump = max(jump_errors, default=0.0)
    passed = all(within) and max_jump <= jump_tolerance and degenerate_ok
    return CheckReport("interlace", bool(passed), jump_tolerance,
                       {"sup_distance": distances, "bound": bounds, "max_jump_error": max_jump,
                        "jumps": len(jump_errors), "no_jump_runs_bit_exact": degenerate_ok},
                       digest("interlace", [(w.seed, w.replication) for w in noises]))


# ---------------------------------------------------------------------------
# Truncation
# ---------------------------------------------------------------------------

def _shell_pairs(rng, dim, R, count):
    """``|z1| <= R <= |z2| <= 2R``."""
    z1 = _ball(rng, dim, R, count)
    v = rng.standard_normal((count, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    z2 = v * rng.uniform(R, 2 * R, (count, 1))
    return z1, z2


def check_truncation(fld: CoefficientField, model: LevyModel, radius: float,
                     hyp: HypothesisReport, samples: int = 100_000, seed: int = 0) -> CheckReport:
    """Cutoff identities and the global Lipschitz bound of the truncated jumps.

    ``hyp`` must contain the small-jump constant ``C(K, R)`` on the ball of
    radius ``radius``.  Lipschitz constants are squared ratios, as in the
    hypothesis report.
    """
    if radius not in hyp.C_F_n:
        raise ValueError(f"hypothesis report has no constants for radius {radius}")
    rng = np.random.default_rng(seed)
    d, R = fld.dim, float(radius)
    z1, z2 = _shell_pairs(rng, d, R, samples)
    r2 = np.linalg.norm(z2, axis=1)
    dist2 = np.sum((z1 - z2) ** 2, axis=1)
    proj = z1 - R * z2 / r2[:, None]
    first = int(np.sum(np.sum(proj ** 2, axis=1) > dist2))
    second = int(np.sum((r2 - R) ** 2 > dist2))

    truncated = TruncatedField(fld, R)
    inside = _ball(rng, d, R, min(samples, 20_000))
    inside[0] = 0.0
    inside[1] = R * np.eye(d)[0]
    marks = model.small_marks
    identical = all(np.array_equal(a, b) for a, b in zip(truncated.coefficients(inside, marks),
                                                         fld.coefficients(inside, marks)))

    bound = 6 * hyp.C_F_n[radius] + 4 * hyp.alpha_K / R ** 2
    n_pairs = min(samples, 20_000)
    a = _ball(rng, d, 3 * R, n_pairs)
    half = n_pairs // 2
    near = rng.standard_normal((half, d))
    near *= (10.0 ** rng.uniform(-3, 0, (half, 1))) * R / np.linalg.norm(near, axis=1, keepdims=True)
    b = np.concatenate([a[:half] + near, _ball(rng, d, 3 * R, n_pairs - half)])
    _, jump_ratio = lipschitz_ratio(truncated, model, a, b)
    empirical = float(jump_ratio.max())
    passed = first == 0 and second == 0 and identical and empirical <= bound
    return CheckReport("truncation", bool(passed), 0.0,
                       {"pairs": samples, "projection_violations": first, "radial_violations": second,
                        "identical_inside": identical, "empirical_lipschitz_F": empirical,
                        "bound": bound, "C_K_R": hyp.C_F_n[radius], "alpha_K": hyp.alpha_K,
                        "radius": R},
                       digest("truncation", R, samples, seed, model))
