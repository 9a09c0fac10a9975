"""Pathwise solvers for the lifted jump SDE.

All solvers work on a frozen :class:`~hslevy.noise.NoiseRealization`: a fixed
grid, Brownian increments and event lists.  Integrands always use the state at
the left grid point.  A small or large event in ``(t_k, t_{k+1}]`` acts at the
end of step ``k``.  Within one step the order is drift and diffusion, then small
jumps, then large jumps (in time order).
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .coefficients import (CoefficientField, DistributionCoefficientSet, LargeJumpFamily,
                           LiftedField, SmallJumpFamily)
from .hermite import ExpansionVector, QuadratureRule, sobolev_norm
from .noise import LevyModel, NoiseRealization


# ---------------------------------------------------------------------------
# Problem and result types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SolveProblem:
    """Everything needed to solve one run except the noise.

    ``coeffs`` is either a :class:`DistributionCoefficientSet` (lifted with
    ``parameter`` through the two jump families) or a ready-made
    :class:`CoefficientField` such as a synthetic test double.  The parameter
    and initial state are fixed here, before any noise is drawn.
    """

    coeffs: DistributionCoefficientSet | CoefficientField
    small_family: SmallJumpFamily | None
    large_family: LargeJumpFamily | None
    parameter: ExpansionVector | None
    initial_state: np.ndarray
    model: LevyModel
    horizon: float
    steps: int
    rule: QuadratureRule | None = None
    _field: CoefficientField | None = field(default=None, repr=False)

    def __post_init__(self):
        kappa = np.atleast_1d(np.asarray(self.initial_state, dtype=float)).copy()
        kappa.setflags(write=False)
        object.__setattr__(self, "initial_state", kappa)
        if self.horizon <= 0 or self.steps < 1:
            raise ValueError("horizon must be > 0 and steps >= 1")
        if isinstance(self.coeffs, CoefficientField):
            fld = self.coeffs
        else:
            if self.parameter is None or self.small_family is None or self.large_family is None:
                raise ValueError("lifted problems need parameter, small_family and large_family")
            fld = LiftedField(self.coeffs, self.small_family, self.large_family,
                              self.parameter, self.rule)
        if fld.dim != len(kappa) or self.model.dim != len(kappa):
            raise ValueError(f"dimension mismatch: field {fld.dim}, model {self.model.dim}, "
                             f"initial state {len(kappa)}")
        object.__setattr__(self, "_field", fld)

    @property
    def field(self) -> CoefficientField:
        return self._field

    @property
    def dim(self) -> int:
        return len(self.initial_state)

    @property
    def dt(self) -> float:
        return self.horizon / self.steps


@dataclass
class ExplosionInfo:
    levels: list
    thetas: list              # first grid time with |X^m| >= m (inf if never)
    crossing_estimates: list  # interpolated, step-extrapolated crossing times
    eta: float                # extrapolated limit of the crossing times
    theta_last: float
    exploded: bool

    def to_dict(self) -> dict:
        return {
            "levels": list(self.levels),
            "thetas": [_json_float(t) for t in self.thetas],
            "crossing_estimates": [_json_float(t) for t in self.crossing_estimates],
            "eta": _json_float(self.eta),
            "theta_last": _json_float(self.theta_last),
            "exploded": self.exploded,
        }


def _json_float(x):
    x = float(x)
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")


@dataclass
class PathRecord:
    """A right-continuous path on the grid; ``inf`` rows stand for the point at infinity."""

    times: np.ndarray
    states: np.ndarray
    large_jump_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    large_jump_marks: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    large_jump_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    pre_jump_states: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    post_jump_states: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    explosion: ExplosionInfo | None = None
    numerical_failure: bool = False
    seed: int = 0
    replication: int = 0

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def sup_distance(self, other: "PathRecord") -> float:
        return float(np.max(np.abs(self.states - other.states)))

    def to_csv(self) -> str:
        jump_rows = set(self.large_jump_rows.tolist())
        buf = io.StringIO()
        buf.write(",".join(["t"] + [f"U_{i + 1}" for i in range(self.dim)] + ["is_large_jump"]) + "\n")
        for k, (t, row) in enumerate(zip(self.times.tolist(), self.states.tolist())):
            cells = [repr(t)] + [repr(v) for v in row] + ["1" if k in jump_rows else "0"]
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PathRecord":
        lines = text.strip().splitlines()
        rows = [line.split(",") for line in lines[1:]]
        data = np.array([[float(c) for c in r[:-1]] for r in rows])
        flags = np.array([int(r[-1]) for r in rows])
        return cls(times=data[:, 0], states=data[:, 1:], large_jump_rows=np.flatnonzero(flags))

    def summary(self) -> dict:
        out = {
            "seed": self.seed,
            "replication": self.replication,
            "numerical_failure": self.numerical_failure,
            "final_state": [_json_float(v) for v in self.states[-1]],
            "large_jumps": [{"time": float(t), "mark": m.tolist()}
                            for t, m in zip(self.large_jump_times, self.large_jump_marks)],
        }
        if self.explosion is not None:
            out["explosion"] = self.explosion.to_dict()
        return out


@dataclass
class PicardTrace:
    """``errors[k] = sup_t |U^(k+1) - U^(k)|`` on the grid."""

    errors: list
    converged: bool
    tol: float

    @property
    def iterations(self) -> int:
        return len(self.errors)

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "converged": self.converged, "tol": self.tol,
                "errors": [_json_float(e) for e in self.errors]}


# ---------------------------------------------------------------------------
# Shared Euler increment
# ---------------------------------------------------------------------------

def _increment(fld: CoefficientField, model: LevyModel, U, dt, dB, counts):
    """Left-point increment for every row of ``U`` (shape ``(P, d)``).

    ``dt`` is ``(P,)``, ``dB`` is ``(P, d)`` and ``counts`` is ``(P, A)``.
    Each row depends only on that row's inputs, so batching never changes a
    result.
    """
    b, s, F = fld.coefficients(U, model.small_marks)
    inc = b * dt[:, None] + (s * dB[:, None, :]).sum(axis=2)
    if F.shape[1]:
        weights = counts - model.small_rates[None, :] * dt[:, None]
        inc = inc + (weights[:, :, None] * F).sum(axis=1)
    return inc


def _stack_noise(noises: Sequence[NoiseRealization], n_steps: int):
    dt = noises[0].dt[:n_steps]
    dB = np.stack([w.brownian_increments[:n_steps] for w in noises])
    counts = np.stack([w.small_counts()[:n_steps] for w in noises])
    return dt, dB, counts


def _euler_core(fld: CoefficientField, model: LevyModel, start: np.ndarray,
                noises: Sequence[NoiseRealization], n_steps: int | None = None):
    """Explicit Euler for a batch of realisations sharing one grid.

    Returns ``(states (R, n+1, d), failed (R,))``.  A row whose state stops
    being finite is frozen at NaN from that step on and flagged.
    """
    n = noises[0].n_steps if n_steps is None else n_steps
    R = len(noises)
    dt, dB, counts = _stack_noise(noises, n)
    U = np.array(np.broadcast_to(start, (R, fld.dim)), dtype=float)
    out = np.empty((R, n + 1, fld.dim))
    out[:, 0] = U
    alive = np.isfinite(U).all(axis=1)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            if alive.all():
                U = U + _increment(fld, model, U, np.full(R, dt[k]), dB[:, k], counts[:, k])
            elif alive.any():
                idx = np.flatnonzero(alive)
                U = U.copy()
                U[idx] = U[idx] + _increment(fld, model, U[idx], np.full(len(idx), dt[k]),
                                             dB[idx, k], counts[idx, k])
            ok = np.isfinite(U).all(axis=1)
            U[~ok] = np.nan
            alive &= ok
            out[:, k + 1] = U
    return out, ~alive


def _check_noise(prob: SolveProblem, noise: NoiseRealization):
    if noise.dim != prob.dim:
        raise ValueError(f"noise dimension {noise.dim} != problem dimension {prob.dim}")
    if noise.n_atoms != len(prob.model.small_atoms):
        raise ValueError("noise was not sampled from the problem's Levy model")


def _record(noise: NoiseRealization, states: np.ndarray, failed: bool) -> PathRecord:
    d = states.shape[1]
    return PathRecord(times=noise.grid.copy(), states=states,
                      large_jump_marks=np.zeros((0, d)), pre_jump_states=np.zeros((0, d)),
                      post_jump_states=np.zeros((0, d)), numerical_failure=bool(failed),
                      seed=noise.seed, replication=noise.replication)


# ---------------------------------------------------------------------------
# Reduced equation: Euler and Picard
# ---------------------------------------------------------------------------

def solve_reduced_euler(prob: SolveProblem, noise: NoiseRealization) -> PathRecord:
    """Euler path of the reduced equation; large events are ignored."""
    _check_noise(prob, noise)
    states, failed = _euler_core(prob.field, prob.model, prob.initial_state, [noise])
    return _record(noise, states[0], failed[0])


def solve_reduced_euler_batch(prob: SolveProblem, noises: Sequence[NoiseRealization]) -> list[PathRecord]:
    """Same paths as calling :func:`solve_reduced_euler` per realisation, in one pass."""
    for w in noises:
        _check_noise(prob, w)
    states, failed = _euler_core(prob.field, prob.model, prob.initial_state, noises)
    return [_record(w, s, f) for w, s, f in zip(noises, states, failed)]


def picard_batch(prob: SolveProblem, noises: Sequence[NoiseRealization], k_max: int = 50,
                 tol: float = 1e-10) -> list[tuple[PathRecord, PicardTrace]]:
    """Discrete Picard iteration for several realisations at once.

    Iterate ``k + 1`` is ``kappa`` plus the running sum of Euler increments
    evaluated along iterate ``k``.  The running sum adds in the same order as
    the Euler loop, so the fixed point is exactly the Euler path.
    """
    for w in noises:
        _check_noise(prob, w)
    fld, model = prob.field, prob.model
    R, n, d = len(noises), noises[0].n_steps, prob.dim
    dt, dB, counts = _stack_noise(noises, n)
    flat_dt = np.broadcast_to(dt, (R, n)).reshape(-1)
    flat_dB = dB.reshape(-1, d)
    flat_counts = counts.reshape(R * n, -1)

    current = np.array(np.broadcast_to(prob.initial_state, (R, n + 1, d)))
    errors = [[] for _ in range(R)]
    active = np.ones(R, dtype=bool)
    converged = np.zeros(R, dtype=bool)
    for _ in range(k_max):
        idx = np.flatnonzero(active)
        if not len(idx):
            break
        rows = (idx[:, None] * n + np.arange(n)[None, :]).reshape(-1)
        with np.errstate(over="ignore", invalid="ignore"):
            inc = _increment(fld, model, current[idx, :n].reshape(-1, d), flat_dt[rows],
                             flat_dB[rows], flat_counts[rows]).reshape(len(idx), n, d)
            nxt = np.empty((len(idx), n + 1, d))
            nxt[:, 0] = prob.initial_state
            nxt[:, 1:] = inc
            nxt = np.cumsum(nxt, axis=1)
            err = np.max(np.abs(nxt - current[idx]), axis=(1, 2))
        current[idx] = nxt
        for j, e in zip(idx, err):
            errors[j].append(float(e))
            if not math.isfinite(e):
                active[j] = False
            elif e <= tol:
                active[j] = False
                converged[j] = True
    out = []
    for j, w in enumerate(noises):
        failed = not np.isfinite(current[j]).all()
        out.append((_record(w, current[j], failed), PicardTrace(errors[j], bool(converged[j]), tol)))
    return out


def picard_solve(prob: SolveProblem, noise: NoiseRealization, k_max: int = 50,
                 tol: float = 1e-10) -> tuple[PathRecord, PicardTrace]:
    """Picard iteration started from the constant path ``kappa``.

    Stops when ``e_k <= tol`` or after ``k_max`` iterates; the last iterate is
    returned either way, with ``converged`` telling which.
    """
    return picard_batch(prob, [noise], k_max, tol)[0]


# ---------------------------------------------------------------------------
# Full equation by interlacing
# ---------------------------------------------------------------------------

def _interlace(fld: CoefficientField, prob: SolveProblem, noise: NoiseRealization) -> PathRecord:
    _check_noise(prob, noise)
    bins = noise.large_bins()
    if not len(bins):
        states, failed = _euler_core(fld, prob.model, prob.initial_state, [noise])
        return _record(noise, states[0], failed[0])

    times, marks = noise.large_events
    n, d = noise.n_steps, prob.dim
    states = np.empty((n + 1, d))
    pre, post = [], []
    start_row, start_state, failed = 0, prob.initial_state, False
    view = noise
    for target in [*np.unique(bins).tolist(), None]:
        stop_row = n if target is None else target + 1
        seg, seg_failed = _euler_core(fld, prob.model, start_state, [view], stop_row - start_row)
        states[start_row:stop_row + 1] = seg[0]
        failed |= bool(seg_failed[0])
        if target is None:
            break
        U = states[stop_row].copy()
        with np.errstate(over="ignore", invalid="ignore"):
            for i in np.flatnonzero(bins == target):
                before = U.copy()
                U = U + fld.large_jump(U[None, :], marks[i])[0]
                pre.append(before)
                post.append(U.copy())
        if not np.isfinite(U).all():
            U[:] = np.nan
            failed = True
        states[stop_row] = U
        start_row, start_state = stop_row, U
        if stop_row < n:
            view = noise.shift_to_row(stop_row)
    rec = _record(noise, states, failed)
    rec.large_jump_times = times.copy()
    rec.large_jump_marks = marks.copy()
    rec.large_jump_rows = bins + 1
    rec.pre_jump_states = np.array(pre).reshape(-1, d)
    rec.post_jump_states = np.array(post).reshape(-1, d)
    return rec


def interlace_solve(prob: SolveProblem, noise: NoiseRealization) -> PathRecord:
    """Full equation: reduced Euler between large events, jump map at each event.

    Each segment after a large event is solved on ``noise.shift_view`` of the
    grid point that carries the event, started from the post-jump state.
    With no large events this is literally :func:`solve_reduced_euler`.
    """
    return _interlace(prob.field, prob, noise)


# ---------------------------------------------------------------------------
# Truncation, localisation and explosion
# ---------------------------------------------------------------------------

class TruncatedField(CoefficientField):
    """Radial cutoff of drift, diffusion and small jumps; large jumps untouched.

    ``h_R(z) = h(z)`` for ``|z| <= R``, ``(2R - |z|)/R * h(R z/|z|)`` for
    ``R < |z| < 2R`` and ``0`` beyond ``2R``.  Rows inside the ball are passed
    to the base field unchanged, so they match it bit for bit.
    """

    def __init__(self, base: CoefficientField, radius: float):
        if not radius > 0:
            raise ValueError("truncation radius must be > 0")
        self.base = base
        self.radius = float(radius)
        self.dim = base.dim
        self.synthetic = base.synthetic

    def _prepare(self, Z):
        Z = np.asarray(Z, dtype=float).reshape(-1, self.dim)
        r = np.linalg.norm(Z, axis=1)
        outside = r > self.radius
        points = Z.copy()
        if outside.any():
            points[outside] = Z[outside] * (self.radius / r[outside])[:, None]
        factor = np.clip((2 * self.radius - r) / self.radius, 0.0, 1.0)
        return points, outside, factor

    def coefficients(self, Z, marks):
        points, outside, factor = self._prepare(Z)
        b, s, F = self.base.coefficients(points, marks)
        if outside.any():
            f = factor[outside]
            b[outside] = b[outside] * f[:, None]
            s[outside] = s[outside] * f[:, None, None]
            F[outside] = F[outside] * f[:, None, None]
        return b, s, F

    def large_jump(self, Z, mark):
        return self.base.large_jump(Z, mark)


def truncate_coeffs(fld: CoefficientField, radius: float) -> TruncatedField:
    return TruncatedField(fld, radius)


def localize_parameter(parameter: ExpansionVector, bound: float, regularity: float) -> ExpansionVector:
    """``parameter`` if ``||parameter||_{-p} <= bound``, else the zero vector."""
    if not bound > 0:
        raise ValueError("bound must be > 0")
    if sobolev_norm(parameter, -abs(regularity)) <= bound:
        return parameter
    return ExpansionVector.zeros(parameter.dim, parameter.cutoff, parameter.regularity)


def localize_initial(initial_state, bound: float) -> np.ndarray:
    """``initial_state`` if ``|initial_state| <= bound`` (closed ball), else 0."""
    if not bound > 0:
        raise ValueError("bound must be > 0")
    kappa = np.atleast_1d(np.asarray(initial_state, dtype=float))
    return kappa if np.linalg.norm(kappa) <= bound else np.zeros_like(kappa)


class LevelConsistencyError(RuntimeError):
    """Two truncation levels disagree inside the smaller ball (a solver bug)."""


def _first_exit(states: np.ndarray, radius: float) -> int | None:
    norms = np.linalg.norm(states, axis=1)
    hit = np.flatnonzero(~(norms < radius))
    return int(hit[0]) if len(hit) else None


def _interpolated_crossing(rec: PathRecord, radius: float) -> float:
    """Exit time from the ball, linearly interpolated inside the crossing step."""
    j = _first_exit(rec.states, radius)
    if j is None:
        return math.inf
    if j == 0:
        return 0.0
    t0, t1 = rec.times[j - 1], rec.times[j]
    r0, r1 = np.linalg.norm(rec.states[j - 1]), np.linalg.norm(rec.states[j])
    if not math.isfinite(r1) or r1 <= r0 or (j in set(rec.large_jump_rows.tolist())):
        return float(t1)
    return float(t0 + (t1 - t0) * (radius - r0) / (r1 - r0))


def _aitken(seq: Sequence[float]) -> tuple[float, float]:
    """Aitken limit of the last three terms and the ratio of their increments."""
    a, b, c = seq[-3:]
    d1, d2 = b - a, c - b
    if d1 == 0 or d2 == d1:
        return c, math.inf if d1 == 0 and d2 != 0 else 0.0
    ratio = d2 / d1
    if not 0 <= ratio < 1:
        return c, ratio
    return c - d2 * d2 / (d2 - d1), ratio


def solve_local(prob: SolveProblem, noise: NoiseRealization, m_levels: Sequence[float]) -> PathRecord:
    """Locally Lipschitz problems through a ladder of truncation radii.

    For each radius ``m`` the truncated problem is solved by interlacing and
    ``theta_m`` is its first grid time with ``|X^m| >= m``.  Consecutive levels
    must agree exactly before ``theta_m``.  The blow-up time is estimated from
    the crossing times: each is interpolated inside its step, extrapolated in
    the step size against the same noise on a grid twice as coarse, and the
    resulting sequence is Aitken-accelerated in ``m``.  The path is flagged as
    exploded when every level is reached well before the horizon and the
    crossing times converge.  Rows at or after the estimated blow-up time
    are set to ``inf``.
    """
    levels = [float(m) for m in m_levels]
    if not levels or any(b <= a for a, b in zip(levels, levels[1:])) or levels[0] <= 0:
        raise ValueError("m_levels must be positive and strictly increasing")
    records, thetas, crossings = [], [], []
    coarse = None
    if noise.offset == 0.0 and noise.steps % 2 == 0 and noise.steps >= 4:
        coarse = noise.coarsen(2)
    for m in levels:
        truncated = TruncatedField(prob.field, m)
        rec = _interlace(truncated, prob, noise)
        j = _first_exit(rec.states, m)
        thetas.append(math.inf if j is None else float(rec.times[j]))
        fine = _interpolated_crossing(rec, m)
        if coarse is not None and math.isfinite(fine):
            rough = _interpolated_crossing(_interlace(truncated, prob, coarse), m)
            crossings.append(2 * fine - rough if math.isfinite(rough) else fine)
        else:
            crossings.append(fine)
        records.append(rec)

    for (m, rec_m, th), rec_n in zip(zip(levels, records, thetas), records[1:]):
        j = len(rec_m.times) if not math.isfinite(th) else int(np.searchsorted(rec_m.times, th))
        if not np.array_equal(rec_m.states[:j], rec_n.states[:j]):
            raise LevelConsistencyError(f"levels {m} and its successor differ before theta_{m}")

    top = records[-1]
    dt = prob.horizon / noise.steps
    horizon = float(noise.grid[-1])
    all_reached = all(math.isfinite(t) for t in thetas)
    if all_reached and len(crossings) >= 3:
        eta, ratio = _aitken(crossings)
    elif all_reached:
        eta, ratio = crossings[-1], math.inf
    else:
        eta, ratio = math.inf, math.inf
    exploded = bool(all_reached and thetas[-1] < horizon - 2 * dt and ratio < 1 and eta < horizon)

    states = top.states.copy()
    if exploded:
        states[top.times >= eta] = np.inf
    out = PathRecord(times=top.times, states=states, large_jump_times=top.large_jump_times,
                     large_jump_marks=top.large_jump_marks, large_jump_rows=top.large_jump_rows,
                     pre_jump_states=top.pre_jump_states, post_jump_states=top.post_jump_states,
                     numerical_failure=top.numerical_failure, seed=noise.seed,
                     replication=noise.replication)
    out.explosion = ExplosionInfo(levels=levels, thetas=thetas, crossing_estimates=crossings,
                                  eta=float(eta) if exploded else math.inf,
                                  theta_last=thetas[-1], exploded=exploded)
    return out
