"""SDE coefficients lifted from distribution-valued data.

The drift and diffusion of the state equation are pairings of fixed
Hermite-Sobolev elements with the translated parameter::

    drift_i(z; y)      = <b_i,      tau_z y>
    diffusion_ij(z; y) = <sigma_ij, tau_z y>

and the jump coefficients are user families evaluated at ``tau_z y``.
``lift_*`` functions follow that definition literally (translate, then pair);
:class:`LiftedField` evaluates the same quantities in batches for the solvers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hermite import (ExpansionVector, LiftedPairings, QuadratureRule, dual_pair,
                      gradient, sobolev_norm, translate)
from .noise import LevyModel, compensator_integral


# ---------------------------------------------------------------------------
# Drift / diffusion data
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DistributionCoefficientSet:
    """``sigma`` (d x d) and ``b`` (d) as expansions in ``S_p``, with bound ``beta``."""

    sigma: tuple
    b: tuple
    beta: float
    regularity: float

    def __post_init__(self):
        sigma = tuple(tuple(row) for row in self.sigma)
        b = tuple(self.b)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "b", b)
        d = len(b)
        if d == 0 or len(sigma) != d or any(len(row) != d for row in sigma):
            raise ValueError("sigma must be d x d and b must have length d >= 1")
        entries = self.entries()
        if any(e.dim != d for e in entries):
            raise ValueError("all entries must have spatial dimension d = len(b)")
        if len({e.cutoff for e in entries}) != 1:
            raise ValueError("all entries must share one cutoff")
        if self.regularity <= 0:
            raise ValueError("regularity p must be > 0")
        bound = self.max_norm()
        if self.beta < bound * (1 - 1e-12):
            raise ValueError(f"beta={self.beta} is below max entry norm {bound}")

    @classmethod
    def build(cls, sigma, b, regularity: float, beta: float | None = None):
        tmp_beta = math.inf if beta is None else beta
        obj = cls(sigma, b, tmp_beta, regularity)
        if beta is None:
            object.__setattr__(obj, "beta", obj.max_norm())
        return obj

    @classmethod
    def zeros(cls, dim: int, cutoff: int, regularity: float):
        z = ExpansionVector.zeros(dim, cutoff, regularity)
        return cls.build([[z] * dim for _ in range(dim)], [z] * dim, regularity)

    @property
    def dim(self) -> int:
        return len(self.b)

    @property
    def cutoff(self) -> int:
        return self.b[0].cutoff

    def entries(self) -> list[ExpansionVector]:
        return list(self.b) + [e for row in self.sigma for e in row]

    def max_norm(self) -> float:
        return max(sobolev_norm(e, self.regularity) for e in self.entries())

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "regularity": self.regularity,
            "cutoff": self.cutoff,
            "beta": self.beta,
            "b": [e.to_dict() for e in self.b],
            "sigma": [[e.to_dict() for e in row] for row in self.sigma],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DistributionCoefficientSet":
        b = [ExpansionVector.from_dict(e) for e in data["b"]]
        sigma = [[ExpansionVector.from_dict(e) for e in row] for row in data["sigma"]]
        return cls(sigma, b, float(data["beta"]), float(data["regularity"]))


# ---------------------------------------------------------------------------
# Jump families
# ---------------------------------------------------------------------------

def _clamp(s, slope, intercept, clamp):
    return np.clip(intercept + slope * s, -clamp, clamp)


class SmallJumpFamily:
    """``F(y, x)`` for ``0 < |x| < 1``.

    Families are functions of finitely many pairings ``<phi_s, y>``; the
    solvers evaluate them through :meth:`from_pairings`.
    """

    family_id = "abstract"
    dim: int
    pairing_vectors: tuple = ()

    def from_pairings(self, s: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, y: ExpansionVector, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        s = np.array([[dual_pair(phi, y) for phi in self.pairing_vectors]])
        return self.from_pairings(s, x)[0]

    def lipschitz_profile(self, x) -> float:
        """Declared ``C_x`` with ``|F(y1,x)-F(y2,x)| <= C_x ||y1-y2||_{-p-1/2}``."""
        raise NotImplementedError

    def pairing_lipschitz(self, x) -> float:
        """Lipschitz constant of ``F(., x)`` with respect to the pairing vector."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class ZeroSmallJump(SmallJumpFamily):
    dim: int
    family_id = "zero"

    def from_pairings(self, s, x):
        return np.zeros((s.shape[0], self.dim))

    def lipschitz_profile(self, x) -> float:
        return 0.0

    def pairing_lipschitz(self, x) -> float:
        return 0.0

    def to_dict(self):
        return {"kind": "zero"}


@dataclass(frozen=True, eq=False)
class ClampedLinearSmallJump(SmallJumpFamily):
    """``F(y, x) = x * clip(intercept + slope <phi, y>, -clamp, clamp)``.

    Lipschitz in ``y`` with ``C_x = |x| |slope| ||phi||_{p+1/2}``.
    """

    phi: ExpansionVector
    slope: float = 1.0
    intercept: float = 0.0
    clamp: float = 1.0
    regularity: float = 1.0
    family_id = "clamped_linear"

    def __post_init__(self):
        if self.clamp <= 0:
            raise ValueError("clamp must be > 0")

    @property
    def dim(self) -> int:
        return self.phi.dim

    @property
    def pairing_vectors(self):
        return (self.phi,)

    def from_pairings(self, s, x):
        g = _clamp(s[:, 0], self.slope, self.intercept, self.clamp)
        return g[:, None] * np.asarray(x, dtype=float)[None, :]

    def lipschitz_profile(self, x) -> float:
        return float(np.linalg.norm(x)) * abs(self.slope) * sobolev_norm(self.phi, self.regularity + 0.5)

    def pairing_lipschitz(self, x) -> float:
        return float(np.linalg.norm(x)) * abs(self.slope)

    def to_dict(self):
        return {"kind": "clamped_linear", "phi": self.phi.to_dict(), "slope": self.slope,
                "intercept": self.intercept, "clamp": self.clamp}


class LargeJumpFamily:
    """``G(y, x)`` for ``|x| >= 1``; continuous in ``y``."""

    family_id = "abstract"
    dim: int
    pairing_vectors: tuple = ()

    def from_pairings(self, s: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, y: ExpansionVector, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        s = np.array([[dual_pair(phi, y) for phi in self.pairing_vectors]]).reshape(1, -1)
        return self.from_pairings(s, x)[0]

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class IdentityLargeJump(LargeJumpFamily):
    """``G(y, x) = x``."""

    dim: int
    family_id = "identity"

    def from_pairings(self, s, x):
        return np.broadcast_to(np.asarray(x, dtype=float), (s.shape[0], self.dim)).copy()

    def to_dict(self):
        return {"kind": "identity"}


@dataclass(frozen=True, eq=False)
class ZeroLargeJump(LargeJumpFamily):
    dim: int
    family_id = "zero"

    def from_pairings(self, s, x):
        return np.zeros((s.shape[0], self.dim))

    def to_dict(self):
        return {"kind": "zero"}


@dataclass(frozen=True, eq=False)
class TanhLargeJump(LargeJumpFamily):
    """``G(y, x) = x (1 + tanh <phi, y>)``."""

    phi: ExpansionVector
    family_id = "tanh"

    @property
    def dim(self):
        return self.phi.dim

    @property
    def pairing_vectors(self):
        return (self.phi,)

    def from_pairings(self, s, x):
        return (1.0 + np.tanh(s[:, 0]))[:, None] * np.asarray(x, dtype=float)[None, :]

    def to_dict(self):
        return {"kind": "tanh", "phi": self.phi.to_dict()}


@dataclass(frozen=True, eq=False)
class LinearLargeJump(LargeJumpFamily):
    """``G(y, x) = x <phi, y>``."""

    phi: ExpansionVector
    family_id = "linear"

    @property
    def dim(self):
        return self.phi.dim

    @property
    def pairing_vectors(self):
        return (self.phi,)

    def from_pairings(self, s, x):
        return s[:, :1] * np.asarray(x, dtype=float)[None, :]

    def to_dict(self):
        return {"kind": "linear", "phi": self.phi.to_dict()}


def small_family_from_dict(data: dict, dim: int, regularity: float) -> SmallJumpFamily:
    kind = data.get("kind", "zero")
    if kind == "zero":
        return ZeroSmallJump(dim)
    if kind == "clamped_linear":
        return ClampedLinearSmallJump(ExpansionVector.from_dict(data["phi"]),
                                      float(data.get("slope", 1.0)),
                                      float(data.get("intercept", 0.0)),
                                      float(data.get("clamp", 1.0)), regularity)
    raise ValueError(f"unknown small-jump family {kind!r}")


def large_family_from_dict(data: dict, dim: int) -> LargeJumpFamily:
    kind = data.get("kind", "identity")
    if kind == "identity":
        return IdentityLargeJump(dim)
    if kind == "zero":
        return ZeroLargeJump(dim)
    if kind == "tanh":
        return TanhLargeJump(ExpansionVector.from_dict(data["phi"]))
    if kind == "linear":
        return LinearLargeJump(ExpansionVector.from_dict(data["phi"]))
    raise ValueError(f"unknown large-jump family {kind!r}")


def dumps_coefficients(coeffs: DistributionCoefficientSet, fam_small: SmallJumpFamily,
                       fam_large: LargeJumpFamily) -> str:
    data = coeffs.to_dict()
    data["small_jump"] = fam_small.to_dict()
    data["large_jump"] = fam_large.to_dict()
    return json.dumps(data, indent=1)


def loads_coefficients(text: str):
    data = json.loads(text)
    coeffs = DistributionCoefficientSet.from_dict(data)
    return (coeffs,
            small_family_from_dict(data.get("small_jump", {}), coeffs.dim, coeffs.regularity),
            large_family_from_dict(data.get("large_jump", {}), coeffs.dim))


# ---------------------------------------------------------------------------
# Pointwise lifts (definition-level)
# ---------------------------------------------------------------------------

def _check_param(coeffs: DistributionCoefficientSet, y: ExpansionVector):
    if y.dim != coeffs.dim:
        raise ValueError(f"parameter has dim {y.dim}, coefficients have dim {coeffs.dim}")


def lift_drift(coeffs: DistributionCoefficientSet, z, y: ExpansionVector,
               rule: QuadratureRule | None = None) -> np.ndarray:
    _check_param(coeffs, y)
    shifted = translate(y, z, rule)
    return np.array([dual_pair(bi, shifted) for bi in coeffs.b])


def lift_diffusion(coeffs: DistributionCoefficientSet, z, y: ExpansionVector,
                   rule: QuadratureRule | None = None) -> np.ndarray:
    _check_param(coeffs, y)
    shifted = translate(y, z, rule)
    return np.array([[dual_pair(e, shifted) for e in row] for row in coeffs.sigma])


def lift_small_jump(fam: SmallJumpFamily, z, x, y: ExpansionVector,
                    rule: QuadratureRule | None = None) -> np.ndarray:
    r = float(np.linalg.norm(np.atleast_1d(x)))
    if not 0.0 < r < 1.0:
        raise ValueError(f"small-jump mark must satisfy 0 < |x| < 1, got |x| = {r}")
    return fam(translate(y, z, rule), x)


def lift_large_jump(fam: LargeJumpFamily, z, x, y: ExpansionVector,
                    rule: QuadratureRule | None = None) -> np.ndarray:
    r = float(np.linalg.norm(np.atleast_1d(x)))
    if r < 1.0:
        raise ValueError(f"large-jump mark must satisfy |x| >= 1, got |x| = {r}")
    return fam(translate(y, z, rule), x)


# ---------------------------------------------------------------------------
# Batched coefficient fields used by the solvers
# ---------------------------------------------------------------------------

class CoefficientField:
    """Batched evaluation of all SDE coefficients at states ``Z`` (``(P, d)``).

    ``coefficients`` returns ``(drift (P,d), diffusion (P,d,d), small (P,A,d))``
    where ``small[:, a]`` is the small-jump coefficient at mark ``marks[a]``.
    """

    dim: int
    synthetic: bool = False

    def coefficients(self, Z: np.ndarray, marks: np.ndarray):
        raise NotImplementedError

    def large_jump(self, Z: np.ndarray, mark: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class LiftedField(CoefficientField):
    synthetic = False

    def __init__(self, coeffs: DistributionCoefficientSet, fam_small: SmallJumpFamily,
                 fam_large: LargeJumpFamily, parameter: ExpansionVector,
                 rule: QuadratureRule | None = None):
        _check_param(coeffs, parameter)
        self.coeffs = coeffs
        self.fam_small = fam_small
        self.fam_large = fam_large
        self.parameter = parameter
        d = coeffs.dim
        self.dim = d
        tests = list(coeffs.b) + [e for row in coeffs.sigma for e in row]
        self._n_small = len(fam_small.pairing_vectors)
        tests += list(fam_small.pairing_vectors) + list(fam_large.pairing_vectors)
        self.pairings = LiftedPairings(parameter, tests, rule)

    def _split(self, s):
        d = self.dim
        drift = s[:, :d]
        diffusion = s[:, d:d + d * d].reshape(-1, d, d)
        small = s[:, d + d * d:d + d * d + self._n_small]
        large = s[:, d + d * d + self._n_small:]
        return drift, diffusion, small, large

    def coefficients(self, Z, marks):
        Z = np.asarray(Z, dtype=float).reshape(-1, self.dim)
        drift, diffusion, small_s, _ = self._split(self.pairings(Z))
        jumps = np.empty((Z.shape[0], len(marks), self.dim))
        for a, x in enumerate(marks):
            jumps[:, a] = self.fam_small.from_pairings(small_s, x)
        return drift, diffusion, jumps

    def large_jump(self, Z, mark):
        Z = np.asarray(Z, dtype=float).reshape(-1, self.dim)
        *_, large_s = self._split(self.pairings(Z))
        return self.fam_large.from_pairings(large_s, np.asarray(mark, dtype=float))


class SyntheticField(CoefficientField):
    """Plain callbacks behind the field interface; for tests and controls only.

    Synthetic fields are not lifted from distributions and make no claim to
    satisfy the coefficient hypotheses.
    """

    synthetic = True

    def __init__(self, dim: int, drift: Callable | None = None, diffusion: Callable | None = None,
                 small_jump: Callable | None = None, large_jump: Callable | None = None):
        self.dim = dim
        self._drift = drift
        self._diffusion = diffusion
        self._small = small_jump
        self._large = large_jump

    def coefficients(self, Z, marks):
        Z = np.asarray(Z, dtype=float).reshape(-1, self.dim)
        P = Z.shape[0]
        drift = np.zeros((P, self.dim)) if self._drift is None else np.asarray(self._drift(Z), float).reshape(P, self.dim)
        diffusion = (np.zeros((P, self.dim, self.dim)) if self._diffusion is None
                     else np.asarray(self._diffusion(Z), float).reshape(P, self.dim, self.dim))
        jumps = np.zeros((P, len(marks), self.dim))
        if self._small is not None:
            for a, x in enumerate(marks):
                jumps[:, a] = np.asarray(self._small(Z, x), float).reshape(P, self.dim)
        return drift, diffusion, jumps

    def large_jump(self, Z, mark):
        Z = np.asarray(Z, dtype=float).reshape(-1, self.dim)
        if self._large is None:
            return np.broadcast_to(np.asarray(mark, float), Z.shape).copy()
        return np.asarray(self._large(Z, mark), float).reshape(Z.shape)


def synthetic_from_dict(data: dict, dim: int) -> SyntheticField:
    """Named synthetic drifts: ``zero``, ``constant`` (``value``), ``linear`` (``rate``), ``cubic``."""
    kind = data.get("drift", "zero")
    if kind == "zero":
        drift = None
    elif kind == "constant":
        value = np.asarray(data.get("value", [1.0] * dim), dtype=float)
        drift = lambda Z: np.broadcast_to(value, Z.shape)
    elif kind == "linear":
        rate = float(data.get("rate", 1.0))
        drift = lambda Z: rate * Z
    elif kind == "cubic":
        drift = lambda Z: Z ** 3
    else:
        raise ValueError(f"unknown synthetic drift {kind!r}")
    sigma = float(data.get("diffusion", 0.0))
    diffusion = None if sigma == 0.0 else (lambda Z: np.broadcast_to(sigma * np.eye(dim), (Z.shape[0], dim, dim)))
    return SyntheticField(dim, drift, diffusion)


# ---------------------------------------------------------------------------
# Hypothesis checks
# ---------------------------------------------------------------------------

@dataclass
class HypothesisReport:
    sup_Cx: float = 0.0
    integral_Cx2: float = 0.0
    sup_F0: float = 0.0
    integral_F02: float = 0.0
    alpha_K: float = 0.0
    fourth_moment_K: float = 0.0
    f1_violations: int = 0
    f1_pairs: int = 0
    g1_profile: list = field(default_factory=list)
    zero_bound_violations: int = 0
    C_K: float = 0.0
    C_K_n: dict = field(default_factory=dict)
    C_K_n_doubled: dict = field(default_factory=dict)
    C_F_n: dict = field(default_factory=dict)
    analytic_C_K: float = 0.0
    flags: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items()}
        out["C_K_n"] = {str(k): v for k, v in self.C_K_n.items()}
        out["C_K_n_doubled"] = {str(k): v for k, v in self.C_K_n_doubled.items()}
        out["C_F_n"] = {str(k): v for k, v in self.C_F_n.items()}
        out["passed"] = self.passed
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _unit_ball_marks(dim: int, count: int = 64) -> np.ndarray:
    r = (np.arange(1, count + 1) / (count + 1))
    dirs = np.concatenate([np.eye(dim), -np.eye(dim)])
    return np.concatenate([ri * dirs for ri in r])


def _ball_pairs(rng, dim, radius, count):
    """Pairs in the open ball: half close (gradient scale), half independent."""
    def inside(n):
        v = rng.standard_normal((n, dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return v * (radius * rng.random((n, 1)) ** (1.0 / dim))
    z1 = inside(count)
    half = count // 2
    step = rng.standard_normal((half, dim))
    step *= (10.0 ** rng.uniform(-3, -1, (half, 1))) / np.linalg.norm(step, axis=1, keepdims=True)
    z2 = np.concatenate([z1[:half] + step, inside(count - half)])
    norms = np.linalg.norm(z2, axis=1, keepdims=True)
    over = norms[:, 0] >= radius
    z2[over] *= (radius * (1 - 1e-9)) / norms[over]
    return z1, z2


def lipschitz_ratio(field_: CoefficientField, model: LevyModel, z1, z2) -> tuple[np.ndarray, np.ndarray]:
    """Per pair: (|db|^2 + |dsigma|^2 + int |dF|^2 dnu) / |dz|^2 and the F part alone."""
    marks, rates = model.small_marks, model.small_rates
    b1, s1, f1 = field_.coefficients(z1, marks)
    b2, s2, f2 = field_.coefficients(z2, marks)
    dz2 = np.sum((z1 - z2) ** 2, axis=1)
    jump = np.sum(np.sum((f1 - f2) ** 2, axis=2) * rates[None, :], axis=1) if len(rates) else np.zeros(len(dz2))
    total = np.sum((b1 - b2) ** 2, axis=1) + np.sum((s1 - s2) ** 2, axis=(1, 2)) + jump
    ok = dz2 > 0
    return np.where(ok, total / np.where(ok, dz2, 1.0), 0.0), np.where(ok, jump / np.where(ok, dz2, 1.0), 0.0)


def analytic_lipschitz_bound(coeffs: DistributionCoefficientSet, fam_small: SmallJumpFamily,
                             model: LevyModel, y: ExpansionVector) -> float:
    """Upper bound for the squared Lipschitz constant of the lifted coefficients.

    ``grad_z <a, tau_z y> = <grad a, tau_z y>`` and Cauchy-Schwarz in L2 give
    ``|<a, tau_z1 y> - <a, tau_z2 y>| <= ||grad a||_0 ||y||_0 |z1 - z2|``.
    """
    def grad2(a):
        return sum(sobolev_norm(g, 0.0) ** 2 for g in gradient(a))
    y0 = sobolev_norm(y, 0.0) ** 2
    total = sum(grad2(e) for e in coeffs.entries())
    if fam_small.pairing_vectors:
        pair = sum(grad2(phi) for phi in fam_small.pairing_vectors)
        jump = compensator_integral(model, lambda x: fam_small.pairing_lipschitz(x) ** 2)
        total += float(jump) * pair
    return float(total * y0)


def verify_hypotheses(coeffs: DistributionCoefficientSet, fam_small: SmallJumpFamily,
                      fam_large: LargeJumpFamily, model: LevyModel,
                      K: Sequence[ExpansionVector], radii: Sequence[float],
                      samples: int = 2000, seed: int = 0,
                      rule: QuadratureRule | None = None) -> HypothesisReport:
    if not K:
        raise ValueError("K must contain at least one parameter value")
    p = coeffs.regularity
    d = coeffs.dim
    rng = np.random.default_rng(seed)
    rep = HypothesisReport()

    # F2 / F3 over the small-jump atoms and the punctured unit ball
    ball = _unit_ball_marks(d)
    zero = ExpansionVector.zeros(d, coeffs.cutoff, -p)
    cx_all = [fam_small.lipschitz_profile(x) for x in ball] + \
             [fam_small.lipschitz_profile(x) for x in model.small_marks]
    f0_all = [np.linalg.norm(fam_small(zero, x)) for x in ball] + \
             [np.linalg.norm(fam_small(zero, x)) for x in model.small_marks]
    rep.sup_Cx = float(max(cx_all))
    rep.sup_F0 = float(max(f0_all))
    rep.integral_Cx2 = float(compensator_integral(model, lambda x: fam_small.lipschitz_profile(x) ** 2))
    rep.integral_F02 = float(compensator_integral(model, lambda x: np.sum(fam_small(zero, x) ** 2)))
    rep.alpha_K = float(max(compensator_integral(model, lambda x: np.sum(fam_small(y, x) ** 2)) for y in K))
    rep.fourth_moment_K = float(max(compensator_integral(model, lambda x: np.sum(fam_small(y, x) ** 2) ** 2)
                                    for y in K))

    # F1 on random pairs in the span
    n_pairs = 1000
    marks = np.concatenate([model.small_marks, ball[:: max(1, len(ball) // 8)]])
    for i in range(n_pairs):
        scale = rng.uniform(0.1, 10.0)
        y1 = ExpansionVector(d, coeffs.cutoff, rng.standard_normal(len(zero.coeffs)) * scale, -p)
        y2 = ExpansionVector(d, coeffs.cutoff, rng.standard_normal(len(zero.coeffs)) * scale, -p)
        x = marks[i % len(marks)]
        lhs = np.linalg.norm(fam_small(y1, x) - fam_small(y2, x))
        rhs = fam_small.lipschitz_profile(x) * sobolev_norm(y1 - y2, -p - 0.5)
        if lhs > rhs * (1 + 1e-12) + 1e-15:
            rep.f1_violations += 1
    rep.f1_pairs = n_pairs

    # zero-state bounds |b(0;y)| <= beta sqrt(d) ||y||_-p, |sigma(0;y)| <= beta d ||y||_-p
    for y in K:
        yn = sobolev_norm(y, -p)
        if np.linalg.norm(lift_drift(coeffs, np.zeros(d), y)) > coeffs.beta * math.sqrt(d) * yn * (1 + 1e-12):
            rep.zero_bound_violations += 1
        if np.linalg.norm(lift_diffusion(coeffs, np.zeros(d), y)) > coeffs.beta * d * yn * (1 + 1e-12):
            rep.zero_bound_violations += 1

    # G1: y -> G(y, x) continuity along a fixed direction
    y0 = K[0]
    direction = ExpansionVector(d, y0.cutoff, rng.standard_normal(len(y0.coeffs)), y0.regularity)
    xg = np.ones(d) / math.sqrt(d) * 1.5
    g_ref = fam_large(y0, xg)
    rep.g1_profile = [float(np.linalg.norm(fam_large(y0 + eps * direction, xg) - g_ref))
                      for eps in (1e-1, 1e-2, 1e-3, 1e-4)]

    # Lipschitz constants in z on balls O(0, n)
    analytic = 0.0
    for y in K:
        field_ = LiftedField(coeffs, fam_small, fam_large, y, rule)
        analytic = max(analytic, analytic_lipschitz_bound(coeffs, fam_small, model, y))
        for n in radii:
            for target, count in ((rep.C_K_n, samples), (rep.C_K_n_doubled, 2 * samples)):
                z1, z2 = _ball_pairs(rng, d, float(n), count)
                total, jump = lipschitz_ratio(field_, model, z1, z2)
                target[n] = max(target.get(n, 0.0), float(total.max()))
                if count == samples:
                    rep.C_F_n[n] = max(rep.C_F_n.get(n, 0.0), float(jump.max()))
    rep.C_K = max(rep.C_K_n.values()) if rep.C_K_n else 0.0
    rep.analytic_C_K = analytic

    def stable(a, b):
        return abs(a - b) <= 0.2 * max(abs(a), abs(b)) if max(abs(a), abs(b)) > 0 else True

    profile = rep.g1_profile
    rep.flags = {
        "finite": all(math.isfinite(v) for v in (rep.sup_Cx, rep.integral_Cx2, rep.sup_F0,
                                                 rep.integral_F02, rep.alpha_K, rep.C_K)),
        "F1": rep.f1_violations == 0,
        "zero_bounds": rep.zero_bound_violations == 0,
        "G1": all(b <= a for a, b in zip(profile, profile[1:])),
        "lipschitz_below_analytic": all(v <= analytic * (1 + 1e-9) for v in rep.C_K_n.values()),
        "lipschitz_stable": all(stable(rep.C_K_n[n], rep.C_K_n_doubled[n]) for n in rep.C_K_n),
    }
    return rep
