"""Hermite functions, truncated Hermite-Sobolev expansions and translations.

Elements of the Hermite-Sobolev scale are stored as coefficient vectors on the
finite span ``{h_n : |n| <= cutoff}``.  Norms, dual pairings and translation
operators act on those coefficients; quadrature is only used to build the
translation matrices and to project functions.
"""

from __future__ import annotations

import itertools
import json
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

PI_QUARTER = np.pi ** -0.25
SQRT2 = math.sqrt(2.0)

MultiIndex = tuple[int, ...]


# ---------------------------------------------------------------------------
# Multi-indices and Hermite functions
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _index_tuple(dim: int, cutoff: int) -> tuple[MultiIndex, ...]:
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    if cutoff < 0:
        raise ValueError(f"cutoff must be >= 0, got {cutoff}")
    idx = [n for n in itertools.product(range(cutoff + 1), repeat=dim) if sum(n) <= cutoff]
    idx.sort(key=lambda n: (sum(n), tuple(-k for k in n)))
    return tuple(idx)


@lru_cache(maxsize=None)
def _index_array(dim: int, cutoff: int) -> np.ndarray:
    arr = np.array(_index_tuple(dim, cutoff), dtype=np.int64).reshape(-1, dim)
    arr.setflags(write=False)
    return arr


def index_set(dim: int, cutoff: int) -> np.ndarray:
    """Multi-indices with ``|n| <= cutoff``, one per row, graded order."""
    return _index_array(dim, cutoff)


def order(n: Sequence[int]) -> int:
    if any(k < 0 for k in n):
        raise ValueError(f"multi-index entries must be non-negative: {tuple(n)}")
    return int(sum(n))


@lru_cache(maxsize=None)
def _position(dim: int, cutoff: int) -> dict[MultiIndex, int]:
    return {n: i for i, n in enumerate(_index_tuple(dim, cutoff))}


@lru_cache(maxsize=None)
def _weights(dim: int, cutoff: int, p: float) -> np.ndarray:
    degree = index_set(dim, cutoff).sum(axis=1)
    w = (2.0 * degree + dim) ** (2.0 * p)
    w.setflags(write=False)
    return w


def hermite_functions(nmax: int, t) -> np.ndarray:
    """Values ``h_0(t) .. h_nmax(t)`` stacked along a new leading axis.

    Uses the normalised three-term recurrence, which stays finite well past
    the degree where ``2^n n!`` overflows.
    """
    t = np.asarray(t, dtype=float)
    out = np.empty((nmax + 1,) + t.shape)
    out[0] = PI_QUARTER * np.exp(-0.5 * t * t)
    if nmax >= 1:
        out[1] = SQRT2 * t * out[0]
    up, down = _recurrence_constants(nmax)
    for k in range(1, nmax):
        out[k + 1] = t * up[k] * out[k] - down[k] * out[k - 1]
    return out


@lru_cache(maxsize=None)
def _recurrence_constants(nmax: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    up = tuple(math.sqrt(2.0 / (k + 1)) for k in range(nmax + 1))
    down = tuple(math.sqrt(k / (k + 1)) for k in range(nmax + 1))
    return up, down


def hermite_eval(n: Sequence[int], x) -> float:
    """Tensor Hermite function ``h_n(x)`` at a single point of R^d."""
    n = tuple(int(k) for k in n)
    order(n)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (len(n),):
        raise ValueError(f"point has shape {x.shape}, expected ({len(n)},)")
    value = 1.0
    for k, xi in zip(n, x):
        value *= hermite_functions(k, xi)[k]
    return float(value)


def basis_matrix(points, dim: int, cutoff: int) -> np.ndarray:
    """``B[p, i] = h_{n_i}(points[p])`` for the graded index set."""
    points = np.asarray(points, dtype=float).reshape(-1, dim)
    idx = index_set(dim, cutoff)
    out = None
    for axis in range(dim):
        h = hermite_functions(cutoff, points[:, axis])  # (cutoff+1, P)
        term = h[idx[:, axis]]
        out = term if out is None else out * term
    return out.T


# ---------------------------------------------------------------------------
# Truncated expansions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExpansionVector:
    """Coefficients ``<f, h_n>`` for ``|n| <= cutoff``.

    ``regularity`` records which space ``S_p`` the element is treated as
    living in; it is metadata only and never changes the coefficients.
    """

    dim: int
    cutoff: int
    coeffs: np.ndarray
    regularity: float = 0.0

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=float).reshape(-1)
        expected = len(index_set(self.dim, self.cutoff))
        if arr.shape[0] != expected:
            raise ValueError(
                f"expected {expected} coefficients for dim={self.dim}, cutoff={self.cutoff}, "
                f"got {arr.shape[0]}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)
        object.__setattr__(self, "regularity", float(self.regularity))

    # -- constructors -------------------------------------------------------
    @classmethod
    def zeros(cls, dim: int, cutoff: int, regularity: float = 0.0) -> "ExpansionVector":
        return cls(dim, cutoff, np.zeros(len(index_set(dim, cutoff))), regularity)

    @classmethod
    def basis(cls, n: Sequence[int], cutoff: int, scale: float = 1.0,
              regularity: float = 0.0) -> "ExpansionVector":
        n = tuple(int(k) for k in n)
        if order(n) > cutoff:
            raise ValueError(f"|n| = {order(n)} exceeds cutoff {cutoff}")
        c = np.zeros(len(index_set(len(n), cutoff)))
        c[_position(len(n), cutoff)[n]] = scale
        return cls(len(n), cutoff, c, regularity)

    @classmethod
    def delta(cls, point, cutoff: int, regularity: float = 0.0) -> "ExpansionVector":
        """Truncated Dirac mass at ``point``: coefficients ``h_n(point)``."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        dim = point.shape[0]
        return cls(dim, cutoff, basis_matrix(point[None, :], dim, cutoff)[0], regularity)

    # -- coefficient access -------------------------------------------------
    def __getitem__(self, n: Sequence[int]) -> float:
        n = tuple(int(k) for k in n)
        if len(n) != self.dim:
            raise ValueError(f"multi-index {n} does not match dim {self.dim}")
        pos = _position(self.dim, self.cutoff).get(n)
        return 0.0 if pos is None else float(self.coeffs[pos])

    def items(self) -> Iterable[tuple[MultiIndex, float]]:
        return zip(_index_tuple(self.dim, self.cutoff), self.coeffs.tolist())

    def padded(self, cutoff: int) -> "ExpansionVector":
        """Same element on a larger (zero-padded) or smaller (truncated) span."""
        if cutoff == self.cutoff:
            return self
        c = np.zeros(len(index_set(self.dim, cutoff)))
        pos = _position(self.dim, cutoff)
        for n, v in self.items():
            if n in pos:
                c[pos[n]] = v
        return ExpansionVector(self.dim, cutoff, c, self.regularity)

    def with_regularity(self, regularity: float) -> "ExpansionVector":
        return ExpansionVector(self.dim, self.cutoff, self.coeffs, regularity)

    # -- arithmetic ---------------------------------------------------------
    def _common(self, other: "ExpansionVector") -> tuple[np.ndarray, np.ndarray, int]:
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        n = max(self.cutoff, other.cutoff)
        return self.padded(n).coeffs, other.padded(n).coeffs, n

    def __add__(self, other: "ExpansionVector") -> "ExpansionVector":
        a, b, n = self._common(other)
        return ExpansionVector(self.dim, n, a + b, self.regularity)

    def __sub__(self, other: "ExpansionVector") -> "ExpansionVector":
        a, b, n = self._common(other)
        return ExpansionVector(self.dim, n, a - b, self.regularity)

    def __mul__(self, scale: float) -> "ExpansionVector":
        return ExpansionVector(self.dim, self.cutoff, self.coeffs * float(scale), self.regularity)

    __rmul__ = __mul__

    def __neg__(self) -> "ExpansionVector":
        return self * -1.0

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExpansionVector):
            return NotImplemented
        return (self.dim == other.dim and self.cutoff == other.cutoff
                and self.regularity == other.regularity
                and np.array_equal(self.coeffs, other.coeffs))

    __hash__ = None

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def norm(self, p: float | None = None) -> float:
        return sobolev_norm(self, self.regularity if p is None else p)

    def evaluate(self, points) -> np.ndarray:
        """Reconstruct the truncated series at ``points`` (shape ``(P, d)``)."""
        return basis_matrix(points, self.dim, self.cutoff) @ self.coeffs

    # -- serialisation ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "cutoff": self.cutoff,
            "regularity": self.regularity,
            "coeffs": [[list(n), v] for n, v in self.items()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExpansionVector":
        dim, cutoff = int(data["dim"]), int(data["cutoff"])
        c = np.zeros(len(index_set(dim, cutoff)))
        pos = _position(dim, cutoff)
        for n, v in data["coeffs"]:
            key = tuple(int(k) for k in n)
            if key not in pos:
                raise ValueError(f"multi-index {key} outside |n| <= {cutoff}")
            c[pos[key]] = float(v)
        return cls(dim, cutoff, c, float(data.get("regularity", 0.0)))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "ExpansionVector":
        return cls.from_dict(json.loads(text))


def sobolev_inner(f: ExpansionVector, g: ExpansionVector, p: float) -> float:
    """``sum_n (2|n|+d)^{2p} <f,h_n> <g,h_n>`` over the common span."""
    a, b, n = f._common(g)
    return float(np.sum(_weights(f.dim, n, float(p)) * a * b))


def sobolev_norm(f: ExpansionVector, p: float) -> float:
    # rescaled so that tiny or huge coefficients neither underflow nor overflow
    v = np.sqrt(_weights(f.dim, f.cutoff, float(p))) * f.coeffs
    top = float(np.max(np.abs(v))) if len(v) else 0.0
    if top == 0.0 or not math.isfinite(top):
        return top
    return top * math.sqrt(float(np.sum((v / top) ** 2)))


def dual_pair(f: ExpansionVector, y: ExpansionVector) -> float:
    """Pairing of ``f`` in ``S_p`` with ``y`` in ``S_{-p}``; unweighted."""
    a, b, _ = f._common(y)
    return float(a @ b)


def gradient(f: ExpansionVector) -> list[ExpansionVector]:
    """Partial derivatives, exact on the span of cutoff ``N + 1``.

    ``h_n' = sqrt(n/2) h_{n-1} - sqrt((n+1)/2) h_{n+1}`` in each coordinate.
    """
    out = []
    pos = _position(f.dim, f.cutoff + 1)
    for axis in range(f.dim):
        c = np.zeros(len(index_set(f.dim, f.cutoff + 1)))
        for n, v in f.items():
            if v == 0.0:
                continue
            k = n[axis]
            if k > 0:
                lower = n[:axis] + (k - 1,) + n[axis + 1:]
                c[pos[lower]] += math.sqrt(k / 2.0) * v
            upper = n[:axis] + (k + 1,) + n[axis + 1:]
            c[pos[upper]] -= math.sqrt((k + 1) / 2.0) * v
        out.append(ExpansionVector(f.dim, f.cutoff + 1, c, f.regularity))
    return out


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Composite Gauss-Legendre rule on ``[-L, L]`` (tensorised in d > 1)."""

    nodes: np.ndarray
    weights: np.ndarray
    support_halfwidth: float
    key: tuple = field(default=())

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ValueError("nodes and weights must be 1-d arrays of equal length")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if not self.key:
            object.__setattr__(self, "key", ("custom", id(self)))

    @classmethod
    def gauss_legendre(cls, halfwidth: float, n_nodes: int, panels: int = 2) -> "QuadratureRule":
        per = int(math.ceil(n_nodes / panels))
        x0, w0 = np.polynomial.legendre.leggauss(per)
        edges = np.linspace(-halfwidth, halfwidth, panels + 1)
        xs, ws = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            xs.append(0.5 * (b - a) * x0 + 0.5 * (a + b))
            ws.append(0.5 * (b - a) * w0)
        return cls(np.concatenate(xs), np.concatenate(ws), float(halfwidth),
                   ("gl", float(halfwidth), per, panels))

    @classmethod
    def for_cutoff(cls, cutoff: int, margin: float = 3.0) -> "QuadratureRule":
        """Default rule: accurate to ~1e-13 for Hermite products up to ``cutoff``."""
        return _default_rule(int(cutoff), float(margin))

    def __len__(self) -> int:
        return self.nodes.shape[0]

    def supports(self, cutoff: int) -> bool:
        return len(self) >= 2 * cutoff + 1

    def tensor(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        grids = np.meshgrid(*([self.nodes] * dim), indexing="ij")
        wgrids = np.meshgrid(*([self.weights] * dim), indexing="ij")
        points = np.stack([g.reshape(-1) for g in grids], axis=1)
        weights = np.prod(np.stack([w.reshape(-1) for w in wgrids], axis=1), axis=1)
        return points, weights


@lru_cache(maxsize=64)
def _default_rule(cutoff: int, margin: float) -> QuadratureRule:
    halfwidth = max(math.sqrt(4 * cutoff + 6), 5.0) + margin
    return QuadratureRule.gauss_legendre(halfwidth, 6 * cutoff + 40, panels=2)


def project(f: Callable[[np.ndarray], np.ndarray], cutoff: int,
            rule: QuadratureRule | None = None, dim: int = 1,
            regularity: float = 0.0) -> ExpansionVector:
    """Hermite coefficients ``<f, h_n>`` by tensor quadrature.

    ``f`` receives points of shape ``(P, dim)`` and returns ``P`` values.  It
    must be negligible outside the rule's window; that is not checked.
    """
    rule = rule or QuadratureRule.for_cutoff(cutoff)
    if not rule.supports(cutoff):
        raise ValueError(
            f"quadrature rule with {len(rule)} nodes cannot resolve cutoff {cutoff} "
            f"(needs >= {2 * cutoff + 1})"
        )
    points, weights = rule.tensor(dim)
    values = np.asarray(f(points), dtype=float).reshape(-1)
    coeffs = basis_matrix(points, dim, cutoff).T @ (weights * values)
    return ExpansionVector(dim, cutoff, coeffs, regularity)


# ---------------------------------------------------------------------------
# Translations
# ---------------------------------------------------------------------------

class _LRUCache:
    """Bounded LRU map; lookups and inserts serialised by one lock."""

    def __init__(self, maxsize: int = 1024):
        self.maxsize = maxsize
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key):
        with self._lock:
            value = self._data.get(key)
            if value is not None:
                self._data.move_to_end(key)
                self.hits += 1
            else:
                self.misses += 1
            return value

    def put(self, key, value):
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)

    def clear(self):
        with self._lock:
            self._data.clear()
            self.hits = self.misses = 0

    def __len__(self):
        return len(self._data)


translation_cache = _LRUCache(1024)


def _translation_1d(shift: float, cutoff: int, rule: QuadratureRule) -> np.ndarray:
    # x = u + shift/2 keeps both factors centred on the rule's window
    u, w = rule.nodes, rule.weights
    left = hermite_functions(cutoff, u - 0.5 * shift)
    right = hermite_functions(cutoff, u + 0.5 * shift)
    return (left * w) @ right.T


def translation_matrix(z, dim: int, cutoff: int,
                       rule: QuadratureRule | None = None) -> np.ndarray:
    """``T[m, n] = <tau_z h_m, h_n>`` on the graded index set (cached)."""
    rule = rule or QuadratureRule.for_cutoff(cutoff)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (dim,):
        raise ValueError(f"shift has shape {z.shape}, expected ({dim},)")
    key = (rule.key, dim, cutoff, tuple(z.tolist()))
    cached = translation_cache.get(key)
    if cached is not None:
        return cached
    idx = index_set(dim, cutoff)
    mat = None
    for axis in range(dim):
        t1 = _translation_1d(z[axis], cutoff, rule)
        part = t1[np.ix_(idx[:, axis], idx[:, axis])]
        mat = part if mat is None else mat * part
    mat.setflags(write=False)
    translation_cache.put(key, mat)
    return mat


def translate(y: ExpansionVector, z, rule: QuadratureRule | None = None) -> ExpansionVector:
    """Coefficients of ``tau_z y`` projected back onto the span of ``y``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (y.dim,):
        raise ValueError(f"shift has shape {z.shape}, expected ({y.dim},)")
    if not np.any(z):
        return y
    mat = translation_matrix(z, y.dim, y.cutoff, rule)
    return ExpansionVector(y.dim, y.cutoff, y.coeffs @ mat, y.regularity)


def translation_leakage(z, dim: int, cutoff: int, rule: QuadratureRule | None = None) -> float:
    """Spectral norm of ``I - T(z) T(z)^T``.

    Bounds the relative round-trip error ``translate(translate(y, z), -z)`` and
    the deviation of the truncated translation from an L2 isometry.
    """
    mat = translation_matrix(z, dim, cutoff, rule)
    defect = np.eye(mat.shape[0]) - mat @ mat.T
    return float(np.linalg.norm(defect, 2))


def _power_iteration(b: np.ndarray, tol: float = 1e-14, max_iter: int = 20000) -> float:
    gram = b.T @ b
    v = np.ones(gram.shape[0]) / math.sqrt(gram.shape[0])
    est = 0.0
    for _ in range(max_iter):
        w = gram @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(nrm - est) <= tol * nrm:
            est = nrm
            break
        est = nrm
    return math.sqrt(est)


def translation_norm_profile(p: float, cutoff: int, radii: Iterable[float], dim: int = 1,
                             rule: QuadratureRule | None = None,
                             direction=None) -> list[tuple[float, float]]:
    """Estimate ``sup ||tau_z phi||_p / ||phi||_p`` on the truncated span.

    The shift is ``radius * direction`` (default: first axis).  The operator is
    conjugated into p-weighted coordinates and its top singular value is found
    by power iteration on the Gram matrix.
    """
    rule = rule or QuadratureRule.for_cutoff(cutoff)
    if direction is None:
        direction = np.eye(dim)[0]
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    scale = np.sqrt(_weights(dim, cutoff, float(p)))
    out = []
    for r in radii:
        if r < 0:
            raise ValueError(f"radius must be >= 0, got {r}")
        mat = translation_matrix(r * direction, dim, cutoff, rule)
        # row-vector action c -> c T, in weighted coordinates v = c * scale
        b = (mat / scale[:, None]) * scale[None, :]
        out.append((float(r), _power_iteration(b)))
    return out


# ---------------------------------------------------------------------------
# Lifted pairings z -> <a, tau_z y>
# ---------------------------------------------------------------------------

class LiftedPairings:
    """Fast evaluation of ``z -> <a_s, tau_z y>`` for a fixed ``y``.

    On the truncated span each pairing is ``exp(-|z|^2/4)`` times a polynomial
    of total degree ``<= 2N``, i.e. an exact finite combination of
    ``h_k(z / sqrt 2)`` with ``|k| <= 2N``.  The coefficients are obtained once
    from translation matrices at Gauss-Hermite nodes; afterwards evaluation is
    a Hermite recurrence at ``z / sqrt 2``.
    """

    def __init__(self, y: ExpansionVector, tests: Sequence[ExpansionVector],
                 rule: QuadratureRule | None = None):
        self.dim = y.dim
        self.cutoff = max([y.cutoff] + [a.cutoff for a in tests])
        self.n_outputs = len(tests)
        y = y.padded(self.cutoff)
        cols = []
        for a in tests:
            if a.dim != y.dim:
                raise ValueError(f"dimension mismatch: {a.dim} vs {y.dim}")
            cols.append(a.padded(self.cutoff).coeffs)
        tests_mat = np.stack(cols, axis=1) if cols else np.zeros((len(y.coeffs), 0))
        self.out_cutoff = 2 * self.cutoff
        n_gh = self.out_cutoff + 2
        t, w = np.polynomial.hermite.hermgauss(n_gh)
        w_scaled = w * np.exp(t * t)
        grids = np.meshgrid(*([t] * self.dim), indexing="ij")
        nodes = np.stack([g.reshape(-1) for g in grids], axis=1)
        wgrid = np.meshgrid(*([w_scaled] * self.dim), indexing="ij")
        weights = np.prod(np.stack([g.reshape(-1) for g in wgrid], axis=1), axis=1)
        values = np.empty((nodes.shape[0], self.n_outputs))
        for q, node in enumerate(nodes):
            shifted = y.coeffs @ translation_matrix(math.sqrt(2.0) * node, self.dim,
                                                    self.cutoff, rule)
            values[q] = shifted @ tests_mat
        basis = basis_matrix(nodes, self.dim, self.out_cutoff)  # (Q, K2)
        self.coeffs = basis.T @ (weights[:, None] * values)      # (K2, S)
        self._idx = index_set(self.dim, self.out_cutoff)

    def __call__(self, points) -> np.ndarray:
        """Pairings at ``points`` of shape ``(P, d)``; returns ``(P, S)``.

        Accumulates term by term so each row is independent of the batch.
        """
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        scaled = points / math.sqrt(2.0)
        per_axis = [hermite_functions(self.out_cutoff, scaled[:, a]) for a in range(self.dim)]
        out = np.zeros((points.shape[0], self.n_outputs))
        for k, n in enumerate(self._idx):
            term = per_axis[0][n[0]]
            for a in range(1, self.dim):
                term = term * per_axis[a][n[a]]
            out += term[:, None] * self.coeffs[k]
        return out
