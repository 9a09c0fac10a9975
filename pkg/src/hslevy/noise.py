"""Driving noise: Brownian increments plus small- and large-jump Poisson streams.

The small-jump Levy measure is a finite set of atoms ``(mark, intensity)`` in
the punctured unit ball, so integrals against it are finite sums.  Large jumps
form a compound Poisson stream with marks of norm >= 1.

Each stream of a realisation comes from its own Philox generator keyed by
``(seed, replication, stream)``, so realisations do not depend on the order in
which replications are scheduled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

STREAM_BROWNIAN = 0
STREAM_SMALL = 1
STREAM_LARGE = 2


def stream_rng(seed: int, replication: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replication), int(stream)])))


@dataclass(frozen=True)
class LargeJumpSampler:
    """Mark distribution for large jumps.

    ``kind="fixed"``: choose among ``marks`` with ``probabilities``.
    ``kind="shell"``: radius uniform on ``[rmin, rmax]``, direction uniform.
    """

    kind: str = "fixed"
    marks: tuple = ((1.0,),)
    probabilities: tuple = ()
    rmin: float = 1.0
    rmax: float = 2.0

    def __post_init__(self):
        if self.kind == "fixed":
            marks = np.asarray(self.marks, dtype=float)
            if marks.ndim != 2 or len(marks) == 0:
                raise ValueError("fixed sampler needs a non-empty list of marks")
            if np.any(np.linalg.norm(marks, axis=1) < 1.0):
                raise ValueError("large-jump marks must satisfy |x| >= 1")
            if self.probabilities and len(self.probabilities) != len(marks):
                raise ValueError("probabilities must match marks")
        elif self.kind == "shell":
            if not 1.0 <= self.rmin <= self.rmax:
                raise ValueError("shell sampler needs 1 <= rmin <= rmax")
        else:
            raise ValueError(f"unknown large-jump sampler kind {self.kind!r}")

    def sample(self, rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
        if self.kind == "fixed":
            marks = np.asarray(self.marks, dtype=float)
            if marks.shape[1] != dim:
                raise ValueError(f"sampler marks have dim {marks.shape[1]}, model has {dim}")
            probs = np.asarray(self.probabilities, dtype=float) if self.probabilities else None
            if probs is not None:
                probs = probs / probs.sum()
            choice = rng.choice(len(marks), size=count, p=probs)
            return marks[choice]
        radius = rng.uniform(self.rmin, self.rmax, size=count)
        direction = rng.standard_normal((count, dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        return radius[:, None] * direction

    def to_dict(self) -> dict:
        if self.kind == "fixed":
            out = {"kind": "fixed", "marks": [list(m) for m in self.marks]}
            if self.probabilities:
                out["probabilities"] = list(self.probabilities)
            return out
        return {"kind": "shell", "rmin": self.rmin, "rmax": self.rmax}

    @classmethod
    def from_dict(cls, data: dict) -> "LargeJumpSampler":
        kind = data.get("kind", "fixed")
        if kind == "fixed":
            marks = tuple(tuple(float(v) for v in np.atleast_1d(m)) for m in data["marks"])
            probs = tuple(float(v) for v in data.get("probabilities", ()))
            return cls("fixed", marks, probs)
        return cls("shell", rmin=float(data.get("rmin", 1.0)), rmax=float(data.get("rmax", 2.0)))


@dataclass(frozen=True)
class LevyModel:
    dim: int
    small_atoms: tuple = ()          # ((mark tuple, intensity), ...)
    large_rate: float = 0.0
    large_sampler: LargeJumpSampler | None = None

    def __post_init__(self):
        if self.large_sampler is None:
            unit = (1.0,) + (0.0,) * (self.dim - 1)
            object.__setattr__(self, "large_sampler", LargeJumpSampler("fixed", (unit,)))
        atoms = tuple((tuple(float(v) for v in np.atleast_1d(m)), float(rate))
                      for m, rate in self.small_atoms)
        object.__setattr__(self, "small_atoms", atoms)
        for mark, rate in atoms:
            if len(mark) != self.dim:
                raise ValueError(f"small mark {mark} does not have dim {self.dim}")
            r = float(np.linalg.norm(mark))
            if not 0.0 < r < 1.0:
                raise ValueError(f"small marks must satisfy 0 < |x| < 1, got {mark}")
            if not rate > 0:
                raise ValueError(f"atom intensity must be > 0, got {rate}")
        if self.large_rate < 0:
            raise ValueError("large_rate must be >= 0")

    @property
    def small_marks(self) -> np.ndarray:
        return np.array([m for m, _ in self.small_atoms], dtype=float).reshape(-1, self.dim)

    @property
    def small_rates(self) -> np.ndarray:
        return np.array([r for _, r in self.small_atoms], dtype=float)

    @property
    def total_small_rate(self) -> float:
        return float(self.small_rates.sum())

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "small_atoms": [{"mark": list(m), "rate": r} for m, r in self.small_atoms],
            "large_rate": self.large_rate,
            "large_sampler": self.large_sampler.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LevyModel":
        atoms = tuple((a["mark"], a["rate"]) for a in data.get("small_atoms", ()))
        sampler = LargeJumpSampler.from_dict(data.get("large_sampler", {"kind": "fixed", "marks": [[1.0] * int(data["dim"])]}))
        return cls(int(data["dim"]), atoms, float(data.get("large_rate", 0.0)), sampler)


def compensator_integral(model: LevyModel, f: Callable[[np.ndarray], np.ndarray]):
    """``sum_atoms f(x) * intensity(x)``, exact for the atomic small-jump measure.

    ``f`` receives one mark (shape ``(d,)``) and may return a scalar or array.
    """
    total = 0.0
    for mark, rate in model.small_atoms:
        total = total + np.asarray(f(np.asarray(mark)), dtype=float) * rate
    return total


@dataclass(frozen=True, eq=False)
class NoiseRealization:
    """One frozen sample of the noise on a uniform grid.

    Shifted views share the parent's arrays and only carry an offset, which
    keeps ``shift_view(shift_view(w, a), b) == shift_view(w, a + b)`` exact.
    """

    horizon: float
    steps: int
    brownian: np.ndarray            # (steps, d) increments of the root grid
    small_times: np.ndarray         # (n,)
    small_atoms: np.ndarray         # (n,) atom indices
    small_marks_table: np.ndarray   # (A, d)
    large_times: np.ndarray         # (m,)
    large_marks: np.ndarray         # (m, d)
    seed: int = 0
    replication: int = 0
    offset: float = 0.0
    _grid: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self._grid is None:
            grid = self.horizon * np.arange(self.steps + 1) / self.steps
            object.__setattr__(self, "_grid", grid)
        for name in ("brownian", "small_times", "small_atoms", "small_marks_table",
                     "large_times", "large_marks", "_grid"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    # -- root data ----------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.brownian.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.small_marks_table.shape[0]

    @property
    def _start(self) -> int:
        """First root grid index with time >= offset."""
        return int(np.searchsorted(self._grid, self.offset, side="left"))

    @property
    def aligned(self) -> bool:
        s = self._start
        return s <= self.steps and self._grid[s] == self.offset

    # -- view data ----------------------------------------------------------
    @property
    def grid(self) -> np.ndarray:
        return self._grid[self._start:] - self.offset

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self._grid[self._start:])

    @property
    def brownian_increments(self) -> np.ndarray:
        return self.brownian[self._start:]

    @property
    def n_steps(self) -> int:
        return self.steps - self._start

    @property
    def small_events(self) -> tuple[np.ndarray, np.ndarray]:
        keep = self.small_times > self.offset
        return self.small_times[keep] - self.offset, self.small_marks_table[self.small_atoms[keep]]

    @property
    def large_events(self) -> tuple[np.ndarray, np.ndarray]:
        keep = self.large_times > self.offset
        return self.large_times[keep] - self.offset, self.large_marks[keep]

    def _bins(self, times: np.ndarray) -> np.ndarray:
        # event in (t_k, t_{k+1}] acts at the end of step k
        return np.searchsorted(self._grid, times, side="left") - 1 - self._start

    def small_counts(self) -> np.ndarray:
        """``counts[k, a]``: small events of atom ``a`` inside step ``k``."""
        keep = self.small_times > self.offset
        bins = self._bins(self.small_times[keep])
        counts = np.zeros((self.n_steps, self.n_atoms))
        valid = bins >= 0
        np.add.at(counts, (bins[valid], self.small_atoms[keep][valid]), 1.0)
        return counts

    def large_bins(self) -> np.ndarray:
        keep = self.large_times > self.offset
        return self._bins(self.large_times[keep])

    # -- derived realisations ---------------------------------------------
    def shift_view(self, eta: float) -> "NoiseRealization":
        """Read-only view of the noise after ``eta``, re-timed to start at 0."""
        if eta < 0 or eta > self.horizon - self.offset:
            raise ValueError(f"shift {eta} outside [0, {self.horizon - self.offset}]")
        return replace(self, offset=self.offset + float(eta))

    def shift_to_row(self, row: int) -> "NoiseRealization":
        """Shifted view starting exactly at grid row ``row`` of this view."""
        if not 0 <= row <= self.n_steps:
            raise ValueError(f"row {row} outside [0, {self.n_steps}]")
        return replace(self, offset=float(self._grid[self._start + row]))

    def coarsen(self, factor: int) -> "NoiseRealization":
        """Same noise on a grid with ``steps / factor`` steps (summed increments)."""
        if self.offset != 0.0:
            raise ValueError("coarsen a root realisation, not a view")
        if factor < 1 or self.steps % factor:
            raise ValueError(f"factor {factor} must divide {self.steps}")
        coarse = self.brownian.reshape(self.steps // factor, factor, self.dim).sum(axis=1)
        return replace(self, steps=self.steps // factor, brownian=coarse,
                       _grid=self._grid[::factor].copy())

    # -- serialisation ------------------------------------------------------
    def to_dict(self) -> dict:
        st, sm = self.small_events
        lt, lm = self.large_events
        return {
            "horizon": self.horizon - self.offset,
            "seed": self.seed,
            "replication": self.replication,
            "offset": self.offset,
            "grid": self.grid.tolist(),
            "brownian_increments": self.brownian_increments.tolist(),
            "small_events": [{"time": t, "mark": m} for t, m in zip(st.tolist(), sm.tolist())],
            "large_events": [{"time": t, "mark": m} for t, m in zip(lt.tolist(), lm.tolist())],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, data: dict, model: LevyModel) -> "NoiseRealization":
        """Rebuild a root realisation from a dump (marks matched to atoms)."""
        grid = np.asarray(data["grid"], dtype=float)
        table = model.small_marks
        atoms = []
        for ev in data["small_events"]:
            hit = np.flatnonzero(np.all(table == np.asarray(ev["mark"]), axis=1))
            if len(hit) == 0:
                raise ValueError(f"small mark {ev['mark']} is not an atom of the model")
            atoms.append(hit[0])
        d = model.dim
        return cls(
            horizon=float(grid[-1]),
            steps=len(grid) - 1,
            brownian=np.asarray(data["brownian_increments"], dtype=float).reshape(-1, d),
            small_times=np.asarray([e["time"] for e in data["small_events"]], dtype=float),
            small_atoms=np.asarray(atoms, dtype=np.int64),
            small_marks_table=table,
            large_times=np.asarray([e["time"] for e in data["large_events"]], dtype=float),
            large_marks=np.asarray([e["mark"] for e in data["large_events"]], dtype=float).reshape(-1, d),
            seed=int(data.get("seed", 0)),
            replication=int(data.get("replication", 0)),
            _grid=grid,
        )


def _event_times(rng: np.random.Generator, rate: float, horizon: float) -> np.ndarray:
    count = rng.poisson(rate * horizon) if rate > 0 else 0
    # horizon * (1 - U) with U in [0, 1) lies in (0, horizon]
    return np.sort(horizon * (1.0 - rng.random(count)))


def sample_noise(model: LevyModel, horizon: float, steps: int, seed: int,
                 replication: int = 0) -> NoiseRealization:
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    d = model.dim
    dt = horizon / steps

    rng = stream_rng(seed, replication, STREAM_BROWNIAN)
    brownian = rng.standard_normal((steps, d)) * np.sqrt(dt)

    rng = stream_rng(seed, replication, STREAM_SMALL)
    small_times = _event_times(rng, model.total_small_rate, horizon)
    if len(small_times):
        probs = model.small_rates / model.total_small_rate
        small_atoms = rng.choice(len(probs), size=len(small_times), p=probs)
    else:
        small_atoms = np.zeros(0, dtype=np.int64)

    rng = stream_rng(seed, replication, STREAM_LARGE)
    large_times = _event_times(rng, model.large_rate, horizon)
    large_marks = model.large_sampler.sample(rng, len(large_times), d).reshape(-1, d)

    # ties between streams have probability zero; resolve them deterministically
    if len(large_times) and len(small_times):
        taken = set(small_times.tolist())
        for i, t in enumerate(large_times):
            while t in taken:
                t = np.nextafter(t, np.inf) if t < horizon else np.nextafter(t, -np.inf)
            large_times[i] = t
        order = np.argsort(large_times, kind="stable")
        large_times, large_marks = large_times[order], large_marks[order]

    return NoiseRealization(
        horizon=float(horizon),
        steps=int(steps),
        brownian=brownian,
        small_times=small_times,
        small_atoms=np.asarray(small_atoms, dtype=np.int64),
        small_marks_table=model.small_marks,
        large_times=large_times,
        large_marks=large_marks,
        seed=int(seed),
        replication=int(replication),
    )
