"""Finite increment windows and the pathwise actions of shifts, reflections
and odd transformations.

A window holds the increments ``xi_{s+1}, ..., xi_{s+len}`` of a walk, where
``s`` is ``start_index``.  Negative ``start_index`` values provide a left
buffer of increments that precede time 0.  The involution on increments is
fixed to real negation.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

EPS = np.finfo(float).eps


class TieDetected(ArithmeticError):
    """Two walk values (or a walk value and a threshold) could not be ordered."""

    def __init__(self, indices, message: str = "tie between walk values"):
        self.indices = tuple(int(i) for i in indices)
        super().__init__(f"{message} at indices {self.indices}")


@dataclass(frozen=True)
class IncrementWindow:
    start_index: int = 0
    values: tuple[float, ...] = ()

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("window entries must be finite reals")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "start_index", int(self.start_index))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end_index(self) -> int:
        return self.start_index + len(self.values)

    def entry(self, k: int) -> float:
        """Increment with global index ``k``."""
        pos = k - self.start_index - 1
        if not 0 <= pos < len(self.values):
            raise IndexError(f"index {k} outside window ({self.start_index}, {self.end_index}]")
        return self.values[pos]

    def core(self) -> np.ndarray:
        """Entries with index >= 1 as a float array."""
        if self.start_index > 0:
            raise IndexError("window does not start at or before index 1")
        return np.asarray(self.values[-self.start_index:], dtype=float)

    def prefix(self, n: int) -> "IncrementWindow":
        """The window of entries 1..n, anchored at 0."""
        if n < 0 or self.start_index > 0 or n > self.end_index:
            raise IndexError(f"prefix {n} not covered by window ({self.start_index}, {self.end_index}]")
        lo = -self.start_index
        return IncrementWindow(0, self.values[lo:lo + n])

    @classmethod
    def from_array(cls, values, start_index: int = 0) -> "IncrementWindow":
        return cls(start_index, tuple(np.asarray(values, dtype=float).tolist()))


@dataclass(frozen=True)
class OddMap:
    name: str
    eval: Callable[[np.ndarray], np.ndarray] = field(compare=False)

    def __call__(self, x):
        return self.eval(np.asarray(x, dtype=float))

    def spot_check(self, samples: int = 1000, seed: int = 0) -> bool:
        """Sampled check of ``k(-x) == -k(x)``; exact for the built-in maps."""
        rng = np.random.default_rng(seed)
        x = np.concatenate([rng.standard_normal(samples), rng.standard_cauchy(samples)])
        return bool(np.array_equal(self(-x), -self(x)))


def _identity(x):
    return x


def _negation(x):
    return -x


def _cubepoly(x):
    return x * x * x - x


def _sine(x):
    return np.sin(x)


def _signpow(x, power):
    return np.sign(x) * np.abs(x) ** power


IDENTITY = OddMap("identity", _identity)
NEGATION = OddMap("negation", _negation)
CUBEPOLY = OddMap("cubepoly", _cubepoly)
SINE = OddMap("sine", _sine)

BUILTIN_MAPS = {m.name: m for m in (IDENTITY, NEGATION, CUBEPOLY, SINE)}


def signpow(power: float) -> OddMap:
    if not power > 0:
        raise ValueError("signpow exponent must be positive")
    return OddMap(f"signpow:{power!r}", functools.partial(_signpow, power=float(power)))


def parse_odd_map(spec: str) -> OddMap:
    """``identity``, ``negation``, ``cubepoly``, ``sine`` or ``signpow:<p>``."""
    spec = spec.strip()
    if spec in BUILTIN_MAPS:
        return BUILTIN_MAPS[spec]
    if spec.startswith("signpow:"):
        try:
            power = float(spec.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad signpow exponent in {spec!r}") from None
        return signpow(power)
    raise ValueError(f"unknown odd map {spec!r}")


@dataclass(frozen=True)
class WalkView:
    values: tuple[float, ...]

    def __getitem__(self, j):
        return self.values[j]

    def __len__(self):
        return len(self.values)


def walk_values(w: IncrementWindow) -> WalkView:
    """0-anchored partial sums of the window entries."""
    return WalkView((0.0,) + tuple(np.cumsum(w.values).tolist()))


def shift(w: IncrementWindow, m: int) -> IncrementWindow:
    """Increments seen from time ``m``: entries m+1.. re-anchored at index 0."""
    if m < 0 or m > w.end_index or w.start_index > m:
        raise IndexError(f"shift by {m} outside window ({w.start_index}, {w.end_index}]")
    return IncrementWindow(0, w.values[m - w.start_index:])


def reflect_about(w: IncrementWindow, m: int) -> IncrementWindow:
    """Negate-and-reverse about ``m``: output entry k is ``-entry(m - k + 1)``.

    Left-buffer entries (index <= 0) extend the output beyond length ``m``.
    """
    if m < 0 or w.start_index > 0 or m > w.end_index:
        raise IndexError(f"window ({w.start_index}, {w.end_index}] does not cover 1..{m}")
    head = w.values[:m - w.start_index]
    return IncrementWindow(0, tuple(-v for v in reversed(head)))


def apply_odd_map(w: IncrementWindow, kappa: OddMap) -> IncrementWindow:
    return IncrementWindow(w.start_index, tuple(kappa(np.asarray(w.values, dtype=float)).tolist()))


def reflect_rows(x: np.ndarray) -> np.ndarray:
    """Batch reflection of a (paths, m) block about m."""
    return -x[:, ::-1]


def summation_tolerance(x: np.ndarray) -> np.ndarray:
    """Per-row bound on the rounding gap between two partial sums of ``x``.

    Walk values closer than this are treated as tied: their order cannot be
    trusted to survive re-summation on a shifted or reflected window.
    """
    n = x.shape[1]
    return 2.0 * (n + 1) * EPS * np.abs(x).sum(axis=1)


def prefix_tolerance(x: np.ndarray) -> np.ndarray:
    """Like :func:`summation_tolerance` but per prefix length (adapted)."""
    n = x.shape[1]
    steps = np.arange(1, n + 1, dtype=float)
    return 2.0 * (steps + 1) * EPS * np.cumsum(np.abs(x), axis=1)


def as_rows(values: Sequence[float] | np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(1, -1)
