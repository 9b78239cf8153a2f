"""Splitting-time families, stopping-time rules and the objects derived from them.

Every family and rule evaluates a whole block of paths at once: ``x`` is a
``(paths, n)`` array of increments 1..n.  Scalar helpers wrap a single
:class:`~splitlab.paths.IncrementWindow` as a one-row block so both routes
share the same arithmetic bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .paths import (
    IDENTITY,
    NEGATION,
    IncrementWindow,
    OddMap,
    TieDetected,
    as_rows,
    parse_odd_map,
    prefix_tolerance,
    reflect_about,
    shift,
    summation_tolerance,
)

CENSORED = -1


@dataclass(frozen=True)
class Censored:
    """A stopping rule that had not fired by time ``horizon``."""

    horizon: int


class ChooserConflict(RuntimeError):
    """The two overlapping cases of the J-recursion disagreed."""

    def __init__(self, values, level, a, b):
        self.window = IncrementWindow.from_array(values)
        self.level, self.a, self.b = int(level), int(a), int(b)
        super().__init__(
            f"J-recursion cases disagree at level {level}: {a} vs {b} on {self.window.values}"
        )


def _rows(w) -> np.ndarray:
    if isinstance(w, IncrementWindow):
        return as_rows(w.core())
    return as_rows(w)


def _raise_tie(tie, what):
    if tie[0]:
        raise TieDetected((), f"tie while evaluating {what}")


# ---------------------------------------------------------------------------
# splitting families


class SplittingFamily:
    """Adapted times ``tau_n`` in ``[0, n]``; subclasses implement ``eval_batch``."""

    descriptor: str = "family"

    def eval_batch(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(tau, tie)`` for each row of the ``(paths, n)`` block."""
        raise NotImplementedError

    def eval(self, w) -> int:
        """``tau_n`` of a window (its entries 1..n); raises TieDetected."""
        x = _rows(w)
        tau, tie = self.eval_batch(x)
        _raise_tie(tie, self.descriptor)
        return int(tau[0])

    def __call__(self, w) -> int:
        return self.eval(w)

    def __repr__(self):
        return f"<{type(self).__name__} {self.descriptor}>"


def _empty_result(x):
    return np.zeros(x.shape[0], dtype=np.int64), np.zeros(x.shape[0], dtype=bool)


class ArgminFamily(SplittingFamily):
    """Time of the minimum of the walk built from ``kappa``-transformed increments."""

    def __init__(self, kappa: OddMap = IDENTITY, tie_policy: str = "flag"):
        if tie_policy not in ("flag", "earliest"):
            raise ValueError(f"unknown tie policy {tie_policy!r}")
        self.kappa = kappa
        self.tie_policy = tie_policy
        self.descriptor = f"argmin:{kappa.name}"

    def eval_batch(self, x):
        if x.shape[1] == 0:
            return _empty_result(x)
        y = self.kappa(x)
        walk = np.zeros((x.shape[0], x.shape[1] + 1))
        np.cumsum(y, axis=1, out=walk[:, 1:])
        tau = np.argmin(walk, axis=1)
        if self.tie_policy == "earliest":
            return tau, np.zeros(x.shape[0], dtype=bool)
        low = walk[np.arange(x.shape[0]), tau]
        tol = summation_tolerance(y)
        tie = (walk <= (low + tol)[:, None]).sum(axis=1) > 1
        return tau, tie

    def eval(self, w) -> int:
        x = _rows(w)
        tau, tie = self.eval_batch(x)
        if tie[0]:
            walk = np.concatenate(([0.0], np.cumsum(self.kappa(x[0]))))
            near = np.flatnonzero(walk <= walk.min() + summation_tolerance(self.kappa(x))[0])
            raise TieDetected(near, f"tie between {self.descriptor} walk values")
        return int(tau[0])


def argmin_family(kappa: OddMap = IDENTITY, tie_policy: str = "flag") -> ArgminFamily:
    return ArgminFamily(kappa, tie_policy)


class FunctionFamily(SplittingFamily):
    """Family given by a function of ``n`` alone; used for counterexamples."""

    def __init__(self, name: str, fn: Callable[[int], int]):
        self.fn = fn
        self.descriptor = f"function:{name}"

    def eval_batch(self, x):
        n = x.shape[1]
        value = int(self.fn(n))
        if not 0 <= value <= n:
            raise ValueError(f"{self.descriptor} returned {value} outside [0, {n}]")
        return np.full(x.shape[0], value, dtype=np.int64), np.zeros(x.shape[0], dtype=bool)


def _zero(n):
    return 0


def _diagonal(n):
    return n


def _parity(n):
    return n % 2


CONSTANT_ZERO = FunctionFamily("zero", _zero)
DIAGONAL = FunctionFamily("diagonal", _diagonal)
PARITY = FunctionFamily("parity", _parity)


def double_index(tau: SplittingFamily, m: int, n: int, w: IncrementWindow) -> int:
    """``m + tau_{n-m}`` evaluated on the increments m+1..n."""
    if not 0 <= m <= n or n > w.end_index or w.start_index > 0:
        raise IndexError(f"bad index pair ({m}, {n}) for window of length {len(w)}")
    return m + tau.eval(shift(w, m).prefix(n - m))


# ---------------------------------------------------------------------------
# stopping-time rules


class StoppingTimeRule:
    """Adapted first-hit rule; ``first_hit_batch`` returns CENSORED (-1) when unfired."""

    descriptor: str = "rule"

    def first_hit_batch(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def first_hit(self, w) -> int | Censored:
        x = _rows(w)
        hit, tie = self.first_hit_batch(x)
        _raise_tie(tie, self.descriptor)
        return Censored(x.shape[1]) if hit[0] == CENSORED else int(hit[0])

    def __repr__(self):
        return f"<{type(self).__name__} {self.descriptor}>"


class LadderRule(StoppingTimeRule):
    """First time the ``kappa``-walk is strictly below (or above) zero."""

    def __init__(self, kappa: OddMap = IDENTITY, direction: str = "down"):
        if direction not in ("down", "up"):
            raise ValueError("direction must be 'down' or 'up'")
        self.kappa = kappa
        self.direction = direction
        self.descriptor = f"ladder-{direction}:{kappa.name}"

    def first_hit_batch(self, x):
        rows, n = x.shape
        if n == 0:
            return np.full(rows, CENSORED, dtype=np.int64), np.zeros(rows, dtype=bool)
        y = self.kappa(x)
        walk = np.cumsum(y, axis=1)
        fired = walk < 0 if self.direction == "down" else walk > 0
        any_fired = fired.any(axis=1)
        first = np.argmax(fired, axis=1)
        hit = np.where(any_fired, first + 1, CENSORED)
        # a near-zero value at or before the decision time makes the decision fragile
        near = np.abs(walk) <= prefix_tolerance(y)
        upto = np.where(any_fired, first, n - 1)
        tie = (near & (np.arange(n)[None, :] <= upto[:, None])).any(axis=1)
        return hit.astype(np.int64), tie


def descending_ladder(kappa: OddMap = IDENTITY) -> LadderRule:
    return LadderRule(kappa, "down")


def ascending_ladder(kappa: OddMap = IDENTITY) -> LadderRule:
    return LadderRule(kappa, "up")


class ConstantRule(StoppingTimeRule):
    """Fires at a fixed time ``k``; ``k=None`` never fires."""

    def __init__(self, k: int | None):
        if k is not None and k < 1:
            raise ValueError("constant rule must fire at k >= 1")
        self.k = k
        self.descriptor = f"const:{k}" if k is not None else "never"

    def first_hit_batch(self, x):
        rows, n = x.shape
        value = CENSORED if self.k is None or self.k > n else self.k
        return np.full(rows, value, dtype=np.int64), np.zeros(rows, dtype=bool)


NEVER = ConstantRule(None)


class DiagInfRule(StoppingTimeRule):
    """First ``n >= 1`` with ``tau_n = n``; the stopping time recovered from a family."""

    def __init__(self, tau: SplittingFamily):
        self.tau = tau
        self.descriptor = f"diag_inf({tau.descriptor})"

    def first_hit_batch(self, x):
        rows, n = x.shape
        hit = np.full(rows, CENSORED, dtype=np.int64)
        tie = np.zeros(rows, dtype=bool)
        for k in range(1, n + 1):
            open_ = hit == CENSORED
            if not open_.any():
                break
            t, tk = self.tau.eval_batch(x[:, :k])
            tie |= open_ & tk
            hit[open_ & (t == k)] = k
        return hit, tie


def diag_inf(tau: SplittingFamily, w) -> int | Censored:
    return DiagInfRule(tau).first_hit(w)


def iterates_batch(rule: StoppingTimeRule, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Membership mask ``(paths, n+1)`` of the iterate range within ``[0, n]``."""
    rows, n = x.shape
    member = np.zeros((rows, n + 1), dtype=bool)
    member[:, 0] = True
    tie = np.zeros(rows, dtype=bool)
    if n == 0:
        return member, tie
    hits = np.full((rows, n), CENSORED, dtype=np.int64)
    ties = np.zeros((rows, n), dtype=bool)
    for i in range(n):
        hits[:, i], ties[:, i] = rule.first_hit_batch(x[:, i:])
    idx = np.arange(rows)
    pos = np.zeros(rows, dtype=np.int64)
    active = np.ones(rows, dtype=bool)
    while active.any():
        rows_a = idx[active]
        p = pos[active]
        tie[rows_a] |= ties[rows_a, p]
        step = hits[rows_a, p]
        fired = step != CENSORED
        newpos = p + step
        member[rows_a[fired], newpos[fired]] = True
        pos[rows_a] = np.where(fired, newpos, p)
        still = fired & (newpos < n)
        active[:] = False
        active[rows_a[still]] = True
    return member, tie


def stopping_iterates(rule: StoppingTimeRule, w: IncrementWindow, horizon: int) -> tuple[int, ...]:
    """Iterates of ``rule`` within ``[0, horizon]``, stopping at the first censoring."""
    if horizon > w.end_index:
        raise IndexError("horizon exceeds window")
    member, tie = iterates_batch(rule, as_rows(w.prefix(horizon).values))
    _raise_tie(tie, rule.descriptor)
    return tuple(int(k) for k in np.flatnonzero(member[0]))


def bracket_eval(rule: StoppingTimeRule, n: int, w: IncrementWindow) -> int:
    """Last iterate at or before ``n``."""
    return max(stopping_iterates(rule, w, n))


class BracketFamily(SplittingFamily):
    """The honest family ``n -> max([0, n] ∩ range of rule iterates)``."""

    def __init__(self, rule: StoppingTimeRule):
        self.rule = rule
        self.descriptor = f"bracket:{rule.descriptor}"

    def eval_batch(self, x):
        if x.shape[1] == 0:
            return _empty_result(x)
        member, tie = iterates_batch(self.rule, x)
        n = x.shape[1]
        last = n - np.argmax(member[:, ::-1], axis=1)
        return last.astype(np.int64), tie


# ---------------------------------------------------------------------------
# chooser sets and the J-recursion


class ChooserSet:
    """Per-level events A_n; ``holds_batch`` returns ``(holds, tie)``."""

    descriptor = "chooser"

    def holds_batch(self, level: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def level_predicate(self, level: int, w) -> bool:
        holds, _ = self.holds_batch(level, _rows(w))
        return bool(holds[0])


class EndpointChooser(ChooserSet):
    """A_n = {kappa_n-walk endpoint < 0}; ``kappa_n`` picked per level.

    ``levels`` lists maps for levels 1, 2, ...; past its end ``default`` is
    used, or the list repeats cyclically when ``default`` is None.
    """

    def __init__(self, levels: Sequence[OddMap] = (IDENTITY,), default: OddMap | None = IDENTITY):
        if not levels and default is None:
            raise ValueError("chooser needs at least one map")
        self.levels = tuple(levels)
        self.default = default
        self.descriptor = self._describe()

    def _describe(self):
        names = ",".join(k.name for k in self.levels)
        if self.default is None:
            return f"cycle={names}"
        return f"levels={names};default={self.default.name}"

    def kappa_at(self, level: int) -> OddMap:
        if level <= len(self.levels):
            return self.levels[level - 1]
        if self.default is None:
            return self.levels[(level - 1) % len(self.levels)]
        return self.default

    def is_identity(self) -> bool:
        maps = set(self.levels) | ({self.default} if self.default is not None else set())
        return maps == {IDENTITY}

    def holds_batch(self, level, x):
        y = self.kappa_at(level)(x[:, :level])
        end = y.sum(axis=1)
        tol = summation_tolerance(y)
        return end < 0, np.abs(end) <= tol


class PredicateChooser(ChooserSet):
    """Chooser from an arbitrary ``(level, increments) -> bool`` callable."""

    def __init__(self, name: str, predicate: Callable[[int, np.ndarray], bool]):
        self.predicate = predicate
        self.descriptor = name

    def holds_batch(self, level, x):
        holds = np.array([bool(self.predicate(level, row)) for row in x[:, :level]], dtype=bool)
        return holds, np.zeros(x.shape[0], dtype=bool)


IDENTITY_CHOOSER = EndpointChooser((IDENTITY,), IDENTITY)


class JFamily(SplittingFamily):
    """Honest symmetric splitting family generated level by level from a chooser.

    ``t[i][j]`` holds the family's value on the sub-window of increments
    i+1..j; every span is filled from the two shorter spans it contains.
    """

    def __init__(self, chooser: ChooserSet):
        self.chooser = chooser
        self.descriptor = f"jconstruct:{chooser.descriptor}"

    def table_batch(self, x):
        rows, n = x.shape
        zero = np.zeros(rows, dtype=np.int64)
        tie = np.zeros(rows, dtype=bool)
        t = {(i, i): zero for i in range(n + 1)}
        for s in range(1, n + 1):
            for i in range(n - s + 1):
                j = i + s
                a = t[(i, j - 1)]
                b = 1 + t[(i + 1, j)]
                a_inner = (a >= 1) & (a <= s - 1)
                b_inner = (b >= 1) & (b <= s - 1)
                both = a_inner & b_inner & (a != b)
                if both.any():
                    r = int(np.flatnonzero(both)[0])
                    raise ChooserConflict(x[r, i:j], s, a[r], b[r])
                undecided = ~a_inner & ~b_inner
                holds, ctie = self.chooser.holds_batch(s, x[:, i:j])
                tie |= undecided & ctie
                t[(i, j)] = np.where(a_inner, b, np.where(b_inner, a, np.where(holds, s, 0)))
        return t, tie

    def eval_batch(self, x):
        n = x.shape[1]
        t, tie = self.table_batch(x)
        return t[(0, n)], tie


def j_construction(chooser: ChooserSet) -> JFamily:
    return JFamily(chooser)


def validate_chooser(chooser: ChooserSet, w: IncrementWindow, n: int) -> str:
    """``'valid'``, ``'both_hold'`` or ``'neither_holds'`` for A_n on w and its reflection."""
    here = chooser.level_predicate(n, w.prefix(n))
    there = chooser.level_predicate(n, reflect_about(w, n).prefix(n))
    if here and there:
        return "both_hold"
    if not here and not there:
        return "neither_holds"
    return "valid"


# ---------------------------------------------------------------------------
# plain-text descriptors


def parse_chooser(spec: str) -> EndpointChooser:
    """``identity``, ``cycle=k1,k2``, or ``levels=k1,k2[;default=k]``."""
    spec = spec.strip()
    if "=" not in spec:
        return EndpointChooser((parse_odd_map(spec),), parse_odd_map(spec))
    parts = dict(_split_kv(p) for p in spec.split(";") if p.strip())
    unknown = set(parts) - {"cycle", "levels", "default"}
    if unknown or ("cycle" in parts) == ("levels" in parts):
        raise ValueError(f"bad chooser spec {spec!r}")
    if "cycle" in parts:
        if "default" in parts:
            raise ValueError("cycle chooser takes no default")
        return EndpointChooser(tuple(parse_odd_map(k) for k in parts["cycle"].split(",")), None)
    default = parse_odd_map(parts.get("default", "identity"))
    return EndpointChooser(tuple(parse_odd_map(k) for k in parts["levels"].split(",")), default)


def _split_kv(part):
    key, _, value = part.partition("=")
    return key.strip(), value.strip()


def parse_rule(spec: str) -> StoppingTimeRule:
    """``ladder-down:<kappa>``, ``ladder-up:<kappa>``, ``const:<k>`` or ``never``."""
    spec = spec.strip()
    if spec == "never":
        return NEVER
    kind, _, rest = spec.partition(":")
    if kind in ("ladder-down", "ladder-up"):
        return LadderRule(parse_odd_map(rest or "identity"), kind.split("-")[1])
    if kind == "const":
        try:
            return ConstantRule(int(rest))
        except ValueError:
            raise ValueError(f"bad constant rule {spec!r}") from None
    raise ValueError(f"unknown stopping rule {spec!r}")


def parse_family(spec: str, tie_policy: str = "flag") -> SplittingFamily:
    """``argmin:<kappa>``, ``bracket:<kappa>`` (descending ladder of the
    kappa-walk), ``bracket:<rule spec>`` or ``jconstruct:<chooser spec>``."""
    kind, _, rest = spec.strip().partition(":")
    if kind == "argmin":
        return ArgminFamily(parse_odd_map(rest or "identity"), tie_policy)
    if kind == "bracket":
        rest = rest or "identity"
        if rest.startswith(("ladder-", "const:")) or rest == "never":
            return BracketFamily(parse_rule(rest))
        return BracketFamily(descending_ladder(parse_odd_map(rest)))
    if kind == "jconstruct":
        return JFamily(parse_chooser(rest or "identity"))
    raise ValueError(f"unknown family kind {kind!r}")


__all__ = [
    "CENSORED", "Censored", "ChooserConflict", "SplittingFamily", "ArgminFamily",
    "argmin_family", "FunctionFamily", "CONSTANT_ZERO", "DIAGONAL", "PARITY",
    "double_index", "StoppingTimeRule", "LadderRule", "descending_ladder",
    "ascending_ladder", "ConstantRule", "NEVER", "DiagInfRule", "diag_inf",
    "iterates_batch", "stopping_iterates", "bracket_eval", "BracketFamily",
    "ChooserSet", "EndpointChooser", "PredicateChooser", "IDENTITY_CHOOSER",
    "JFamily", "j_construction", "validate_chooser", "parse_chooser",
    "parse_rule", "parse_family", "NEGATION",
]
