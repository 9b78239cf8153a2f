"""Pathwise checkers for the almost-sure identities of splitting families.

Each checker returns ``None`` when the identity holds on the given window and
a :class:`ViolationWitness` otherwise.  Ties propagate as
:class:`~splitlab.paths.TieDetected`; callers treat them as skipped paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .families import (
    BracketFamily,
    Censored,
    DiagInfRule,
    IDENTITY_CHOOSER,
    SplittingFamily,
    StoppingTimeRule,
    argmin_family,
    bracket_eval,
    diag_inf,
    double_index,
    j_construction,
    stopping_iterates,
)
from .paths import IDENTITY, IncrementWindow, reflect_about, shift


@dataclass(frozen=True)
class ViolationWitness:
    check_name: str
    window: IncrementWindow
    indices: tuple[int, ...]
    lhs: Any
    rhs: Any
    detail: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> dict:
        out = {
            "check_name": self.check_name,
            "start_index": self.window.start_index,
            "values": list(self.window.values),
            "lhs": _plain(self.lhs),
            "rhs": _plain(self.rhs),
        }
        if len(self.indices) == 2:
            out["m"], out["n"] = self.indices
        elif len(self.indices) == 1:
            out["n"] = self.indices[0]
        if self.detail:
            out["detail"] = {k: _plain(v) for k, v in self.detail.items()}
        return out


class PreconditionViolation(ValueError):
    """A checker's precondition failed on this path (not a verdict on the identity)."""


def _plain(v):
    if isinstance(v, Censored):
        return {"censored": v.horizon}
    if isinstance(v, (tuple, list)):
        return [_plain(u) for u in v]
    return v


def _core(w: IncrementWindow, n: int) -> IncrementWindow:
    return w.prefix(n)


def check_eq_main(tau: SplittingFamily, w: IncrementWindow, m: int, n: int):
    """{tau_{m+n} = m} against {tau_m(r∘Δ_m) = 0} ∩ {tau_n(Δ_m) = 0}."""
    if m < 0 or n < 0 or m + n > w.end_index:
        raise IndexError(f"m+n={m + n} exceeds window")
    lhs = tau.eval(_core(w, m + n)) == m
    rhs = tau.eval(reflect_about(w, m).prefix(m)) == 0 and tau.eval(shift(w, m).prefix(n)) == 0
    if lhs == rhs:
        return None
    return ViolationWitness("eq-main", _core(w, m + n), (m, n), lhs, rhs)


def check_reflection_identity(tau: SplittingFamily, w: IncrementWindow, n: int):
    """tau_n + tau_n(r∘Δ_n) = n."""
    here = tau.eval(_core(w, n))
    there = tau.eval(reflect_about(w, n).prefix(n))
    if here + there == n:
        return None
    return ViolationWitness("reflection-identity", _core(w, n), (n,), here + there, n,
                            {"tau": here, "tau_reflected": there})


def check_honesty(tau: SplittingFamily, w: IncrementWindow, horizon: int):
    """tau_{m,n} = tau_{k,l} whenever tau_{m,n} lies in [k, l] ⊂ [m, n]."""
    if horizon > w.end_index:
        raise IndexError("horizon exceeds window")
    core = _core(w, horizon)
    d = {(m, n): double_index(tau, m, n, core)
         for m in range(horizon + 1) for n in range(m, horizon + 1)}
    for (m, n), outer in d.items():
        for k in range(m, n + 1):
            for l in range(k, n + 1):
                if k <= outer <= l and d[(k, l)] != outer:
                    return ViolationWitness("honesty", core, (m, n), outer, d[(k, l)],
                                            {"k": k, "l": l})
    return None


def _fires_after(rule: StoppingTimeRule, w: IncrementWindow, n: int) -> bool:
    hit = rule.first_hit(w)
    return isinstance(hit, Censored) or hit > n


def check_self_duality(rule: StoppingTimeRule, w: IncrementWindow, n: int):
    """{n ∈ range of iterates} = {rule on the window reflected about n fires after n}."""
    core = _core(w, n)
    lhs = n in stopping_iterates(rule, core, n)
    rhs = _fires_after(rule, reflect_about(core, n), n)
    if lhs == rhs:
        return None
    return ViolationWitness("self-duality", core, (n,), lhs, rhs)


def check_regenerative(rule: StoppingTimeRule, w: IncrementWindow, horizon: int):
    """Regeneration of the iterate range at its points, and its relation to the bracket."""
    core = _core(w, horizon)
    rng = stopping_iterates(rule, core, horizon)
    for k in rng:
        tail = tuple(k + j for j in stopping_iterates(rule, shift(core, k), horizon - k))
        expected = tuple(j for j in rng if j >= k)
        if tail != expected:
            return ViolationWitness("regenerative", core, (k,), tail, expected)
    fixed = tuple(n for n in range(horizon + 1) if bracket_eval(rule, n, core) == n)
    if fixed != rng:
        return ViolationWitness("bracket-fixed-points", core, (horizon,), fixed, rng)
    first = rule.first_hit(core)
    positive = [k for k in rng if k > 0]
    recovered = positive[0] if positive else Censored(horizon)
    if recovered != first:
        return ViolationWitness("first-iterate", core, (horizon,), recovered, first)
    return None


def check_roundtrips(tau: SplittingFamily, w: IncrementWindow, horizon: int,
                     rule: StoppingTimeRule | None = None):
    """bracket(diag_inf(tau)) = tau up to ``horizon``; with ``rule``, also
    diag_inf(bracket(rule)) = rule."""
    core = _core(w, horizon)
    if check_honesty(tau, core, horizon) is not None:
        raise PreconditionViolation(f"{tau.descriptor} is not honest on this path")
    recovered = DiagInfRule(tau)
    for n in range(horizon + 1):
        lhs = bracket_eval(recovered, n, core)
        rhs = tau.eval(core.prefix(n))
        if lhs != rhs:
            return ViolationWitness("roundtrip-family", core, (n,), lhs, rhs)
    if rule is not None:
        lhs = diag_inf(BracketFamily(rule), core)
        rhs = rule.first_hit(core)
        if lhs != rhs:
            return ViolationWitness("roundtrip-rule", core, (horizon,), lhs, rhs)
    return None


def check_recovers_minima(w: IncrementWindow, horizon: int):
    """The J-recursion with the identity endpoint chooser reproduces argmin."""
    core = _core(w, horizon)
    jfam = j_construction(IDENTITY_CHOOSER)
    amin = argmin_family(IDENTITY)
    for n in range(horizon + 1):
        lhs, rhs = jfam.eval(core.prefix(n)), amin.eval(core.prefix(n))
        if lhs != rhs:
            return ViolationWitness("recovers-minima", core, (n,), lhs, rhs)
    return None
