"""Vectorized path sweeps of the pathwise checks.

A sweep evaluates a check on a ``(paths, horizon)`` block at once.  Rows the
batch route flags are re-checked one at a time by the scalar checkers in
:mod:`splitlab.verify`, which produce the stored witnesses; a flagged row the
scalar route does not reproduce is an internal error.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import verify
from .families import (
    CENSORED,
    ArgminFamily,
    BracketFamily,
    ChooserConflict,
    DiagInfRule,
    EndpointChooser,
    IDENTITY_CHOOSER,
    JFamily,
    SplittingFamily,
    StoppingTimeRule,
    iterates_batch,
    validate_chooser,
)
from .paths import IDENTITY, NEGATION, IncrementWindow, TieDetected, reflect_rows
from .stats import IncrementLaw, sample_paths


@dataclass
class CheckTally:
    name: str
    n_paths: int = 0
    n_ties: int = 0
    n_violations: int = 0
    n_precondition: int = 0
    witnesses: list = field(default_factory=list)
    statistic: float | None = None

    def merge(self, other: "CheckTally", max_witnesses: int) -> "CheckTally":
        room = max(0, max_witnesses - len(self.witnesses))
        return CheckTally(
            self.name,
            self.n_paths + other.n_paths,
            self.n_ties + other.n_ties,
            self.n_violations + other.n_violations,
            self.n_precondition + other.n_precondition,
            self.witnesses + other.witnesses[:room],
            _merge_stat(self, other),
        )

    @property
    def status(self) -> str:
        if self.n_violations or self.witnesses:
            return "fail"
        if self.n_paths and self.n_ties + self.n_precondition >= self.n_paths:
            return "tie-skip"
        return "pass"


def _merge_stat(a: CheckTally, b: CheckTally):
    # statistics carried by sweeps are path fractions; merge weighted by paths
    if a.statistic is None:
        return b.statistic
    if b.statistic is None:
        return a.statistic
    return (a.statistic * a.n_paths + b.statistic * b.n_paths) / (a.n_paths + b.n_paths)


class BlockCache:
    """Family values on every sub-window and reflected prefix of a block."""

    def __init__(self, tau: SplittingFamily, x: np.ndarray):
        self.tau, self.x = tau, x
        self.horizon = x.shape[1]
        self._sub, self._ref = {}, {}

    def sub(self, m, n):
        """tau_{n-m} on increments m+1..n (relative value)."""
        if (m, n) not in self._sub:
            self._sub[(m, n)] = self.tau.eval_batch(self.x[:, m:n])
        return self._sub[(m, n)]

    def reflected(self, m):
        if m not in self._ref:
            self._ref[m] = self.tau.eval_batch(reflect_rows(self.x[:, :m]))
        return self._ref[m]


def _window(row) -> IncrementWindow:
    return IncrementWindow.from_array(row)


def _collect(name, x, violated, tie, witness_fn, max_witnesses, precondition=None):
    violated = violated & ~tie
    if precondition is not None:
        violated &= ~precondition
    tally = CheckTally(name, x.shape[0], int(tie.sum()), int(violated.sum()),
                       int(precondition.sum()) if precondition is not None else 0)
    for r in np.flatnonzero(violated)[:max_witnesses]:
        w = witness_fn(_window(x[r]))
        if w is None:
            raise RuntimeError(f"{name}: batch route flagged row {r} but scalar check passed")
        tally.witnesses.append(w)
    return tally


def _first_witness(check, pairs):
    def find(w):
        for idx in pairs:
            out = check(w, *idx)
            if out is not None:
                return out
        return None
    return find


def sweep_eq_main(cache: BlockCache, max_witnesses=10) -> CheckTally:
    H = cache.horizon
    rows = cache.x.shape[0]
    violated = np.zeros(rows, dtype=bool)
    tie = np.zeros(rows, dtype=bool)
    pairs = [(m, n) for m in range(H + 1) for n in range(H + 1 - m)]
    for m, n in pairs:
        whole, t1 = cache.sub(0, m + n)
        back, t2 = cache.reflected(m)
        fwd, t3 = cache.sub(m, m + n)
        lhs = whole == m
        rhs = (back == 0) & (fwd == 0)
        violated |= lhs != rhs
        tie |= t1 | t2 | t3
    return _collect("eq-main", cache.x, violated, tie,
                    _first_witness(partial(verify.check_eq_main, cache.tau), pairs), max_witnesses)


def sweep_reflection(cache: BlockCache, max_witnesses=10) -> CheckTally:
    H = cache.horizon
    rows = cache.x.shape[0]
    violated = np.zeros(rows, dtype=bool)
    tie = np.zeros(rows, dtype=bool)
    for n in range(H + 1):
        here, t1 = cache.sub(0, n)
        there, t2 = cache.reflected(n)
        violated |= here + there != n
        tie |= t1 | t2
    return _collect("reflection-identity", cache.x, violated, tie,
                    _first_witness(partial(verify.check_reflection_identity, cache.tau),
                                   [(n,) for n in range(H + 1)]), max_witnesses)


def honesty_mask(cache: BlockCache) -> tuple[np.ndarray, np.ndarray]:
    H = cache.horizon
    rows = cache.x.shape[0]
    dbl = np.zeros((rows, H + 1, H + 1), dtype=np.int64)
    tie = np.zeros(rows, dtype=bool)
    for m in range(H + 1):
        for n in range(m, H + 1):
            val, t = cache.sub(m, n)
            dbl[:, m, n] = m + val
            tie |= t
    violated = np.zeros(rows, dtype=bool)
    for m in range(H + 1):
        for n in range(m, H + 1):
            outer = dbl[:, m, n]
            for k in range(m, n + 1):
                inside_k = outer >= k
                for l in range(k, n + 1):
                    violated |= inside_k & (outer <= l) & (dbl[:, k, l] != outer)
    return violated, tie


def sweep_honesty(cache: BlockCache, max_witnesses=10) -> CheckTally:
    violated, tie = honesty_mask(cache)
    H = cache.horizon
    return _collect("honesty", cache.x, violated, tie,
                    lambda w: verify.check_honesty(cache.tau, w, H), max_witnesses)


def sweep_self_duality(rule: StoppingTimeRule, x: np.ndarray, max_witnesses=10) -> CheckTally:
    rows, H = x.shape
    violated = np.zeros(rows, dtype=bool)
    tie = np.zeros(rows, dtype=bool)
    for n in range(H + 1):
        member, t1 = iterates_batch(rule, x[:, :n])
        hit, t2 = rule.first_hit_batch(reflect_rows(x[:, :n]))
        rhs = (hit == CENSORED) | (hit > n)
        violated |= member[:, n] != rhs
        tie |= t1 | t2
    check = partial(verify.check_self_duality, rule)
    return _collect("self-duality", x, violated, tie,
                    _first_witness(check, [(n,) for n in range(H + 1)]), max_witnesses)


def sweep_regenerative(rule: StoppingTimeRule, x: np.ndarray, max_witnesses=10) -> CheckTally:
    rows, H = x.shape
    member, tie = iterates_batch(rule, x)
    violated = np.zeros(rows, dtype=bool)
    for k in range(H + 1):
        sub, t = iterates_batch(rule, x[:, k:])
        at_k = member[:, k]
        tie |= at_k & t
        violated |= at_k & (sub != member[:, k:]).any(axis=1)
    bracket = BracketFamily(rule)
    for n in range(H + 1):
        val, t = bracket.eval_batch(x[:, :n])
        tie |= t
        violated |= (val == n) != member[:, n]
    first, t = rule.first_hit_batch(x)
    tie |= t
    positive = member[:, 1:]
    recovered = np.where(positive.any(axis=1), np.argmax(positive, axis=1) + 1, CENSORED)
    violated |= recovered != first
    return _collect("regenerative", x, violated, tie,
                    lambda w: verify.check_regenerative(rule, w, H), max_witnesses)


def sweep_roundtrips(cache: BlockCache, rule: StoppingTimeRule | None = None,
                     max_witnesses=10) -> CheckTally:
    x, H = cache.x, cache.horizon
    dishonest, tie = honesty_mask(cache)
    rows = x.shape[0]
    violated = np.zeros(rows, dtype=bool)
    recovered = BracketFamily(DiagInfRule(cache.tau))
    for n in range(H + 1):
        lhs, t1 = recovered.eval_batch(x[:, :n])
        rhs, t2 = cache.sub(0, n)
        violated |= lhs != rhs
        tie |= t1 | t2
    if rule is not None:
        lhs, t1 = DiagInfRule(BracketFamily(rule)).first_hit_batch(x)
        rhs, t2 = rule.first_hit_batch(x)
        violated |= lhs != rhs
        tie |= t1 | t2
    precondition = dishonest & ~tie
    return _collect("roundtrip", x, violated, tie,
                    lambda w: verify.check_roundtrips(cache.tau, w, H, rule), max_witnesses,
                    precondition=precondition)


def sweep_recovers_minima(x: np.ndarray, max_witnesses=10) -> CheckTally:
    rows, H = x.shape
    table, tie = JFamily(IDENTITY_CHOOSER).table_batch(x)
    amin = ArgminFamily(IDENTITY)
    violated = np.zeros(rows, dtype=bool)
    for n in range(H + 1):
        ref, t = amin.eval_batch(x[:, :n])
        tie |= t
        violated |= table[(0, n)] != ref
    return _collect("recovers-minima", x, violated, tie,
                    lambda w: verify.check_recovers_minima(w, H), max_witnesses)


def sweep_chooser_validity(chooser, x: np.ndarray, max_witnesses=10) -> CheckTally:
    rows, H = x.shape
    violated = np.zeros(rows, dtype=bool)
    tie = np.zeros(rows, dtype=bool)
    for n in range(1, H + 1):
        here, t1 = chooser.holds_batch(n, x[:, :n])
        there, t2 = chooser.holds_batch(n, reflect_rows(x[:, :n]))
        violated |= here == there
        tie |= t1 | t2

    return _collect("chooser-validity", x, violated, tie,
                    lambda w: chooser_witness(chooser, w, H), max_witnesses)


def chooser_witness(chooser, w: IncrementWindow, horizon: int):
    for n in range(1, horizon + 1):
        verdict = validate_chooser(chooser, w, n)
        if verdict != "valid":
            return verify.ViolationWitness("chooser-validity", w, (n,), verdict, "valid")
    return None


def sweep_extrema_distinctness(tau: SplittingFamily, x: np.ndarray) -> CheckTally:
    """Fraction of length-2 windows on which ``tau`` differs from both the
    time of the minimum and the time of the maximum."""
    y = x[:, :2]
    mine, t0 = tau.eval_batch(y)
    lo, t1 = ArgminFamily(IDENTITY).eval_batch(y)
    hi, t2 = ArgminFamily(NEGATION).eval_batch(y)
    tie = t0 | t1 | t2
    differs = (mine != lo) & (mine != hi) & ~tie
    kept = int((~tie).sum())
    tally = CheckTally("differs-from-extrema", x.shape[0], int(tie.sum()))
    tally.statistic = float(differs.sum() / kept) if kept else 0.0
    return tally


# ---------------------------------------------------------------------------
# suites


SUITES = {
    "verify-characterization": ("eq-main", "reflection-identity", "honesty"),
    "verify-selfdual": ("self-duality", "regenerative"),
    "verify-roundtrip": ("roundtrip",),
    "verify-jconstruct": ("chooser-validity", "eq-main", "reflection-identity", "honesty",
                          "recovers-minima", "differs-from-extrema"),
}


def run_block(suite: str, tau: SplittingFamily | None, rule: StoppingTimeRule | None,
              x: np.ndarray, max_witnesses: int = 10) -> list[CheckTally]:
    out = []
    cache = BlockCache(tau, x) if tau is not None else None
    try:
        if suite == "verify-characterization":
            out += [sweep_eq_main(cache, max_witnesses), sweep_reflection(cache, max_witnesses),
                    sweep_honesty(cache, max_witnesses)]
        elif suite == "verify-selfdual":
            out += [sweep_self_duality(rule, x, max_witnesses),
                    sweep_regenerative(rule, x, max_witnesses)]
        elif suite == "verify-roundtrip":
            out.append(sweep_roundtrips(cache, rule, max_witnesses))
        elif suite == "verify-jconstruct":
            out.append(sweep_chooser_validity(tau.chooser, x, max_witnesses))
            out += [sweep_eq_main(cache, max_witnesses), sweep_reflection(cache, max_witnesses),
                    sweep_honesty(cache, max_witnesses)]
            chooser = tau.chooser
            if isinstance(chooser, EndpointChooser) and chooser.is_identity():
                out.append(sweep_recovers_minima(x, max_witnesses))
            elif x.shape[1] >= 2:
                out.append(sweep_extrema_distinctness(tau, x))
        else:
            raise ValueError(f"unknown suite {suite!r}")
    except ChooserConflict as exc:
        w = verify.ViolationWitness("chooser-conflict", exc.window, (exc.level,), exc.a, exc.b)
        out.append(CheckTally("chooser-conflict", x.shape[0], 0, 1, 0, [w]))
    return out


def _run_chunk(suite, tau, rule, law, horizon, seed, chunk_size, paths, max_witnesses, c):
    size = min(chunk_size, paths - c * chunk_size)
    x = sample_paths(law, size, horizon, seed, stream=c)
    return run_block(suite, tau, rule, x, max_witnesses)


def run_suite(suite: str, law: IncrementLaw, horizon: int, paths: int, seed: int,
              tau: SplittingFamily | None = None, rule: StoppingTimeRule | None = None,
              chunk_size: int = 2000, workers: int = 1, max_witnesses: int = 10) -> list[CheckTally]:
    """Run a verification suite over ``paths`` sampled paths.

    Chunk ``c`` of paths is drawn from stream ``c`` of ``seed``, so results
    depend on the chunk size but not on the worker count.
    """
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}")
    n_chunks = -(-paths // chunk_size)
    job = partial(_run_chunk, suite, tau, rule, law, horizon, seed, chunk_size, paths, max_witnesses)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(n_chunks)))
    else:
        parts = [job(c) for c in range(n_chunks)]
    merged: dict[str, CheckTally] = {}
    for part in parts:
        for tally in part:
            prev = merged.get(tally.name)
            merged[tally.name] = tally if prev is None else prev.merge(tally, max_witnesses)
    return list(merged.values())


def replay_witness(check: str, witness: dict, tau: SplittingFamily | None,
                   rule: StoppingTimeRule | None):
    """Re-run the scalar check named by a report witness on its stored window."""
    w = IncrementWindow(witness["start_index"], tuple(witness["values"]))
    H = len(w)
    try:
        if check == "eq-main":
            return verify.check_eq_main(tau, w, witness["m"], witness["n"])
        if check == "reflection-identity":
            return verify.check_reflection_identity(tau, w, witness["n"])
        if check == "honesty":
            return verify.check_honesty(tau, w, H)
        if check == "self-duality":
            return verify.check_self_duality(rule, w, witness["n"])
        if check == "regenerative":
            return verify.check_regenerative(rule, w, H)
        if check == "roundtrip":
            return verify.check_roundtrips(tau, w, H, rule)
        if check == "recovers-minima":
            return verify.check_recovers_minima(w, H)
        if check == "chooser-validity":
            return chooser_witness(tau.chooser, w, H)
        if check == "chooser-conflict":
            tau.eval(w)
            return None
    except ChooserConflict as exc:
        return verify.ViolationWitness("chooser-conflict", exc.window, (exc.level,), exc.a, exc.b)
    except TieDetected:
        return None
    raise ValueError(f"cannot replay check {check!r}")
