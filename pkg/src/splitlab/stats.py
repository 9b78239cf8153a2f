"""Sampling of symmetric increment laws, the splitting experiment, and the
statistical tests used to check distributional claims."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import special
from scipy.stats import chi2

from .families import SplittingFamily
from .paths import IncrementWindow, walk_values

KS_MIN_SAMPLE = 50
SUSPECT_TIE_FRACTION = 1e-6


# ---------------------------------------------------------------------------
# laws and generators


@dataclass(frozen=True)
class IncrementLaw:
    """A symmetric increment law; diffuse kinds draw a magnitude and an
    independent fair sign, so the law equals its negation by construction."""

    kind: str
    scale: float = 1.0

    KINDS = ("gaussian", "uniform", "laplace", "cauchy", "rademacher")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown law {self.kind!r}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError("law scale must be positive and finite")

    @property
    def diffuse(self) -> bool:
        return self.kind != "rademacher"

    @property
    def spec(self) -> str:
        return self.kind if self.kind == "rademacher" else f"{self.kind}:{self.scale!r}"

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.kind == "rademacher":
            return 2.0 * rng.integers(0, 2, size=shape) - 1.0
        if self.kind == "gaussian":
            mag = np.abs(rng.standard_normal(shape))
        elif self.kind == "uniform":
            mag = rng.random(shape)
        elif self.kind == "laplace":
            mag = rng.standard_exponential(shape)
        else:
            mag = np.abs(rng.standard_cauchy(shape))
        sign = np.where(rng.integers(0, 2, size=shape) == 1, 1.0, -1.0)
        return self.scale * sign * mag


def parse_law(spec: str) -> IncrementLaw:
    """``gaussian:<sigma>``, ``uniform:<a>``, ``laplace:<b>``, ``cauchy:<c>``, ``rademacher``."""
    kind, _, rest = spec.strip().partition(":")
    if kind == "rademacher":
        if rest:
            raise ValueError("rademacher takes no parameter")
        return IncrementLaw("rademacher")
    try:
        scale = float(rest) if rest else 1.0
    except ValueError:
        raise ValueError(f"bad law parameter in {spec!r}") from None
    return IncrementLaw(kind, scale)


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator for ``(seed, stream)``; distinct streams are independent."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def sample_increments(law: IncrementLaw, count: int, seed: int, stream: int = 0) -> IncrementWindow:
    if count < 0:
        raise ValueError("count must be nonnegative")
    return IncrementWindow.from_array(law.sample(stream_rng(seed, stream), count))


def sample_paths(law: IncrementLaw, paths: int, length: int, seed: int, stream: int) -> np.ndarray:
    """A ``(paths, length)`` block of i.i.d. increments from one stream."""
    return law.sample(stream_rng(seed, stream), (paths, length))


def geometric_cdf(p: float, k):
    """P(g <= k) = 1 - (1-p)^(k+1)."""
    return -np.expm1((np.asarray(k, dtype=float) + 1.0) * math.log1p(-p))


def sample_geometric(p: float, u):
    """Inverse-CDF geometric time on {0, 1, ...}: least k with u < P(g <= k)."""
    if not 0.0 < p < 1.0:
        raise ValueError("geometric parameter must lie in (0, 1)")
    u = np.asarray(u, dtype=float)
    k = np.floor(np.log1p(-u) / math.log1p(-p))
    k = np.maximum(k, 0.0)
    # repair rounding at the cdf boundaries
    k = np.where((k > 0) & (u < geometric_cdf(p, k - 1)), k - 1, k)
    k = np.where(u >= geometric_cdf(p, k), k + 1, k)
    k = k.astype(np.int64)
    return int(k) if k.ndim == 0 else k


# ---------------------------------------------------------------------------
# the splitting experiment


@dataclass(frozen=True)
class PieceRecord:
    tau: int
    co_tau: int
    pre: IncrementWindow
    post: IncrementWindow

    @property
    def g(self) -> int:
        return self.tau + self.co_tau


@dataclass
class SplitRun:
    records: list[PieceRecord]
    trials: int
    n_ties: int

    @property
    def tie_fraction(self) -> float:
        return self.n_ties / self.trials if self.trials else 0.0


def _geometric_blocks(law, p, buffer, trials, seed, block_size) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Blocks of ``(g, increments)``; row r's increments -buffer+1 .. g+buffer
    sit in columns 0 .. g+2*buffer-1."""
    done, stream = 0, 0
    while done < trials:
        size = min(block_size, trials - done)
        rng = stream_rng(seed, stream)
        g = sample_geometric(p, rng.random(size))
        x = law.sample(rng, (size, int(g.max()) + 2 * buffer))
        yield g, x
        done += size
        stream += 1


def _taus_by_length(tau: SplittingFamily, g: np.ndarray, core: np.ndarray):
    out = np.zeros(len(g), dtype=np.int64)
    tie = np.zeros(len(g), dtype=bool)
    for n in np.unique(g):
        rows = np.flatnonzero(g == n)
        out[rows], tie[rows] = tau.eval_batch(core[rows, :n])
    return out, tie


def splitting_experiment(tau: SplittingFamily, law: IncrementLaw, p: float, buffer: int,
                         trials: int, seed: int, block_size: int = 4096) -> SplitRun:
    """Split each path at ``tau_g`` into a reflected pre-piece and a shifted
    post-piece, each padded with ``buffer`` increments beyond the core."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if buffer < 0 or trials < 0:
        raise ValueError("buffer and trials must be nonnegative")
    records, ties = [], 0
    for g, x in _geometric_blocks(law, p, buffer, trials, seed, block_size):
        core = x[:, buffer:]
        t, tie = _taus_by_length(tau, g, core)
        ties += int(tie.sum())
        for r in np.flatnonzero(~tie):
            k, n = int(t[r]), int(g[r])
            row = x[r]
            pre = -row[:k + buffer][::-1]
            post = row[buffer + k:buffer + n + buffer]
            records.append(PieceRecord(k, n - k, IncrementWindow.from_array(pre),
                                       IncrementWindow.from_array(post)))
    return SplitRun(records, trials, ties)


def split_record(w: IncrementWindow, g: int, tau: SplittingFamily, buffer: int) -> PieceRecord:
    """Single-window version of the split; ``w`` covers -buffer+1 .. g+buffer."""
    k = tau.eval(w.prefix(g))
    vals = w.values
    pre = tuple(-v for v in reversed(vals[:k + buffer]))
    post = vals[buffer + k:buffer + g + buffer]
    return PieceRecord(k, g - k, IncrementWindow(0, pre), IncrementWindow(0, post))


def piece_functionals(w: IncrementWindow, j: int) -> np.ndarray:
    """(endpoint, min, max, #positive increments) of the walk over the first ``j`` steps."""
    if j < 0 or j > len(w):
        raise IndexError("depth exceeds piece length")
    walk = np.asarray(walk_values(IncrementWindow(0, w.values[:j])).values)
    positives = sum(1 for v in w.values[:j] if v > 0)
    return np.array([walk[-1], walk.min(), walk.max(), float(positives)])


def _functionals_rows(heads: np.ndarray) -> np.ndarray:
    rows, j = heads.shape
    walk = np.zeros((rows, j + 1))
    np.cumsum(heads, axis=1, out=walk[:, 1:])
    return np.column_stack([walk[:, -1], walk.min(axis=1), walk.max(axis=1),
                            (heads > 0).sum(axis=1).astype(float)])


def functional_table(run: SplitRun, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``(tau, pre functionals)`` and ``(co_tau, post functionals)``;
    row-wise equal to :func:`piece_functionals` at ``j = depth``."""
    recs = run.records
    pre = np.array([r.pre.values[:depth] for r in recs], dtype=float).reshape(len(recs), depth)
    post = np.array([r.post.values[:depth] for r in recs], dtype=float).reshape(len(recs), depth)
    tau = np.array([r.tau for r in recs], dtype=float)
    co = np.array([r.co_tau for r in recs], dtype=float)
    return (np.column_stack([tau, _functionals_rows(pre)]),
            np.column_stack([co, _functionals_rows(post)]))


# ---------------------------------------------------------------------------
# tests


@dataclass
class TestReport:
    __test__ = False

    name: str
    statistic: float
    p_value: float | None
    sizes: tuple[int, ...]
    alpha: float = 0.01
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if "pass" in self.extra:
            return bool(self.extra["pass"])
        return self.p_value is not None and self.p_value >= self.alpha


def ks_two_sample(a: Sequence[float], b: Sequence[float], alpha: float = 0.01) -> TestReport:
    """Two-sample KS distance with the asymptotic Kolmogorov p-value."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("KS test needs two nonempty samples")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    n_eff = a.size * b.size / (a.size + b.size)
    p = float(min(1.0, max(0.0, special.kolmogorov(math.sqrt(n_eff) * d))))
    return TestReport("ks", d, p, (a.size, b.size), alpha)


def chi_square_gof(counts: Sequence[int], probs: Sequence[float], alpha: float = 0.01) -> TestReport:
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if counts.shape != probs.shape or counts.ndim != 1:
        raise ValueError("counts and probs must be equal-length vectors")
    if np.any(counts < 0) or np.any(probs < 0):
        raise ValueError("counts and probabilities must be nonnegative")
    if abs(probs.sum() - 1.0) > 1e-12:
        raise ValueError("probabilities must sum to 1")
    total = counts.sum()
    expected = total * probs
    if np.any((expected == 0) & (counts > 0)):
        raise ValueError("observed counts in a zero-probability bin")
    used = expected > 0
    stat = float(np.sum((counts[used] - expected[used]) ** 2 / expected[used]))
    dof = int(used.sum()) - 1
    p = float(chi2.sf(stat, dof)) if dof > 0 else 1.0
    return TestReport("chi-square", stat, p, (int(total),), alpha, {"dof": dof})


def _centered_distances(z: np.ndarray) -> np.ndarray:
    d = np.sqrt(((z[:, None, :] - z[None, :, :]) ** 2).sum(axis=-1))
    return d - d.mean(axis=0)[None, :] - d.mean(axis=1)[:, None] + d.mean()


def distance_correlation(x, y) -> float:
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    y = np.asarray(y, dtype=float).reshape(len(y), -1)
    a, b = _centered_distances(x), _centered_distances(y)
    dxy, dxx, dyy = (a * b).mean(), (a * a).mean(), (b * b).mean()
    if dxx <= 0 or dyy <= 0:
        return 0.0
    return float(math.sqrt(max(dxy, 0.0) / math.sqrt(dxx * dyy)))


def _standardize(z):
    z = np.asarray(z, dtype=float)
    sd = z.std(axis=0)
    return (z - z.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def permutation_independence(left, right, B: int = 999, seed: int = 0,
                             alpha: float = 0.01, standardize: bool = True) -> TestReport:
    """Distance-correlation permutation test of independence between paired rows."""
    x = np.asarray(left, dtype=float).reshape(len(left), -1)
    y = np.asarray(right, dtype=float).reshape(len(right), -1)
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("need at least two pairs")
    if B < 99:
        raise ValueError("need at least 99 permutations")
    if standardize:
        x, y = _standardize(x), _standardize(y)
    a, b = _centered_distances(x), _centered_distances(y)
    dxx, dyy = (a * a).mean(), (b * b).mean()
    if dxx <= 0 or dyy <= 0:
        return TestReport("dcor-permutation", 0.0, 1.0, (len(x), B), alpha)
    norm = math.sqrt(dxx * dyy)
    observed = (a * b).mean() / norm
    rng = np.random.default_rng(seed)
    exceed = 0
    for _ in range(B):
        perm = rng.permutation(len(y))
        if (a * b[np.ix_(perm, perm)]).mean() / norm >= observed - 1e-12:
            exceed += 1
    stat = math.sqrt(max(observed, 0.0))
    return TestReport("dcor-permutation", stat, (1 + exceed) / (B + 1), (len(x), B), alpha)


def arcsine_pmf(n: int) -> np.ndarray:
    """pmf(k) = u_k u_{n-k}, u_j = C(2j, j) / 4^j."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    u = np.ones(n + 1)
    for j in range(1, n + 1):
        u[j] = u[j - 1] * (2 * j - 1) / (2 * j)
    return u * u[::-1]


def factorization_check(tau: SplittingFamily, law: IncrementLaw, p: float, v: float,
                        trials: int, seed: int, block_size: int = 4096) -> TestReport:
    """Compare the squared Monte-Carlo mean of v^tau_g with E[v^g] = p / (1 - (1-p) v)."""
    if not 0.0 < p < 1.0 or not 0.0 < v <= 1.0:
        raise ValueError("need p in (0,1) and v in (0,1]")
    total, total_sq, kept, ties = 0.0, 0.0, 0, 0
    for g, x in _geometric_blocks(law, p, 0, trials, seed, block_size):
        t, tie = _taus_by_length(tau, g, x)
        vals = np.power(v, t[~tie].astype(float))
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
        kept += int(vals.size)
        ties += int(tie.sum())
    if kept == 0:
        raise ValueError("no usable trials")
    mean = total / kept
    var = max(total_sq / kept - mean * mean, 0.0)
    se = 2.0 * abs(mean) * math.sqrt(var / kept)
    target = p / (p + (1.0 - p) * (1.0 - v))
    diff = abs(mean * mean - target)
    ok = diff == 0.0 if se == 0.0 else diff < 3.0 * se
    return TestReport("factorization", mean * mean, None, (kept,), extra={
        "target": target, "se": se, "diff": diff, "mean": mean, "n_ties": ties,
        "pass": bool(ok), "p": p, "v": v,
    })
