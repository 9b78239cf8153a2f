import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from splitlab.families import ArgminFamily, argmin_family
from splitlab.paths import CUBEPOLY, IncrementWindow
from splitlab.stats import (
    IncrementLaw,
    arcsine_pmf,
    chi_square_gof,
    distance_correlation,
    factorization_check,
    functional_table,
    geometric_cdf,
    ks_two_sample,
    parse_law,
    permutation_independence,
    piece_functionals,
    sample_geometric,
    sample_increments,
    sample_paths,
    split_record,
    splitting_experiment,
)

from conftest import W

AMIN = argmin_family()
GAUSS = parse_law("gaussian:1")


# --- sampling ---------------------------------------------------------------------

def test_sampling_is_deterministic():
    a = sample_increments(GAUSS, 50, 7, 3)
    assert a == sample_increments(GAUSS, 50, 7, 3)
    assert a != sample_increments(GAUSS, 50, 7, 4)


def test_rademacher_values():
    x = sample_increments(parse_law("rademacher"), 5000, 1).core()
    assert set(np.unique(x)) == {-1.0, 1.0}


def test_gaussian_mean_clt_bound():
    bound = 4 / math.sqrt(1e5)
    hits = sum(abs(sample_increments(GAUSS, 100_000, seed).core().mean()) < bound for seed in range(100))
    assert hits == 100


@pytest.mark.parametrize("kind", ["gaussian", "uniform", "laplace", "cauchy"])
def test_diffuse_laws_are_symmetric(kind):
    x = sample_paths(IncrementLaw(kind, 2.0), 1, 40_000, 5, 0).ravel()
    assert ks_two_sample(x, -x).p_value > 1e-3
    if kind == "uniform":
        assert np.abs(x).max() <= 2.0


def test_law_parsing():
    assert parse_law("uniform:3").scale == 3.0
    assert parse_law("rademacher").spec == "rademacher"
    for bad in ("poisson:1", "gaussian:-1", "gaussian:x", "rademacher:2"):
        with pytest.raises(ValueError):
            parse_law(bad)


# --- geometric times --------------------------------------------------------------

def _geometric_oracle(p, u):
    k, cdf = 0, p
    while not u < cdf:
        k += 1
        cdf += p * (1 - p) ** k
    return k


@pytest.mark.parametrize("p,u,k", [(0.5, 0.99, 6), (0.5, 0.0, 0), (0.2, 0.2, 1)])
def test_geometric_examples(p, u, k):
    assert sample_geometric(p, u) == k == _geometric_oracle(p, u)


def test_geometric_domain():
    for p in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            sample_geometric(p, 0.5)


@given(st.floats(0.01, 0.99), st.floats(0.0, 0.999999))
@settings(max_examples=300, deadline=None)
def test_geometric_matches_cdf_definition(p, u):
    k = sample_geometric(p, u)
    assert u < geometric_cdf(p, k)
    assert k == 0 or u >= geometric_cdf(p, k - 1)


def test_geometric_vectorized():
    u = np.linspace(0, 0.999, 50)
    assert list(sample_geometric(0.3, u)) == [sample_geometric(0.3, v) for v in u]


# --- the splitting experiment -----------------------------------------------------

def test_split_record_example():
    rec = split_record(IncrementWindow(-1, (0.4, -0.7, 1.2, 0.9)), 2, AMIN, 1)
    assert (rec.tau, rec.co_tau) == (1, 1)
    assert rec.pre.values == (0.7, -0.4) and rec.post.values == (1.2, 0.9)


def test_split_record_empty_core():
    rec = split_record(IncrementWindow(-1, (0.4, -0.2)), 0, AMIN, 1)
    assert (rec.tau, rec.co_tau) == (0, 0)
    assert rec.pre.values == (-0.4,) and rec.post.values == (-0.2,)


def test_experiment_matches_scalar_split():
    run = splitting_experiment(AMIN, GAUSS, 0.3, 2, 40, 8, block_size=16)
    assert len(run.records) == 40 and run.n_ties == 0
    for rec in run.records:
        pre = rec.pre.values
        post = rec.post.values
        # rebuild the original window: buffer entries before the core, then core, then buffer
        original = tuple(-v for v in reversed(pre)) + post
        w = IncrementWindow(-2, original)
        assert split_record(w, rec.g, AMIN, 2) == rec
        assert len(pre) == rec.tau + 2 and len(post) == rec.co_tau + 2


def test_experiment_geometric_mean():
    run = splitting_experiment(AMIN, GAUSS, 0.3, 0, 100_000, 4)
    g = np.array([r.g for r in run.records], dtype=float)
    assert abs(g.mean() - 7 / 3) < 3 * g.std() / math.sqrt(g.size)


def test_experiment_is_deterministic():
    a = splitting_experiment(AMIN, GAUSS, 0.4, 1, 200, 3, block_size=64)
    b = splitting_experiment(AMIN, GAUSS, 0.4, 1, 200, 3, block_size=64)
    assert a.records == b.records


@pytest.mark.parametrize("w,j,expected", [
    ((1.0, -3.0), 2, (-2.0, -2.0, 1.0, 1)),
    ((1.0, -3.0), 0, (0, 0, 0, 0)),
    ((0.5,), 1, (0.5, 0, 0.5, 1)),
])
def test_piece_functionals_examples(w, j, expected):
    assert tuple(piece_functionals(W(*w), j)) == expected


def test_piece_functionals_depth_guard():
    with pytest.raises(IndexError):
        piece_functionals(W(1.0), 2)


def test_functional_table_matches_scalar():
    run = splitting_experiment(ArgminFamily(CUBEPOLY), GAUSS, 0.3, 3, 60, 2)
    left, right = functional_table(run, 3)
    for r, rec in enumerate(run.records):
        assert np.allclose(left[r], [rec.tau, *piece_functionals(rec.pre, 3)])
        assert np.allclose(right[r], [rec.co_tau, *piece_functionals(rec.post, 3)])


# --- KS ---------------------------------------------------------------------------

def _ks_brute(a, b):
    pts = sorted(set(a) | set(b))
    return max(abs(sum(x <= t for x in a) / len(a) - sum(x <= t for x in b) / len(b)) for t in pts)


def _kolmogorov_series(t):
    if t <= 0:
        return 1.0
    return min(1.0, 2 * sum((-1) ** (k - 1) * math.exp(-2 * k * k * t * t) for k in range(1, 200)))


@pytest.mark.parametrize("a,b,d", [((1, 2, 3), (1, 2, 3), 0.0), ((0, 1), (0.5, 1.5), 0.5), ((1, 2), (3, 4), 1.0)])
def test_ks_examples(a, b, d):
    rep = ks_two_sample(a, b)
    assert rep.statistic == d
    if d == 0.0:
        assert rep.p_value == 1.0


def test_ks_empty():
    with pytest.raises(ValueError):
        ks_two_sample([], [1.0])


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=30),
       st.lists(st.integers(-5, 5), min_size=1, max_size=30))
@settings(max_examples=200, deadline=None)
def test_ks_against_oracles(a, b):
    rep = ks_two_sample(a, b)
    assert rep.statistic == pytest.approx(_ks_brute(a, b), abs=1e-12)
    n_eff = len(a) * len(b) / (len(a) + len(b))
    assert rep.p_value == pytest.approx(_kolmogorov_series(math.sqrt(n_eff) * rep.statistic), abs=1e-9)
    assert 0.0 <= rep.p_value <= 1.0


# --- chi-square -------------------------------------------------------------------

def test_chi_square_examples():
    rep = chi_square_gof([25, 25, 50], [0.25, 0.25, 0.5])
    assert rep.statistic == 0.0 and rep.p_value == 1.0
    assert chi_square_gof([30, 70], [0.5, 0.5]).statistic == pytest.approx(16.0)
    with pytest.raises(ValueError):
        chi_square_gof([0, 10], [1.0, 0.0])
    with pytest.raises(ValueError):
        chi_square_gof([5, 5], [0.5, 0.6])


def test_chi_square_against_scipy():
    counts = np.array([12, 30, 41, 17])
    probs = np.array([0.1, 0.3, 0.4, 0.2])
    ref = sps.chisquare(counts, counts.sum() * probs)
    rep = chi_square_gof(counts, probs)
    assert rep.statistic == pytest.approx(ref.statistic)
    assert rep.p_value == pytest.approx(ref.pvalue)


# --- distance correlation ---------------------------------------------------------

def _dcor_brute(x, y):
    n = len(x)

    def centred(z):
        d = [[float(np.linalg.norm(z[i] - z[j])) for j in range(n)] for i in range(n)]
        rm = [sum(r) / n for r in d]
        gm = sum(rm) / n
        return [[d[i][j] - rm[i] - rm[j] + gm for j in range(n)] for i in range(n)]

    a, b = centred(x), centred(y)
    v = lambda p, q: sum(p[i][j] * q[i][j] for i in range(n) for j in range(n)) / n ** 2
    return math.sqrt(v(a, b) / math.sqrt(v(a, a) * v(b, b)))


def test_distance_correlation_brute_force(rng):
    x = rng.standard_normal((15, 2))
    y = x[:, :1] ** 2 + 0.3 * rng.standard_normal((15, 1))
    assert distance_correlation(x, y) == pytest.approx(_dcor_brute(x, y), rel=1e-10)


def test_permutation_examples():
    i = np.arange(1, 51, dtype=float)
    assert permutation_independence(i, i, B=999, seed=1).p_value == pytest.approx(1 / 1000)
    rep = permutation_independence(i, np.full(50, 3.0), B=999)
    assert rep.statistic == 0.0 and rep.p_value == 1.0
    with pytest.raises(ValueError):
        permutation_independence(i[:1], i[:1])
    with pytest.raises(ValueError):
        permutation_independence(i, i, B=50)


def test_permutation_independent_inputs_rarely_reject():
    rng = np.random.default_rng(11)
    rejections = sum(
        not permutation_independence(rng.standard_normal((60, 2)), rng.standard_normal((60, 2)),
                                     B=199, seed=s, alpha=0.05).passed
        for s in range(40))
    # expected 2 of 40; 9 or more has probability below 1e-3
    assert rejections <= 8


# --- arcsine law ------------------------------------------------------------------

@pytest.mark.parametrize("n", [0, 1, 2, 7])
def test_arcsine_pmf_against_binomial_oracle(n):
    u = [math.comb(2 * j, j) / 4 ** j for j in range(n + 1)]
    assert np.allclose(arcsine_pmf(n), [u[k] * u[n - k] for k in range(n + 1)], rtol=1e-14)


def test_arcsine_small_cases():
    assert list(arcsine_pmf(0)) == [1.0]
    assert list(arcsine_pmf(1)) == [0.5, 0.5]
    assert list(arcsine_pmf(2)) == [0.375, 0.25, 0.375]


def test_arcsine_pmf_invariants():
    for n in range(65):
        pmf = arcsine_pmf(n)
        assert abs(pmf.sum() - 1.0) < 1e-12
        assert np.array_equal(pmf, pmf[::-1])


def test_arcsine_n2_monte_carlo():
    x = sample_paths(GAUSS, 1_000_000, 2, 3, 0)
    tau, tie = AMIN.eval_batch(x)
    assert not tie.any()
    freq = np.bincount(tau, minlength=3) / tau.size
    assert np.all(np.abs(freq - arcsine_pmf(2)) < 0.002)


def test_arcsine_universality_uniform():
    x = sample_paths(parse_law("uniform:1"), 100_000, 10, 9, 0)
    tau, tie = AMIN.eval_batch(x)
    assert chi_square_gof(np.bincount(tau[~tie], minlength=11), arcsine_pmf(10)).p_value >= 0.01


# --- factorization ----------------------------------------------------------------

def test_factorization_v1_exact():
    rep = factorization_check(AMIN, GAUSS, 0.3, 1.0, 2000, 1)
    assert rep.statistic == 1.0 and rep.extra["target"] == 1.0 and rep.passed


def test_factorization_target():
    rep = factorization_check(AMIN, GAUSS, 0.5, 0.5, 20_000, 1)
    assert rep.extra["target"] == pytest.approx(2 / 3)
    assert rep.passed


def test_factorization_small_v_limit():
    rep = factorization_check(AMIN, GAUSS, 0.2, 1e-3, 100_000, 5)
    # E[v^tau] is P(tau=0) plus O(v)
    se = math.sqrt(0.2 ** 0.5 * (1 - 0.2 ** 0.5) / 100_000)
    assert abs(rep.extra["mean"] - math.sqrt(0.2)) < 4 * se + 2e-3


def test_factorization_domain():
    for p, v in ((0.0, 0.5), (0.5, 0.0), (0.5, 1.5)):
        with pytest.raises(ValueError):
            factorization_check(AMIN, GAUSS, p, v, 10, 0)
