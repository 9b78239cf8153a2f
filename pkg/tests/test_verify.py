import itertools

import numpy as np
import pytest

from splitlab import sweeps
from splitlab.families import (
    CONSTANT_ZERO,
    DIAGONAL,
    IDENTITY_CHOOSER,
    PARITY,
    ArgminFamily,
    BracketFamily,
    ConstantRule,
    EndpointChooser,
    JFamily,
    argmin_family,
    ascending_ladder,
    descending_ladder,
)
from splitlab.paths import CUBEPOLY, IDENTITY, IncrementWindow, TieDetected
from splitlab.stats import parse_law
from splitlab.verify import (
    PreconditionViolation,
    check_eq_main,
    check_honesty,
    check_recovers_minima,
    check_reflection_identity,
    check_regenerative,
    check_roundtrips,
    check_self_duality,
)

from conftest import W

AMIN = argmin_family()


def test_eq_main_examples():
    assert check_eq_main(AMIN, W(-0.7, 1.2), 1, 1) is None
    wit = check_eq_main(CONSTANT_ZERO, W(0.4), 1, 0)
    assert wit is not None and (wit.lhs, wit.rhs, wit.indices) == (False, True, (1, 0))


def test_reflection_examples():
    assert check_reflection_identity(AMIN, W(-0.7, 1.2), 2) is None
    wit = check_reflection_identity(DIAGONAL, W(0.1, 0.2, 0.3), 3)
    assert (wit.lhs, wit.rhs) == (6, 3)


def test_rademacher_sign_patterns_break_reflection():
    # exhaustive enumeration of the four length-2 patterns
    earliest = argmin_family(tie_policy="earliest")
    failing = [pat for pat in itertools.product((-1.0, 1.0), repeat=2)
               if check_reflection_identity(earliest, W(*pat), 2) is not None]
    assert (1.0, -1.0) in failing
    assert check_reflection_identity(earliest, W(1.0, -1.0), 2).lhs == 0


def test_honesty_examples():
    assert check_honesty(AMIN, W(-1.5, 2.0, -0.3), 3) is None
    wit = check_honesty(PARITY, W(0.3, -0.2), 2)
    assert wit is not None and (wit.lhs, wit.rhs) == (0, 1)


def test_self_duality_examples():
    ladder = descending_ladder()
    assert check_self_duality(ladder, W(0.5, -0.8), 2) is None
    assert check_self_duality(ladder, W(-0.5, 0.8), 2) is None


def test_self_duality_detects_non_self_dual_rule():
    rule = ConstantRule(2)
    assert check_self_duality(rule, W(0.5, -0.8, 0.1), 1) is not None


def test_regenerative_examples():
    assert check_regenerative(descending_ladder(), W(-1, -2, 3), 3) is None
    assert check_regenerative(ConstantRule(2), W(1, 2, 3, 4), 4) is None
    assert check_regenerative(descending_ladder(), W(0.5, 0.4, 0.3), 3) is None


def test_roundtrip_examples():
    assert check_roundtrips(AMIN, W(0.5, -0.8, -0.1), 3) is None
    ladder = descending_ladder()
    assert check_roundtrips(BracketFamily(ladder), W(0.5, -0.8, -0.1), 3, ladder) is None
    with pytest.raises(PreconditionViolation):
        check_roundtrips(PARITY, W(0.5, -0.8), 2)


def test_recovers_minima_examples():
    assert check_recovers_minima(W(-0.7, 1.2), 2) is None
    assert check_recovers_minima(W(0.7, -1.2), 2) is None


def test_ties_propagate():
    with pytest.raises(TieDetected):
        check_reflection_identity(AMIN, W(1.0, -1.0), 2)


def test_checkers_are_deterministic():
    w = W(0.3, -0.2)
    assert check_honesty(PARITY, w, 2) == check_honesty(PARITY, w, 2)


# --- sampled sweeps: the batch route against the scalar route ---------------------

@pytest.mark.parametrize("tau", [
    ArgminFamily(CUBEPOLY),
    BracketFamily(descending_ladder()),
    JFamily(EndpointChooser((IDENTITY, CUBEPOLY), None)),
], ids=["argmin-cubepoly", "bracket-ladder", "jconstruct-mixed"])
def test_characterization_sweep_passes(tau):
    tallies = sweeps.run_suite("verify-characterization", parse_law("gaussian:1"), 8, 600, 11, tau=tau)
    assert {t.name: t.status for t in tallies} == {
        "eq-main": "pass", "reflection-identity": "pass", "honesty": "pass"}


def test_sweep_witnesses_match_scalar_checks():
    tallies = sweeps.run_suite("verify-characterization", parse_law("gaussian:1"), 4, 200, 3,
                               tau=PARITY, max_witnesses=3)
    by_name = {t.name: t for t in tallies}
    assert by_name["honesty"].status == "fail"
    assert by_name["reflection-identity"].n_violations == 200
    for wit in by_name["honesty"].witnesses:
        assert check_honesty(PARITY, wit.window, 4) == wit
    assert len(by_name["honesty"].witnesses) == 3


def test_selfdual_sweeps_for_both_ladders():
    for rule in (descending_ladder(), ascending_ladder(), descending_ladder(CUBEPOLY)):
        tallies = sweeps.run_suite("verify-selfdual", parse_law("laplace:1"), 10, 500, 5, rule=rule)
        assert all(t.status == "pass" for t in tallies)


def test_selfdual_sweep_fails_for_constant_rule():
    tallies = sweeps.run_suite("verify-selfdual", parse_law("gaussian:1"), 4, 50, 5, rule=ConstantRule(2))
    statuses = {t.name: t.status for t in tallies}
    assert statuses["self-duality"] == "fail" and statuses["regenerative"] == "pass"


def test_roundtrip_sweep_reports_precondition_for_dishonest_family():
    tallies = sweeps.run_suite("verify-roundtrip", parse_law("gaussian:1"), 4, 100, 5, tau=PARITY)
    assert tallies[0].n_precondition == 100 and tallies[0].status == "tie-skip"


def test_jconstruct_suite_identity_chooser():
    tallies = sweeps.run_suite("verify-jconstruct", parse_law("uniform:1"), 10, 500, 2,
                               tau=JFamily(IDENTITY_CHOOSER))
    names = {t.name: t.status for t in tallies}
    assert names == {"chooser-validity": "pass", "eq-main": "pass", "reflection-identity": "pass",
                     "honesty": "pass", "recovers-minima": "pass"}


def test_chooser_validity_sweep_flags_invalid_chooser():
    from splitlab.families import PredicateChooser
    bad = JFamily(PredicateChooser("first", lambda level, row: row[0] < 0))
    tallies = sweeps.run_suite("verify-jconstruct", parse_law("gaussian:1"), 3, 100, 2, tau=bad)
    validity = next(t for t in tallies if t.name == "chooser-validity")
    assert validity.status == "fail"
    assert validity.witnesses[0].lhs in ("both_hold", "neither_holds")


def test_results_independent_of_worker_count():
    kw = dict(tau=PARITY, chunk_size=50, max_witnesses=5)
    one = sweeps.run_suite("verify-characterization", parse_law("gaussian:1"), 3, 120, 9, workers=1, **kw)
    two = sweeps.run_suite("verify-characterization", parse_law("gaussian:1"), 3, 120, 9, workers=2, **kw)
    assert [(t.name, t.n_violations, t.witnesses) for t in one] == \
           [(t.name, t.n_violations, t.witnesses) for t in two]
