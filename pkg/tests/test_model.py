from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_rla.model import (
    Batch,
    ContestSpec,
    MarginError,
    StratumManifest,
    ValidationError,
    derive_margins,
    diluted_margin_after_handcount,
    exact,
    stratum_overstatement,
    worst_case_legacy_reduction,
)


def two_candidate(votes_by_stratum, ballots=None):
    reported = {}
    for s, (w, l) in votes_by_stratum.items():
        reported[(s, "w")] = w
        reported[(s, "l")] = l
    return ContestSpec(("w", "l"), {"w"}, {"l"}, reported, ballots)


def test_single_stratum_margin_and_diluted_margin():
    m = derive_margins(two_candidate({"s": (6, 4)}, {"s": 10}))
    assert m.margin(("w", "l")) == 2
    assert m.min_margin == 2
    assert m.diluted_margin == Fraction(1, 5)


def test_tied_contest_is_not_well_formed():
    with pytest.raises(MarginError, match="not well-formed"):
        derive_margins(two_candidate({"s": (5, 5)}))


def test_two_strata_margins():
    m = derive_margins(two_candidate({"1": (55_000, 45_000), "2": (5_000, 4_000)}))
    assert m.margin(("w", "l")) == 11_000
    assert m.stratum_margin(("w", "l"), "1") == 10_000
    assert m.stratum_margin(("w", "l"), "2") == 1_000


def test_ballots_default_to_vote_totals():
    m = derive_margins(two_candidate({"a": (3, 1), "b": (2, 2)}))
    assert m.stratum_ballots == {"a": 4, "b": 4}
    assert m.ballots == 8


def test_negative_stratum_margin_is_allowed():
    m = derive_margins(two_candidate({"1": (900, 100), "2": (100, 600)}))
    assert m.stratum_margin(("w", "l"), "2") == -500
    assert m.margin(("w", "l")) == 300


def test_multiwinner_pairs_and_minimum_margin():
    c = ContestSpec(("a", "b", "c"), {"a", "b"}, {"c"},
                    {("s", "a"): 50, ("s", "b"): 40, ("s", "c"): 30}, {"s": 60})
    m = derive_margins(c)
    assert m.pairs == [("a", "c"), ("b", "c")]
    assert m.min_margin == 10


@pytest.mark.parametrize("kwargs", [
    dict(candidates=("w", "l"), winners=set(), losers={"l"}, reported_votes={}),
    dict(candidates=("w", "l"), winners={"w"}, losers={"w"}, reported_votes={}),
    dict(candidates=("w", "l"), winners={"w"}, losers={"x"}, reported_votes={}),
    dict(candidates=("w", "l"), winners={"w"}, losers={"l"}, reported_votes={("s", "w"): -1}),
])
def test_contest_validation(kwargs):
    with pytest.raises(ValidationError):
        ContestSpec(**kwargs)


def test_diluted_margin_after_handcount_examples():
    assert diluted_margin_after_handcount(55_000, 45_000, 5_000, 4_000, 90_000) == Fraction(1, 10)
    assert diluted_margin_after_handcount(700, 300, 700, 300, 50) == 0
    assert diluted_margin_after_handcount(100, 90, 60, 10, 40) == -1


def test_worst_case_legacy_reduction_examples():
    assert worst_case_legacy_reduction(10_000, 3_000, 4_000) == 9_000
    assert worst_case_legacy_reduction(500, 0, 500) == 0
    assert worst_case_legacy_reduction(1_000, 1_000, 0) == 2_000
    with pytest.raises(ValidationError):
        worst_case_legacy_reduction(10, 6, 5)


def test_batch_and_manifest_validation():
    with pytest.raises(ValidationError):
        Batch("b", 0)
    with pytest.raises(ValidationError):
        Batch("b", 10, {"w": 11})
    b = Batch("b", 10, {"w": 6})
    assert b.reported("l") == 0
    with pytest.raises(ValidationError):
        StratumManifest("s", "comparison", 20, (b,))
    with pytest.raises(ValidationError):
        StratumManifest("s", "comparison", 20, (b, b))
    with pytest.raises(ValidationError):
        StratumManifest("s", "comparison", 20)
    with pytest.raises(ValidationError):
        StratumManifest("s", "census", 20)
    assert StratumManifest("s", "polling", 20).batches == ()


def test_exact_reads_floats_by_decimal_value():
    import numpy as np
    assert exact(0.7) == Fraction(7, 10)
    assert exact(np.float64(0.3)) == Fraction(3, 10)
    assert exact(np.int64(-7)) == -7
    assert exact(Fraction(1, 3)) == Fraction(1, 3)


votes = st.integers(min_value=0, max_value=10_000)


@given(st.lists(st.tuples(votes, votes), min_size=1, max_size=4), st.randoms())
def test_margins_do_not_depend_on_stratum_order(rows, rnd):
    data = {f"s{i}": r for i, r in enumerate(rows)}
    total = sum(w - l for w, l in rows)
    if total <= 0:
        with pytest.raises(ValidationError):
            derive_margins(two_candidate(data))
        return
    keys = list(data)
    rnd.shuffle(keys)
    a = derive_margins(two_candidate(data))
    b = derive_margins(two_candidate({k: data[k] for k in keys}))
    assert a.pair_margins == b.pair_margins
    assert a.stratum_margins == b.stratum_margins


@given(st.integers(1, 5_000), st.data())
def test_legacy_reduction_range(N, data):
    V_w = data.draw(st.integers(0, N))
    V_l = data.draw(st.integers(0, N - V_w))
    r = worst_case_legacy_reduction(N, V_w, V_l)
    assert 0 <= r <= 2 * N


@settings(max_examples=200)
@given(st.integers(0, 5_000), st.integers(0, 5_000), st.integers(0, 1_000), st.integers(0, 1_000),
       st.integers(1, 20_000))
def test_diluted_margin_after_handcount_matches_residual_margin(V_w, V_l, w2, l2, N_cvr):
    # remove the legacy stratum from a two-stratum contest and recompute the margin directly
    if w2 > V_w or l2 > V_l:
        return
    m = diluted_margin_after_handcount(V_w, V_l, w2, l2, N_cvr)
    residual = stratum_overstatement(V_w - V_l, w2 - l2)
    assert m == Fraction(residual, N_cvr)
