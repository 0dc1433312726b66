from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_rla.model import ContestSpec, ValidationError, derive_margins
from hybrid_rla.polling import (
    COND_HYPER,
    PollingEvidence,
    PollingSample,
    cond_hyper_tail,
    polling_null_threshold,
    polling_pvalue,
    rejection_cutoff,
    tri_hyper_tail,
    tri_pvalue,
)

from oracles import SubsetTable, brute_tri_tail


def test_tri_tail_trivial_cases():
    assert tri_hyper_tail(3, 2, 10, 0, 0) == 1.0
    # the smallest possible difference is -n, so the tail covers everything
    assert tri_hyper_tail(3, 2, 10, 4, -4) == pytest.approx(1.0, abs=1e-15)


def test_tri_tail_toy_value():
    assert brute_tri_tail(2, 2, 5, 2, 2) == Fraction(1, 10)
    assert tri_hyper_tail(2, 2, 5, 2, 2) == pytest.approx(0.1, abs=1e-15)


def test_cond_hyper_examples():
    assert cond_hyper_tail(2, 2, 2, 0) == pytest.approx(1.0)
    assert cond_hyper_tail(2, 2, 2, 2) == pytest.approx(1 / 6, abs=1e-15)
    assert cond_hyper_tail(2, 2, 2, 3) == 0.0
    assert cond_hyper_tail(1, 5, 3, 2) == 0.0


def test_tri_tail_matches_enumeration_small():
    T = SubsetTable(7)
    for A_w, A_l in [(0, 0), (3, 2), (7, 0), (2, 4), (1, 1)]:
        for (n, diff), v in T.tri_tails(A_w, A_l).items():
            assert tri_hyper_tail(A_w, A_l, 7, n, diff) == pytest.approx(float(v), abs=1e-12)


def test_tri_pmf_sums_to_one():
    # differences of adjacent tails are the pmf of B_w - B_l
    for n in range(10):
        total = sum(tri_hyper_tail(4, 3, 9, n, d) - tri_hyper_tail(4, 3, 9, n, d + 1)
                    for d in range(-n, n + 1))
        assert total == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("args", [(6, 5, 10, 2, 0), (-1, 2, 10, 2, 0), (2, 2, 10, 11, 0)])
def test_tri_tail_rejects_invalid_populations(args):
    with pytest.raises(ValidationError):
        tri_hyper_tail(*args)


def test_polling_pvalue_small_null_matches_brute_force():
    # N=5, c=0: the boundary is A_w = A_l in {0, 1, 2}
    sample = PollingSample(2, 2, 0)
    res = polling_pvalue(sample, 5, 0)
    expected = max(brute_tri_tail(a, a, 5, 2, 2) for a in range(3))
    assert res.pvalue == pytest.approx(float(expected), abs=1e-12)
    assert res.A_w - res.A_l == 0


def test_polling_pvalue_no_data_and_degenerate_nulls():
    assert polling_pvalue(PollingSample(0, 0, 0), 100, 5).pvalue == 1.0
    empty = polling_pvalue(PollingSample(10, 6, 2), 100, -101)
    assert empty.pvalue == 0.0 and empty.status == "null-empty"
    unfalsifiable = polling_pvalue(PollingSample(10, 10, 0), 100, 100)
    assert unfalsifiable.pvalue == 1.0 and unfalsifiable.status == "unfalsifiable"
    with pytest.raises(ValidationError):
        polling_pvalue(PollingSample(10, 10, 0), 5, 0)


def test_paranoid_scan_agrees_on_a_wide_boundary():
    sample = PollingSample(300, 160, 110)
    for c in (-400, 0, 250):
        fast = polling_pvalue(sample, 5_000, c)
        full = polling_pvalue(sample, 5_000, c, paranoid=True)
        assert fast.pvalue == pytest.approx(full.pvalue, rel=1e-9, abs=1e-300)


def test_cond_hyper_method_is_valid_pvalue():
    sample = PollingSample(40, 25, 10)
    p = polling_pvalue(sample, 200, 0, method=COND_HYPER).pvalue
    assert 0 < p <= 1
    with pytest.raises(ValidationError):
        polling_pvalue(sample, 200, 0, method="bravo")


def test_null_threshold_examples():
    def margins(v_s, v_other):
        c = ContestSpec(("w", "l"), {"w"}, {"l"},
                        {("s", "w"): max(v_s, 0) + 10_000, ("s", "l"): max(-v_s, 0) + 10_000,
                         ("o", "w"): v_other + 50_000, ("o", "l"): 50_000})
        return derive_margins(c)

    m = margins(1000, 1000)
    assert polling_null_threshold(m, "s", 0.5) == 0
    assert polling_null_threshold(m, "s", 0) == 1000
    m = margins(-500, 10_500)
    assert m.margin(("w", "l")) == 10_000
    assert polling_null_threshold(m, "s", 0.7) == -7500
    # rounding goes up, which enlarges the null
    assert polling_null_threshold(m, "s", Fraction(1, 3)) == -3833


@settings(max_examples=60, deadline=None)
@given(st.integers(5, 300), st.data())
def test_pvalue_non_increasing_in_sample_difference(N, data):
    c = data.draw(st.integers(-N, N - 1))
    n = data.draw(st.integers(1, N))
    ps = [tri_pvalue(n, d, N, c) for d in range(-n, n + 1)]
    assert all(a >= b - 1e-12 for a, b in zip(ps, ps[1:]))


def test_rejection_cutoff_matches_linear_scan():
    N, c, alpha = 2_000, -300, 0.05
    for n in (10, 50, 120, 400):
        scan = next((d for d in range(-n, n + 1) if tri_pvalue(n, d, N, c) <= alpha), None)
        assert rejection_cutoff(n, N, c, alpha) == scan
        for hint in (-n + 1, 0, n // 3, n - 1):
            assert rejection_cutoff(n, N, c, alpha, hint=hint) == scan


def test_polling_evidence_thresholds():
    ev = PollingEvidence(10_000, 200, 2_100, PollingSample(500, 216, 227))
    assert ev.null_threshold(0.7) == -1270
    assert ev.pvalue(0.7) == pytest.approx(ev.result(0.7).pvalue, rel=1e-12)
    assert ev.pvalue(0.7) < 0.04
    assert ev.pvalue(Fraction(2, 21)) == 1.0
    assert PollingEvidence(100, 50, 100, PollingSample(10, 5, 0)).pvalue(-5) == 1.0
    assert PollingEvidence(100, 50, 100, PollingSample(10, 5, 0)).pvalue(2) == 0.0


def test_large_stratum_is_finite():
    p = tri_pvalue(400, 120, 1_650_000, -100_000)
    assert np.isfinite(p) and 0 <= p <= 1
