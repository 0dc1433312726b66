from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from hybrid_rla.combination import RiskAllocation
from hybrid_rla.comparison import SUPER_SIMPLE_INFLATION, clean_sample_size
from hybrid_rla.model import ValidationError
from hybrid_rla.scenarios import CVR, NOCVR, _contest, example1
from hybrid_rla.simulation import (
    Scenario,
    _summarize,
    comparison_risk,
    expected_sample_size,
    fit_exponent,
    polling_expected_size,
    polling_risk,
    simulate_comparison_workload,
    simulate_polling_workload,
    two_vote_policy_size,
    unstratified_comparison_size,
)


def small_scenario(**kw):
    base = dict(name="small", contest=_contest((6_000, 4_000), (900, 100), 10_000, 1_000),
                cvr_stratum=CVR, polling_stratum=NOCVR,
                allocation=RiskAllocation(0.1, 0.05, 0.05, 0.5), trials=200,
                schedule=tuple(range(10, 501, 10)))
    base.update(kw)
    return Scenario(**base)


def test_quantiles_use_the_smallest_size_reaching_each_level():
    s = _summarize("x", [10] * 50 + [20] * 40 + [30] * 9 + [100], 100)
    assert s.quantiles == {0.5: 10, 0.9: 20, 0.99: 30}
    assert s.full_count_freq == pytest.approx(0.01)
    assert s.coverage(20) == pytest.approx(0.9)


def test_overwhelming_polling_evidence_stops_at_the_first_size():
    sc = small_scenario(truth={(NOCVR, "winner"): 1_000, (NOCVR, "loser"): 0},
                        contest=_contest((6_000, 4_000), (1_000, 0), 10_000, 1_000),
                        allocation=RiskAllocation(0.1, 0.05, 0.05, 0.0))
    w = simulate_polling_workload(sc)
    assert set(w.quantiles.values()) == {10}


def test_zero_error_comparison_workload_is_deterministic():
    sc = small_scenario()
    w = simulate_comparison_workload(sc)
    clean = clean_sample_size(sc.comparison_threshold(), 0.05)
    assert np.all(w.stop_sizes == clean)
    assert w.mean_se == 0.0


def test_errors_increase_the_comparison_workload():
    sc = small_scenario(cvr_error_rates={"o1": 0.002})
    w = simulate_comparison_workload(sc)
    assert w.quantiles[0.5] >= clean_sample_size(sc.comparison_threshold(), 0.05)
    again = simulate_comparison_workload(sc)
    assert np.array_equal(w.stop_sizes, again.stop_sizes)


def test_polling_workload_is_seed_reproducible():
    sc = small_scenario(allocation=RiskAllocation(0.1, 0.05, 0.05, 0.9),
                        truth={(NOCVR, "winner"): 800, (NOCVR, "loser"): 100})
    a, b = simulate_polling_workload(sc), simulate_polling_workload(sc)
    assert np.array_equal(a.stop_sizes, b.stop_sizes)
    assert len(set(a.stop_sizes)) > 3
    c = simulate_polling_workload(replace(sc, seed=7))
    assert not np.array_equal(a.stop_sizes, c.stop_sizes)


def test_expected_size_without_errors_is_the_clean_size():
    for t, alpha in ((0.01, 0.1), (0.003, 0.03), (0.2, 0.05)):
        assert expected_sample_size(t, alpha, {}) == clean_sample_size(t, alpha)


def test_two_vote_policy():
    g = SUPER_SIMPLE_INFLATION
    assert two_vote_policy_size(10_000, 1_000, 0.1, 0.0) == unstratified_comparison_size(
        10_000, 1_000, 0.1)
    # without inflation a two-vote overstatement is a full taint and stopping is impossible
    assert two_vote_policy_size(10_000, 1_000, 0.1, 0.001) is None
    # with it, too many legacy ballots still make the expected log growth negative
    assert two_vote_policy_size(10_000, 1_000, 0.1, 0.06, g) is None
    small = two_vote_policy_size(10_000, 1_000, 0.1, 0.001, g)
    assert small > unstratified_comparison_size(10_000, 1_000, 0.1, g)


def test_error_rates_must_be_a_distribution():
    with pytest.raises(ValidationError):
        expected_sample_size(0.01, 0.1, {"o1": 0.7, "u1": 0.6})


def test_fit_exponent_recovers_power_laws():
    lams = [0.5, 0.6, 0.7, 0.8, 0.9]
    assert fit_exponent(lams, [100 / x for x in lams]) == pytest.approx(1.0)
    assert fit_exponent(lams, [100 / x ** 2 for x in lams]) == pytest.approx(2.0)


def test_clean_workload_never_grows_with_tolerance():
    base = example1(trials=1)
    sizes = []
    for lam in (0.1, 0.2, 0.3, 0.5, 0.8):
        sc = replace(base, allocation=replace(base.allocation, lambda1=lam))
        sizes.append(simulate_comparison_workload(sc).quantiles[0.5])
    assert sizes == sorted(sizes, reverse=True)


def test_polling_expected_size_monotone_in_tolerance():
    sizes = [polling_expected_size(10_000, 7_500, 1_500, c, 0.07) for c in (-3000, 0, 3000)]
    assert sizes == sorted(sizes)
    assert polling_expected_size(100, 50, 50, 0, 0.05) is None


def test_risk_estimators_on_small_boundary_nulls():
    rng = np.random.default_rng(5)
    km = comparison_risk([1] * 100, [0.5] * 4 + [0.0] * 96, Fraction(2), 0.1, 400, 200, rng)
    assert km.rate <= 0.1 + 3 * km.mc_sigma
    tri = polling_risk(200, 10, 60, 0.1, 400, [20, 50], rng)
    assert tri.rate <= 0.1 + 3 * tri.mc_sigma
    with pytest.raises(ValidationError):
        polling_risk(200, 10, 5, 0.1, 10, [20], rng)
