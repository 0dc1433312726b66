import math

import numpy as np
import pytest
from scipy import stats

from hybrid_rla.model import ValidationError
from hybrid_rla.sampling import (
    SamplePlan,
    draw_ppeb,
    draw_srs,
    ppeb_draws,
    srs_draws,
    stratum_seed,
    uniform_int,
)

from oracles import reference_ppeb_csv, reference_srs_csv

SEED = "TEST-SEED-2018"

# Frozen from tests/oracles.py, which re-derives each draw from hashlib hex output.
GOLDEN_SRS = [29, 63, 97, 10, 64]
GOLDEN_PPEB = ["A", "A", "B", "A", "A", "B", "B", "A"]
GOLDEN_DIGEST_1 = "4a2fd58e98a3251c4868c4fdde96d6e98659d7f90068e0012ed16245fb9a454f"


def test_golden_srs():
    assert draw_srs(SEED, 100, 5) == GOLDEN_SRS
    assert srs_draws(SEED, 100, 5)[0].digest_hex == GOLDEN_DIGEST_1


def test_golden_ppeb():
    assert draw_ppeb(SEED, ["A", "B"], [0.75, 0.25], 8) == GOLDEN_PPEB


def test_transcripts_match_reference_implementation():
    plan = SamplePlan(SEED, "s", "srs", tuple(srs_draws(SEED, 100, 5)))
    assert plan.to_csv() == reference_srs_csv(SEED, 100, 5)
    plan = SamplePlan(SEED, "s", "ppeb", tuple(ppeb_draws(SEED, ["A", "B"], [0.75, 0.25], 8)))
    assert plan.to_csv() == reference_ppeb_csv(SEED, ["A", "B"], [0.75, 0.25], 8)


def test_full_sample_is_a_permutation():
    draws = draw_srs("perm", 50, 50)
    assert sorted(draws) == list(range(1, 51))


def test_empty_and_invalid_samples():
    assert draw_srs(SEED, 10, 0) == []
    with pytest.raises(ValidationError):
        draw_srs(SEED, 10, 11)
    with pytest.raises(ValidationError):
        draw_ppeb(SEED, [], [], 3)
    with pytest.raises(ValidationError):
        draw_ppeb(SEED, ["a"], [0], 3)
    with pytest.raises(ValidationError):
        draw_ppeb(SEED, ["a", "b"], [1], 3)


def test_prefix_property():
    assert draw_srs(SEED, 1000, 40)[:10] == draw_srs(SEED, 1000, 10)
    assert draw_ppeb(SEED, list("abc"), [1, 2, 3], 30)[:7] == draw_ppeb(SEED, list("abc"),
                                                                     [1, 2, 3], 7)


def test_single_batch_is_always_drawn():
    assert draw_ppeb(SEED, ["only"], [0.3], 12) == ["only"] * 12


def test_zero_bound_batches_are_never_drawn():
    picks = draw_ppeb("zeros", ["a", "z", "b"], [1, 0, 1], 2_000)
    assert "z" not in picks


def test_equal_bounds_split_evenly():
    k = 20_000
    picks = draw_ppeb("even", ["a", "b"], [1, 1], k)
    share = picks.count("a") / k
    assert abs(share - 0.5) <= 3 * math.sqrt(0.25 / k)


def test_ppeb_frequencies_match_bounds():
    bounds = [0.05, 0.1, 0.15, 0.2, 0.5]
    ids = [f"b{i}" for i in range(len(bounds))]
    k = 100_000
    picks = draw_ppeb("chi-square", ids, bounds, k)
    observed = np.array([picks.count(i) for i in ids])
    expected = np.array(bounds) / sum(bounds) * k
    assert stats.chisquare(observed, expected).pvalue > 0.001


def test_srs_positions_are_uniform():
    N = 20
    counts = np.zeros(N)
    for r in range(2_000):
        for idx in draw_srs(f"u{r}", N, 5):
            counts[idx - 1] += 1
    assert stats.chisquare(counts).pvalue > 0.001


def test_stratum_seeds_differ():
    assert stratum_seed(SEED, "cvr") != stratum_seed(SEED, "nocvr")
    assert uniform_int(stratum_seed(SEED, "cvr"), 1) != uniform_int(stratum_seed(SEED, "nocvr"), 1)
    assert 0 <= uniform_int(SEED, 1) < 2 ** 64
