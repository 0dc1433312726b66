"""Worked example contests used by the report, the CLI and the acceptance tests.

Vote splits inside each stratum are reconstructions: only the totals that the
examples quote (ballots, diluted margin, no-CVR share, allocations) are fixed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .combination import (
    AUTO_FULL_COUNT,
    ADJUST_THRESHOLD,
    RiskAllocation,
    StratumFullCount,
    StratumRejected,
    audit_state_step,
    default_alpha2,
    initial_state,
)
from .comparison import SUPER_SIMPLE_INFLATION
from .model import COMPARISON, POLLING, Batch, ContestSpec, StratumManifest, derive_margins
from .polling import PollingSample, polling_null_threshold, tri_pvalue
from .sampling import draw_srs, stratum_seed
from .simulation import Scenario

CVR, NOCVR = "cvr", "nocvr"


def _contest(cvr_votes, nocvr_votes, N1, N2) -> ContestSpec:
    (w1, l1), (w2, l2) = cvr_votes, nocvr_votes
    return ContestSpec(
        candidates=("winner", "loser"), winners=("winner",), losers=("loser",),
        reported_votes={(CVR, "winner"): w1, (CVR, "loser"): l1,
                        (NOCVR, "winner"): w2, (NOCVR, "loser"): l2},
        ballots={CVR: N1, NOCVR: N2},
    )


def example1(trials: int = 10_000) -> Scenario:
    """Medium election: 110,000 ballots, 1.8% diluted margin, 9.1% without CVRs.

    Risk limit 10%, split 3% for the CVR stratum; 30% of the margin is
    tolerated in the CVR stratum.
    """
    alpha, alpha1 = 0.10, 0.03
    return Scenario(
        name="example-1",
        contest=_contest((45_500, 49_500), (7_500, 1_500), 100_000, 10_000),
        cvr_stratum=CVR, polling_stratum=NOCVR,
        allocation=RiskAllocation(alpha, alpha1, float(default_alpha2(alpha, alpha1)), 0.3),
        inflation=SUPER_SIMPLE_INFLATION,
        schedule=tuple(range(25, 1001, 25)),
        trials=trials,
    )


def example1_low_legacy(trials: int = 10_000) -> Scenario:
    """Variant with 1.2% of ballots lacking CVRs and a 10,000-vote margin."""
    base = example1(trials)
    return Scenario(
        name="example-1-low-legacy",
        contest=_contest((53_000, 44_000), (1_100, 100), 108_680, 1_320),
        cvr_stratum=CVR, polling_stratum=NOCVR,
        allocation=base.allocation, inflation=base.inflation,
        schedule=base.schedule, trials=trials,
    )


def example2(trials: int = 10_000) -> Scenario:
    """Large election: 2 million ballots, 25% diluted margin, risk limit 5%.

    10% of the margin is tolerated in the CVR stratum of 350,000 ballots.
    """
    alpha, alpha1 = 0.05, 0.03
    return Scenario(
        name="example-2",
        contest=_contest((225_000, 75_000), (450_000, 100_000), 350_000, 1_650_000),
        cvr_stratum=CVR, polling_stratum=NOCVR,
        allocation=RiskAllocation(alpha, alpha1, float(default_alpha2(alpha, alpha1)), 0.1),
        inflation=SUPER_SIMPLE_INFLATION,
        schedule=tuple(range(5, 401, 5)),
        trials=trials,
    )


# ---------------------------------------------------------------------------
# escalation example: reported margin just over 1%, true tie in both strata
#
# Scaled to 200,000 ballots: 1,900 CVR batches of 100 ballots and a 10,000
# ballot no-CVR stratum, so a 5% polling sample is 500 ballots.

ESC_BATCHES = 1_900
ESC_BATCH_SIZE = 100
ESC_N2 = 10_000
ESC_REPORTED_BATCH = {"winner": 50, "loser": 49}      # per CVR batch
ESC_TRUE_BATCH = {"winner": 49, "loser": 49}
ESC_REPORTED_NOCVR = {"winner": 4_600, "loser": 4_400}
ESC_TRUE_NOCVR = {"winner": 4_500, "loser": 4_500}
ESC_SEED = "escalation-example-2018"
ESC_ALPHA, ESC_ALPHA2 = 0.05, 0.04
ESC_LAMBDA1 = 0.3


def escalation_contest() -> ContestSpec:
    n1 = ESC_BATCHES * ESC_BATCH_SIZE
    return _contest(
        (ESC_REPORTED_BATCH["winner"] * ESC_BATCHES, ESC_REPORTED_BATCH["loser"] * ESC_BATCHES),
        (ESC_REPORTED_NOCVR["winner"], ESC_REPORTED_NOCVR["loser"]), n1, ESC_N2,
    )


def escalation_allocation(rule: str = ADJUST_THRESHOLD) -> RiskAllocation:
    alpha1 = float(default_alpha2(ESC_ALPHA, ESC_ALPHA2))
    return RiskAllocation(ESC_ALPHA, alpha1, ESC_ALPHA2, ESC_LAMBDA1, rule)


def escalation_polling_tallies(n: int, seed: str = ESC_SEED) -> PollingSample:
    """Tallies of the first ``n`` polled ballots; ballot ``i`` is a winner vote for
    ``i <= 4500``, a loser vote for ``4500 < i <= 9000`` and neither above."""
    idx = np.array(draw_srs(stratum_seed(seed, NOCVR), ESC_N2, n))
    bw = int(np.sum(idx <= ESC_TRUE_NOCVR["winner"]))
    bl = int(np.sum((idx > ESC_TRUE_NOCVR["winner"])
                    & (idx <= ESC_TRUE_NOCVR["winner"] + ESC_TRUE_NOCVR["loser"])))
    return PollingSample(n, bw, bl)


@dataclass(frozen=True)
class EscalationOutcome:
    scenario: int
    decision: str
    polling_pvalues: tuple      # (lambda2 share, null threshold c, p) per assessment
    log: tuple


def escalation_replay(scenario: int, sample_size: int = 500,
                      rule: str = ADJUST_THRESHOLD) -> EscalationOutcome:
    """Replay one of the two escalation scenarios with the fixed-split procedure.

    Scenario 1: the CVR stratum is fully counted first. Scenario 2: the
    polling stratum is assessed first, then the CVR full count arrives.
    """
    contest = escalation_contest()
    margins = derive_margins(contest)
    alloc = escalation_allocation(rule)
    pair = margins.pairs[0]
    sample = escalation_polling_tallies(sample_size)
    truth_cvr = {k: v * ESC_BATCHES for k, v in ESC_TRUE_BATCH.items()}
    state = initial_state(margins, (CVR, NOCVR), alloc.lambda1)
    pvals = []

    def assess_polling(st):
        lam = st.lam(NOCVR, pair)
        c = polling_null_threshold(margins, NOCVR, lam, pair)
        p = tri_pvalue(sample.n, sample.diff, ESC_N2, c)
        pvals.append((lam, c, p))
        return p

    if scenario == 2:
        p = assess_polling(state)
        if p <= alloc.alpha2:
            state = audit_state_step(state, StratumRejected(NOCVR, p), margins, rule)
    elif scenario != 1:
        raise ValueError("scenario must be 1 or 2")
    state = audit_state_step(state, StratumFullCount(CVR, truth_cvr), margins, rule)
    if state.status[NOCVR] == "sampling":
        p = assess_polling(state)
        if p <= alloc.alpha2:
            state = audit_state_step(state, StratumRejected(NOCVR, p), margins, rule)
        else:
            state = audit_state_step(state, StratumFullCount(NOCVR, ESC_TRUE_NOCVR), margins,
                                     rule)
    elif rule == AUTO_FULL_COUNT and NOCVR not in state.handcounts:
        state = audit_state_step(state, StratumFullCount(NOCVR, ESC_TRUE_NOCVR), margins, rule)
    return EscalationOutcome(scenario, state.decision, tuple(pvals), state.log)


def escalation_true_marks(ballot_index: int) -> frozenset:
    """True vote on no-CVR ballot ``ballot_index`` (1-based) in the escalation example."""
    if ballot_index <= ESC_TRUE_NOCVR["winner"]:
        return frozenset({"winner"})
    if ballot_index <= ESC_TRUE_NOCVR["winner"] + ESC_TRUE_NOCVR["loser"]:
        return frozenset({"loser"})
    return frozenset()


def write_escalation_audit(directory, rule: str = ADJUST_THRESHOLD) -> Path:
    """Write contest, manifests and config for the escalation example; returns the config path."""
    from . import io as fmt

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    contest = escalation_contest()
    cands = ("winner", "loser")
    cvr = StratumManifest(
        CVR, COMPARISON, ESC_BATCHES * ESC_BATCH_SIZE,
        tuple(Batch(f"cvr-{i:04d}", ESC_BATCH_SIZE, dict(ESC_REPORTED_BATCH))
              for i in range(1, ESC_BATCHES + 1)),
    )
    county_batches = 10
    per = ESC_N2 // county_batches
    nocvr = StratumManifest(
        NOCVR, POLLING, ESC_N2,
        tuple(Batch(f"nocvr-{i:02d}", per) for i in range(1, county_batches + 1)),
        {f"nocvr-{i:02d}": f"county-{(i - 1) // 5 + 1}" for i in range(1, county_batches + 1)},
    )
    (d / "contest.csv").write_text(fmt.emit_contest(replace(contest, ballots=None)),
                                   encoding="utf-8")
    (d / "cvr_manifest.csv").write_text(fmt.emit_manifest(cvr, cands), encoding="utf-8")
    (d / "nocvr_manifest.csv").write_text(fmt.emit_manifest(nocvr), encoding="utf-8")
    alloc = escalation_allocation(rule)
    cfg = fmt.AuditConfig(
        contest="contest.csv",
        strata={CVR: (COMPARISON, "cvr_manifest.csv"), NOCVR: (POLLING, "nocvr_manifest.csv")},
        allocation=alloc, seed=ESC_SEED,
    )
    path = d / "audit.cfg"
    path.write_text(fmt.emit_config(cfg), encoding="utf-8")
    return path


def all_examples(trials: int = 10_000) -> list:
    return [example1(trials), example1_low_legacy(trials), example2(trials)]


__all__ = [
    "CVR", "NOCVR", "example1", "example1_low_legacy", "example2", "all_examples",
    "escalation_contest", "escalation_allocation", "escalation_polling_tallies",
    "escalation_replay", "EscalationOutcome", "escalation_true_marks", "write_escalation_audit",
]
