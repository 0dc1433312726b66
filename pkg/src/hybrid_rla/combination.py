"""Combining the two stratum tests into one audit of the contest.

Two procedures are supported:

* a fixed split of the tolerable overstatement (``lambda1`` and
  ``1 - lambda1``) with a risk limit per stratum and an escalation rule for
  when one stratum is fully hand counted, and
* Fisher's combining function, maximized over every split of the margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np

from .model import MarginTable, StateError, ValidationError, exact

AUTO_FULL_COUNT = "auto-full-count"
ADJUST_THRESHOLD = "adjust-threshold"

SAMPLING = "sampling"
FULL_HAND_COUNT = "full-hand-count"
CONFIRMED = "confirmed"


@dataclass(frozen=True)
class RiskAllocation:
    alpha: float
    alpha1: float
    alpha2: float
    lambda1: float
    rule: str = ADJUST_THRESHOLD

    @property
    def lambda2(self) -> Fraction:
        return 1 - exact(self.lambda1)

    def stratum_alpha(self, index: int) -> float:
        return (self.alpha1, self.alpha2)[index]


def default_alpha2(alpha, alpha1) -> Fraction:
    """Largest ``alpha2`` with ``(1 - alpha1)(1 - alpha2) >= 1 - alpha``."""
    return 1 - (1 - exact(alpha)) / (1 - exact(alpha1))


def validate_allocation(alloc: RiskAllocation) -> list:
    """Constraint violations of ``alloc``, each with both sides evaluated; empty if valid."""
    problems = []
    a, a1, a2 = exact(alloc.alpha), exact(alloc.alpha1), exact(alloc.alpha2)
    for name, v in (("alpha", a), ("alpha1", a1), ("alpha2", a2)):
        if not 0 < v < 1:
            problems.append(f"{name} in (0, 1): got {float(v)}")
    for name, v in (("alpha1", a1), ("alpha2", a2)):
        if v > a:
            problems.append(f"{name} <= alpha: {float(v)} > {float(a)}")
    if alloc.rule == ADJUST_THRESHOLD:
        lhs, rhs = (1 - a1) * (1 - a2), 1 - a
        if lhs < rhs:
            problems.append(
                f"(1 - alpha1)(1 - alpha2) >= 1 - alpha: {float(lhs):.6f} < {float(rhs):.6f}"
            )
    elif alloc.rule != AUTO_FULL_COUNT:
        problems.append(f"unknown escalation rule {alloc.rule!r}")
    return problems


def adjust_lambda_after_handcount(margin, handcount_overstatement) -> Fraction:
    """Tolerable-overstatement share left for the other stratum after a full count.

    ``handcount_overstatement`` is the overstatement of the pairwise margin the
    hand count revealed in the counted stratum (reported minus counted margin).
    The other stratum is then retested against ``(V - omega_h) / V``.
    """
    return (exact(margin) - exact(handcount_overstatement)) / exact(margin)


def chi2_4_sf(x: float) -> float:
    """Survival function of the chi-square law with 4 degrees of freedom."""
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return math.exp(-x / 2) * (1 + x / 2)


def fisher_combine(p1: float, p2: float) -> tuple:
    """Fisher's statistic ``-2 (ln p1 + ln p2)`` and its chi-square(4) tail probability."""
    for p in (p1, p2):
        if not 0 <= p <= 1:
            raise ValidationError(f"p-value {p} outside [0, 1]")
    if p1 == 0 or p2 == 0:
        return math.inf, 0.0
    chi = -2 * (math.log(p1) + math.log(p2))
    return chi, chi2_4_sf(chi)


def feasible_lambda_interval(margins: MarginTable, stratum1: str, stratum2: str,
                             pair=None) -> tuple | None:
    """Values of ``lambda1`` for which both stratum nulls can hold.

    Uses ``omega_s`` in ``[V_s - N_s, V_s + N_s]``. Returns None when the
    interval is empty, in which case the counting bounds alone confirm the
    outcome.
    """
    if pair is None:
        if len(margins.pairs) != 1:
            raise ValidationError("contest has several winner/loser pairs; pass pair=")
        pair = margins.pairs[0]
    V = margins.margin(pair)
    V1 = margins.stratum_margin(pair, stratum1)
    V2 = margins.stratum_margin(pair, stratum2)
    N1 = margins.stratum_ballots[stratum1]
    N2 = margins.stratum_ballots[stratum2]
    lo = Fraction(V - V2 - N2, V)
    hi = Fraction(V1 + N1, V)
    return (lo, hi) if lo <= hi else None


@dataclass(frozen=True)
class LambdaScan:
    pvalue: float             # certified maximum (grid max, or cell bound when bracketing)
    lambda1: float            # grid point attaining the largest grid value
    grid_max: float
    grid: np.ndarray = field(repr=False)
    combined: np.ndarray = field(repr=False)
    p1: np.ndarray = field(repr=False)
    p2: np.ndarray = field(repr=False)
    early_exit: bool = False


def combined_pvalue_over_lambda(pvalue1: Callable, pvalue2: Callable, interval,
                                grid: int = 1000, bracket: bool = True,
                                alpha: float | None = None) -> LambdaScan:
    """Largest Fisher-combined p-value over ``lambda1`` in ``interval``.

    ``pvalue1(lambda1)`` and ``pvalue2(lambda2)`` are the stratum p-values,
    with ``lambda2 = 1 - lambda1``. With ``bracket=True`` both are taken to be
    non-increasing in their own argument, as the comparison and polling tests
    are. Each grid cell ``[a, b]`` is then bounded by combining ``p1(a)`` with
    ``p2(1 - b)``, which covers every ``lambda1`` in the cell, not only the
    grid points.

    If ``alpha`` is given the scan stops at the first value above it. The
    audit cannot stop in that case, and ``pvalue`` is only a lower bound.
    """
    if grid < 2:
        raise ValidationError("lambda grid needs at least 2 points")
    if interval is None:
        empty = np.array([])
        return LambdaScan(0.0, math.nan, 0.0, empty, empty, empty, empty)
    lo, hi = (float(x) for x in interval)
    lams = np.linspace(lo, hi, grid)
    p1 = np.full(grid, np.nan)
    p2 = np.full(grid, np.nan)
    comb = np.full(grid, np.nan)
    best, early = 0.0, False
    for g, lam in enumerate(lams):
        p1[g] = pvalue1(lam)
        p2[g] = pvalue2(1 - lam)
        comb[g] = fisher_combine(p1[g], p2[g])[1]
        best = max(best, comb[g])
        if bracket and g > 0:
            best = max(best, fisher_combine(p1[g - 1], p2[g])[1])
        if alpha is not None and best > alpha:
            early = True
            break
    seen = ~np.isnan(comb)
    k = int(np.nanargmax(comb)) if seen.any() else 0
    return LambdaScan(float(best), float(lams[k]), float(np.nanmax(comb)), lams, comb, p1, p2,
                      early)


# ---------------------------------------------------------------------------
# escalation state machine for the fixed-split procedure


@dataclass(frozen=True)
class StratumRejected:
    stratum: str
    pvalue: float


@dataclass(frozen=True)
class StratumFullCount:
    """Stratum fully hand counted; ``tally`` maps candidate to counted votes."""

    stratum: str
    tally: Mapping[str, int]


@dataclass(frozen=True)
class RoundRecorded:
    stratum: str
    round: int


@dataclass(frozen=True)
class AuditState:
    strata: tuple                        # (stratum1, stratum2)
    status: Mapping[str, str]
    lambdas: Mapping[tuple, Fraction]    # (stratum, w, l) -> tolerable share
    handcounts: Mapping[str, Mapping[str, int]]
    rounds: Mapping[str, int]
    log: tuple = ()

    @property
    def decision(self) -> str:
        st = [self.status[s] for s in self.strata]
        if all(x == FULL_HAND_COUNT for x in st):
            return "full-recount"
        if all(x in (CONFIRMED, FULL_HAND_COUNT) for x in st):
            return "confirmed"
        return "continue"

    def lam(self, stratum: str, pair) -> Fraction:
        w, l = pair
        return self.lambdas[(stratum, w, l)]


def initial_state(margins: MarginTable, strata: tuple, lambda1) -> AuditState:
    s1, s2 = strata
    lam1 = exact(lambda1)
    lambdas = {}
    for w, l in margins.pairs:
        lambdas[(s1, w, l)] = lam1
        lambdas[(s2, w, l)] = 1 - lam1
    return AuditState(tuple(strata), {s1: SAMPLING, s2: SAMPLING}, lambdas, {},
                      {s1: 0, s2: 0}, ())


def audit_state_step(state: AuditState, event, margins: MarginTable,
                     rule: str = ADJUST_THRESHOLD) -> AuditState:
    """Apply one audit event and return the new state; the input is unchanged."""
    s = event.stratum
    if s not in state.strata:
        raise StateError(f"unknown stratum {s!r}")
    other = state.strata[1 - state.strata.index(s)]
    status = dict(state.status)
    log = list(state.log)

    if isinstance(event, RoundRecorded):
        if s in state.handcounts:
            raise StateError(f"stratum {s} is fully hand counted; no more sample rounds")
        if event.round != state.rounds[s] + 1:
            raise StateError(f"stratum {s}: expected round {state.rounds[s] + 1}, got {event.round}")
        rounds = dict(state.rounds)
        rounds[s] = event.round
        log.append(f"round {event.round} recorded in {s}")
        return replace(state, rounds=rounds, log=tuple(log))

    if isinstance(event, StratumRejected):
        if status[s] != SAMPLING:
            raise StateError(f"stratum {s} is {status[s]}; cannot accept a rejection")
        status[s] = CONFIRMED
        log.append(f"{s} null rejected (p = {event.pvalue:.6g}); stratum confirmed")
        if all(status[x] in (CONFIRMED, FULL_HAND_COUNT) for x in state.strata):
            log.append("both strata resolved; outcome confirmed")
        return replace(state, status=status, log=tuple(log))

    if isinstance(event, StratumFullCount):
        if s in state.handcounts:
            raise StateError(f"stratum {s} was already fully hand counted")
        status[s] = FULL_HAND_COUNT
        handcounts = dict(state.handcounts)
        handcounts[s] = dict(event.tally)
        lambdas = dict(state.lambdas)
        log.append(f"{s} fully hand counted")
        if status[other] != FULL_HAND_COUNT:
            if rule == AUTO_FULL_COUNT:
                status[other] = FULL_HAND_COUNT
                log.append(f"{other} must now be fully hand counted ({AUTO_FULL_COUNT} rule)")
            elif rule == ADJUST_THRESHOLD:
                for w, l in margins.pairs:
                    counted = event.tally.get(w, 0) - event.tally.get(l, 0)
                    omega = margins.stratum_margin((w, l), s) - counted
                    new = adjust_lambda_after_handcount(margins.margin((w, l)), omega)
                    lambdas[(other, w, l)] = new
                    log.append(f"{other} tolerance for {w}>{l} reset to {float(new):.6g}")
                if status[other] == CONFIRMED:
                    log.append(f"{other} reopened under the adjusted tolerance")
                status[other] = SAMPLING
            else:
                raise StateError(f"unknown escalation rule {rule!r}")
        if all(status[x] == FULL_HAND_COUNT for x in state.strata):
            log.append("every stratum hand counted; the hand count determines the outcome")
        return replace(state, status=status, lambdas=lambdas, handcounts=handcounts,
                       log=tuple(log))

    raise StateError(f"unrecognized event {event!r}")
