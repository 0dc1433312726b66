"""Batch-level comparison audits of a tolerable overstatement.

Batches may hold any number of ballots; a ballot-level comparison audit is the
special case of single-ballot batches. Errors are measured in units of the
pairwise reported margin, bounded a priori per batch, and converted to taints
that feed the Kaplan-Markov or Kaplan-Wald sequential tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .model import Batch, MarginTable, StratumManifest, ValidationError, exact

SHARP = "sharp"
SIMPLE = "simple"
AUTO = "auto"

# Inflation factor of the "super-simple" ballot-level comparison method.
SUPER_SIMPLE_INFLATION = Fraction("1.03905")

_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class BatchErrorBound:
    batch_id: str
    bound: Fraction
    mode: str


@dataclass(frozen=True)
class TaintObservation:
    batch_id: str
    error: Fraction
    taint: Fraction


def batch_upper_bound(batch: Batch, margins: MarginTable, mode: str = AUTO,
                      inflation=1) -> BatchErrorBound:
    """A priori upper bound ``u_p`` on the relative overstatement in ``batch``.

    ``sharp`` uses the reported subtotals, ``max (v_w - v_l + n_p) / V_wl``;
    ``simple`` uses ``2 n_p / V``; ``auto`` is sharp when subtotals are known.
    ``inflation >= 1`` scales the bound up, which keeps the test conservative.
    """
    inflation = exact(inflation)
    if inflation < 1:
        raise ValidationError("inflation must be >= 1")
    if mode == AUTO:
        mode = SIMPLE if batch.votes is None else SHARP
    if mode == SIMPLE:
        u = Fraction(2 * batch.size, margins.min_margin)
    elif mode == SHARP:
        u = max(
            Fraction(batch.reported(w) - batch.reported(l) + batch.size, margins.margin((w, l)))
            for w, l in margins.pairs
        )
    else:
        raise ValidationError(f"unknown bound mode {mode!r}")
    return BatchErrorBound(batch.batch_id, u * inflation, mode)


def observed_error(batch: Batch, audited: Mapping[str, int], margins: MarginTable) -> Fraction:
    """Largest relative overstatement ``e_p`` of any pairwise margin in the batch."""
    for cand, a in audited.items():
        if not 0 <= a <= batch.size:
            raise ValidationError(
                f"batch {batch.batch_id}: audited votes for {cand} = {a} outside [0, {batch.size}]"
            )
    return max(
        Fraction(
            batch.reported(w) - audited.get(w, 0) - batch.reported(l) + audited.get(l, 0),
            margins.margin((w, l)),
        )
        for w, l in margins.pairs
    )


def observed_taint(batch: Batch, audited: Mapping[str, int], margins: MarginTable,
                   bound: BatchErrorBound) -> TaintObservation:
    if bound.batch_id != batch.batch_id:
        raise ValidationError(f"bound is for batch {bound.batch_id}, not {batch.batch_id}")
    e = observed_error(batch, audited, margins)
    if bound.bound == 0:
        if e > 0:
            raise ValidationError(f"batch {batch.batch_id}: error {e} exceeds zero bound")
        return TaintObservation(batch.batch_id, e, Fraction(0))
    t = e / bound.bound
    if t > 1:
        raise ValidationError(
            f"batch {batch.batch_id}: taint {t} > 1; the bound does not cover this batch"
        )
    return TaintObservation(batch.batch_id, e, t)


def two_vote_overstatement(batch: Batch, margins: MarginTable,
                           bound: BatchErrorBound) -> TaintObservation:
    """Worst-case observation for a ballot that cannot be compared to a CVR.

    Treats every ballot in the batch as reported for the winner of the
    closest pair and actually for its loser.
    """
    e = Fraction(2 * batch.size, margins.min_margin)
    return TaintObservation(batch.batch_id, e, min(Fraction(1), e / bound.bound))


def _check_threshold(t):
    if not 0 < t < 1:
        raise ValidationError(f"threshold t must be in (0, 1), got {t}")


def _as_taints(taints) -> np.ndarray:
    x = np.asarray([float(v) for v in taints], dtype=float)
    if x.size and x.max() > 1:
        raise ValidationError("taints must be <= 1")
    return x


def sequential_pvalue_path(growth: np.ndarray) -> np.ndarray:
    """Running p-values ``min(1, 1 / max_{k'<=k} prod_{j<=k'} growth_j)``.

    Computed in log space. A growth factor at or below the smallest normal
    float (a taint of 1 under Kaplan-Markov) sets the p-value to 1 from that
    draw on.
    """
    growth = np.asarray(growth, dtype=float)
    if growth.size == 0:
        return growth
    dead = np.cumsum(growth <= _TINY) > 0
    with np.errstate(divide="ignore"):
        logs = np.where(dead, 0.0, np.log(np.maximum(growth, _TINY)))
    best = np.maximum.accumulate(np.cumsum(logs))
    path = np.minimum(1.0, np.exp(-best))
    path[dead] = 1.0
    return path


def km_growth(taints, t) -> np.ndarray:
    return (1 - _as_taints(taints)) / (1 - float(t))


def kw_growth(taints, t, gamma) -> np.ndarray:
    return gamma * (1 - _as_taints(taints)) / (1 - float(t)) + 1 - gamma


def km_pvalue_path(taints: Sequence, t) -> np.ndarray:
    _check_threshold(t)
    return sequential_pvalue_path(km_growth(taints, t))


def kw_pvalue_path(taints: Sequence, t, gamma: float = 0.95) -> np.ndarray:
    _check_threshold(t)
    if not 0 < gamma <= 1:
        raise ValidationError(f"gamma must be in (0, 1], got {gamma}")
    return sequential_pvalue_path(kw_growth(taints, t, gamma))


def km_pvalue(taints: Sequence, t) -> float:
    """Kaplan-Markov p-value for the null that the mean taint is at least ``t``.

    Draws are with replacement, with probability proportional to the batch
    error bounds, so ``t = lambda / U``.
    """
    path = km_pvalue_path(taints, t)
    return float(path[-1]) if path.size else 1.0


def kw_pvalue(taints: Sequence, t, gamma: float = 0.95) -> float:
    """Kaplan-Wald p-value; identical to :func:`km_pvalue` when ``gamma == 1``."""
    path = kw_pvalue_path(taints, t, gamma)
    return float(path[-1]) if path.size else 1.0


def clean_sample_size(t, alpha) -> int:
    """Smallest n with ``(1 - t)**n <= alpha``: draws needed when no errors are found."""
    _check_threshold(t)
    if not 0 < alpha <= 1:
        raise ValidationError(f"alpha must be in (0, 1], got {alpha}")
    if alpha == 1:
        return 0
    t, alpha = float(t), float(alpha)
    n = max(0, math.ceil(math.log(alpha) / math.log1p(-t)))
    # guard the ceiling against rounding in the logs
    while n > 0 and (n - 1) * math.log1p(-t) <= math.log(alpha):
        n -= 1
    while n * math.log1p(-t) > math.log(alpha):
        n += 1
    return n


def stratum_bounds(manifest: StratumManifest, margins: MarginTable, mode: str = AUTO,
                   inflation=1) -> list:
    return [batch_upper_bound(b, margins, mode, inflation) for b in manifest.batches]


@dataclass(frozen=True)
class ComparisonEvidence:
    """Cumulative comparison-audit data for one stratum, testable at any tolerance.

    ``total_bound`` is ``U``; ``taints`` are in draw order.
    """

    total_bound: Fraction
    taints: tuple = ()
    test: str = "km"
    gamma: float = 0.95

    def threshold(self, lam) -> Fraction:
        return exact(lam) / self.total_bound

    def pvalue(self, lam) -> float:
        """p-value of the null ``E >= lam``, defined for every real ``lam``.

        ``lam <= 0`` cannot be rejected by these tests (p = 1). ``lam / U > 1``
        is impossible because taints never exceed 1 (p = 0).
        """
        t = self.threshold(lam)
        if t <= 0:
            return 1.0
        if t > 1:
            return 0.0
        if t == 1:
            return 1.0 if all(x == 1 for x in self.taints) else 0.0
        if self.test == "km":
            return km_pvalue(self.taints, t)
        if self.test == "kw":
            return kw_pvalue(self.taints, t, self.gamma)
        raise ValidationError(f"unknown comparison test {self.test!r}")
