"""Contest, stratum and batch types plus margin arithmetic.

All vote arithmetic is exact: integers for counts, :class:`fractions.Fraction`
for ratios.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Mapping, Optional

COMPARISON = "comparison"
POLLING = "polling"


class ValidationError(ValueError):
    """Input data violates a documented precondition."""


class MarginError(ValidationError):
    """The reported outcome is not well-formed (some winner does not beat some loser)."""


class StateError(RuntimeError):
    """An audit event arrived that the current state cannot accept."""


def exact(x) -> Fraction:
    """Convert ``x`` to a Fraction, reading floats by their decimal repr (0.7 -> 7/10)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):      # includes numpy.float64
        return Fraction(repr(float(x)))
    if hasattr(x, "item"):        # other numpy scalars
        return exact(x.item())
    return Fraction(x)


@dataclass(frozen=True)
class Batch:
    """A physically identifiable group of ballots with reported subtotals.

    ``votes`` maps candidate to reported count in ``[0, size]``. ``None`` means
    the subtotals are unknown (only the simple error bound is then usable).
    """

    batch_id: str
    size: int
    votes: Optional[Mapping[str, int]] = None

    def __post_init__(self):
        if self.size < 1:
            raise ValidationError(f"batch {self.batch_id}: size must be >= 1, got {self.size}")
        if self.votes is not None:
            for cand, v in self.votes.items():
                if not 0 <= v <= self.size:
                    raise ValidationError(
                        f"batch {self.batch_id}: votes for {cand} = {v} outside [0, {self.size}]"
                    )

    def reported(self, candidate: str) -> int:
        if self.votes is None:
            raise ValidationError(f"batch {self.batch_id} has no reported subtotals")
        return self.votes.get(candidate, 0)


@dataclass(frozen=True)
class StratumManifest:
    stratum_id: str
    kind: str
    ballots: int
    batches: tuple = ()
    counties: Mapping[str, str] = field(default_factory=dict)  # batch_id -> county

    def __post_init__(self):
        if self.kind not in (COMPARISON, POLLING):
            raise ValidationError(f"stratum {self.stratum_id}: unknown kind {self.kind!r}")
        if self.ballots < 1:
            raise ValidationError(f"stratum {self.stratum_id}: ballot count must be positive")
        if self.batches:
            ids = [b.batch_id for b in self.batches]
            if len(set(ids)) != len(ids):
                raise ValidationError(f"stratum {self.stratum_id}: duplicate batch ids")
            total = sum(b.size for b in self.batches)
            if total != self.ballots:
                raise ValidationError(
                    f"stratum {self.stratum_id}: batch sizes sum to {total}, expected {self.ballots}"
                )
        elif self.kind == COMPARISON:
            raise ValidationError(f"comparison stratum {self.stratum_id} needs batches")

    def batch(self, batch_id: str) -> Batch:
        for b in self.batches:
            if b.batch_id == batch_id:
                return b
        raise ValidationError(f"stratum {self.stratum_id}: no batch {batch_id!r}")


@dataclass(frozen=True)
class ContestSpec:
    """Reported results of a single plurality (vote-for-k) contest.

    ``reported_votes`` maps ``(stratum_id, candidate)`` to a vote count.
    ``ballots`` optionally gives ballots cast per stratum; when omitted the
    stratum's total vote count stands in (exact for vote-for-1 with no
    undervotes).
    """

    candidates: tuple
    winners: frozenset
    losers: frozenset
    reported_votes: Mapping[tuple, int]
    ballots: Optional[Mapping[str, int]] = None

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        object.__setattr__(self, "winners", frozenset(self.winners))
        object.__setattr__(self, "losers", frozenset(self.losers))
        if not self.winners or not self.losers:
            raise ValidationError("contest needs at least one winner and one loser")
        if self.winners & self.losers:
            raise ValidationError("winners and losers overlap")
        unknown = (self.winners | self.losers) - set(self.candidates)
        if unknown:
            raise ValidationError(f"unknown candidates: {sorted(unknown)}")
        for (s, c), v in self.reported_votes.items():
            if v < 0:
                raise ValidationError(f"negative vote count for {c} in stratum {s}")
            if c not in self.candidates:
                raise ValidationError(f"votes reported for unknown candidate {c!r}")

    @property
    def strata(self) -> tuple:
        seen = dict.fromkeys(s for s, _ in self.reported_votes)
        if self.ballots:
            seen.update(dict.fromkeys(self.ballots))
        return tuple(seen)

    def votes(self, stratum: str, candidate: str) -> int:
        return self.reported_votes.get((stratum, candidate), 0)

    def pairs(self):
        return sorted(product(self.winners, self.losers))


@dataclass(frozen=True)
class MarginTable:
    """Reported pairwise margins, overall and per stratum, in votes."""

    pair_margins: Mapping[tuple, int]
    stratum_margins: Mapping[tuple, int]  # (w, l, stratum) -> V_{wl,s}
    stratum_ballots: Mapping[str, int]

    @property
    def pairs(self):
        return sorted(self.pair_margins)

    @property
    def strata(self):
        return tuple(self.stratum_ballots)

    @property
    def min_margin(self) -> int:
        return min(self.pair_margins.values())

    @property
    def ballots(self) -> int:
        return sum(self.stratum_ballots.values())

    @property
    def diluted_margin(self) -> Fraction:
        return Fraction(self.min_margin, self.ballots)

    def margin(self, pair) -> int:
        return self.pair_margins[tuple(pair)]

    def stratum_margin(self, pair, stratum) -> int:
        w, l = pair
        return self.stratum_margins[(w, l, stratum)]


def derive_margins(contest: ContestSpec) -> MarginTable:
    strata = contest.strata
    ballots = {}
    for s in strata:
        if contest.ballots and s in contest.ballots:
            ballots[s] = contest.ballots[s]
        else:
            ballots[s] = sum(contest.votes(s, c) for c in contest.candidates)
    if sum(ballots.values()) <= 0:
        raise ValidationError("contest has no ballots")
    pair_margins, stratum_margins = {}, {}
    for w, l in contest.pairs():
        total = 0
        for s in strata:
            m = contest.votes(s, w) - contest.votes(s, l)
            stratum_margins[(w, l, s)] = m
            total += m
        if total <= 0:
            raise MarginError(
                f"reported outcome not well-formed: margin of {w} over {l} is {total}"
            )
        pair_margins[(w, l)] = total
    return MarginTable(pair_margins, stratum_margins, ballots)


def diluted_margin_after_handcount(V_w, V_l, V_w_legacy, V_l_legacy, N_cvr) -> Fraction:
    """Diluted margin left for the CVR comparison audit once legacy ballots are hand counted.

    A non-positive result means the legacy tally alone reverses or ties the
    reported outcome; callers should then count everything by hand.
    """
    if min(V_w, V_l, V_w_legacy, V_l_legacy) < 0:
        raise ValidationError("vote counts must be nonnegative")
    if N_cvr <= 0:
        raise ValidationError("N_cvr must be positive")
    return Fraction((V_w - V_w_legacy) - (V_l - V_l_legacy), N_cvr)


def worst_case_legacy_reduction(N_legacy: int, V_w: int, V_l: int) -> int:
    """Largest possible overstatement (in votes) of w's margin over l from legacy ballots."""
    if min(N_legacy, V_w, V_l) < 0:
        raise ValidationError("counts must be nonnegative")
    if V_w + V_l > N_legacy:
        raise ValidationError(f"V_w + V_l = {V_w + V_l} exceeds legacy ballots {N_legacy}")
    return N_legacy + V_w - V_l


def stratum_overstatement(reported_margin: int, actual_margin: int) -> int:
    """Overstatement of a stratum margin: reported minus actual, in votes."""
    return reported_margin - actual_margin
