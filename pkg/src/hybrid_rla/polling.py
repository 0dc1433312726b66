"""Ballot-polling tests of a bound on the stratum vote margin.

Tests the composite null ``A_w - A_l <= c`` for a stratum of ``N`` ballots from
a simple random sample drawn without replacement. The main test conditions
on the attained sample size and uses the tri-hypergeometric law of the
sample tallies. A second test also conditions on the number of ballots for
either candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .model import MarginTable, ValidationError, exact

TRI = "tri"
COND_HYPER = "cond-hyper"

INTERIOR_GRID = 100


def log_comb(n, k):
    """``log C(n, k)``, elementwise, with ``-inf`` wherever ``k < 0`` or ``k > n``."""
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    ok = (k >= 0) & (k <= n)
    nn, kk = np.where(ok, n, 0.0), np.where(ok, k, 0.0)
    out = gammaln(nn + 1) - gammaln(kk + 1) - gammaln(nn - kk + 1)
    return np.where(ok, out, -np.inf)


_LOG_FACT = np.zeros(1)


_BLOCK_ELEMENTS = 1 << 20    # cap on entries in one (K, block) temporary


def _log_factorials(n: int) -> np.ndarray:
    """Table of ``log k!`` for ``k = 0..n`` at least, grown geometrically and kept."""
    global _LOG_FACT
    if _LOG_FACT.size <= n:
        size = max(n + 1, 2 * _LOG_FACT.size, 1024)
        _LOG_FACT = gammaln(np.arange(size, dtype=float) + 1)
    return _LOG_FACT


def _lcomb(lf: np.ndarray, n, k) -> np.ndarray:
    """``log C(n, k)`` from a log-factorial table; integer ``n >= 0``, any integer ``k``."""
    n = np.asarray(n, dtype=np.int64)
    k = np.asarray(k, dtype=np.int64)
    ok = (k >= 0) & (k <= n)
    kk = np.minimum(np.maximum(k, 0), n)
    return np.where(ok, lf[n] - lf[kk] - lf[n - kk], -np.inf)


def _tri_tail_many(A_w, A_l, N: int, n: int, diff: int) -> np.ndarray:
    """``P(B_w - B_l >= diff)`` for each population ``(A_w[k], A_l[k])``.

    Tails above 1/2 are recomputed as ``1 - P(B_l - B_w >= 1 - diff)``: the
    small complement carries full relative precision, so values near 1 stay
    accurate and keep their order across populations.
    """
    A_w = np.atleast_1d(np.asarray(A_w, dtype=np.int64))
    A_l = np.atleast_1d(np.asarray(A_l, dtype=np.int64))
    out = _tri_tail_direct(A_w, A_l, N, n, diff)
    big = out > 0.5
    if big.any():
        out[big] = 1.0 - _tri_tail_direct(A_l[big], A_w[big], N, n, 1 - diff)
    return out


def _tri_tail_direct(A_w, A_l, N: int, n: int, diff: int) -> np.ndarray:
    """``P(B_w - B_l >= diff)`` summed directly.

    Conditions on ``B_w = i``: then ``B_l`` is hypergeometric with ``n - i``
    draws from the ``N - A_w`` other ballots. Its CDF at ``i - diff`` is
    carried from one ``i`` to the next by a recurrence that only adds
    nonnegative terms.
    """
    A_w = np.atleast_1d(np.asarray(A_w, dtype=np.int64))
    A_l = np.atleast_1d(np.asarray(A_l, dtype=np.int64))
    K = A_w.size
    out = np.zeros(K)
    i0 = max(diff, 0)
    if i0 > n:
        return out
    if n == 0:
        return np.ones(K)
    lf = _log_factorials(N)
    M = N - A_w                       # ballots not for w
    A_u = M - A_l
    log_total = float(_lcomb(lf, N, n))

    # first i at which the conditional law of B_l exists (n - i <= M)
    start = np.maximum(i0, n - M)
    live = start <= n
    if not live.any():
        return out

    # Work in column blocks so the (K, block) temporaries stay small even when
    # n is in the millions.
    block = max(1, _BLOCK_ELEMENTS // K)
    Al, Au, Mc = A_l[:, None], A_u[:, None], M[:, None]

    # F[k] = P(B_l <= i - diff | B_w = i) at the current i, built directly at `start`
    r0 = (n - start)[:, None]
    k0 = (start - diff)[:, None]
    norm0 = _lcomb(lf, Mc, np.maximum(r0, 0))
    F = np.zeros(K)
    for lo in range(0, n + 1, block):
        j = np.arange(lo, min(lo + block, n + 1))[None, :]
        logh = _lcomb(lf, Al, j) + _lcomb(lf, Au, r0 - j) - norm0
        F += np.where((j <= k0) & (r0 >= 0), np.exp(logh), 0.0).sum(axis=1)
    F = np.minimum(F, 1.0)

    # The recurrence advancing F from i-1 to i (draws r = n-i+1 -> r-1, cutoff
    # k = i-1-diff -> k+1) only adds nonnegative terms, so F along i is F0 plus
    # a cumulative sum of increments, carried across blocks.
    first = int(start[live].min())
    for lo in range(first, n + 1, block):
        i = np.arange(lo, min(lo + block, n + 1))[None, :]
        r = n - i + 1
        k = i - 1 - diff
        stepping = i > start[:, None]
        # entries before a row's start may be -inf - -inf = nan; np.where drops them
        with np.errstate(invalid="ignore"):
            norm = _lcomb(lf, Mc, np.maximum(r - 1, 0))
            lh_k = _lcomb(lf, Al, k) + _lcomb(lf, Au, r - 1 - k) - norm
            lh_k1 = _lcomb(lf, Al, k + 1) + _lcomb(lf, Au, r - 2 - k) - norm
            denom = Mc - r + 1
            ratio = np.where(denom > 0, (Al - k) / np.maximum(denom, 1), 0.0)
            inc = np.where(stepping, np.exp(lh_k) * ratio + np.exp(lh_k1), 0.0)
        run = F[:, None] + np.cumsum(inc, axis=1)
        F = run[:, -1]
        active = live[:, None] & (i >= start[:, None])
        lw = _lcomb(lf, A_w[:, None], i) + _lcomb(lf, Mc, n - i) - log_total
        out += np.where(active, np.exp(lw) * np.minimum(run, 1.0), 0.0).sum(axis=1)
    return np.minimum(out, 1.0)


def tri_hyper_tail(A_w: int, A_l: int, N: int, n: int, diff: int) -> float:
    """Tail probability ``P(B_w - B_l >= diff)`` of a size-``n`` simple random sample.

    ``diff`` is the observed ``B_w - B_l`` (the diluted sample margin times
    ``n``), kept as an integer so the tail boundary is exact.
    """
    _check_population(A_w, A_l, N)
    if not 0 <= n <= N:
        raise ValidationError(f"sample size {n} outside [0, {N}]")
    return float(_tri_tail_many([A_w], [A_l], N, n, int(diff))[0])


def cond_hyper_tail(A_w: int, A_l: int, m: int, i_min: int) -> float:
    """Hypergeometric upper tail ``P(B_w >= i_min)`` given ``m`` ballots for w or l."""
    if A_w < 0 or A_l < 0:
        raise ValidationError("population counts must be nonnegative")
    if not 0 <= m <= A_w + A_l:
        raise ValidationError(f"m = {m} outside [0, {A_w + A_l}]")
    return float(_cond_tail_many(np.array([A_w]), np.array([A_l]), m, i_min)[0])


def _cond_tail_many(A_w, A_l, m: int, i_min: int) -> np.ndarray:
    A_w = np.asarray(A_w, dtype=float)
    A_l = np.asarray(A_l, dtype=float)
    i = np.arange(max(i_min, 0), m + 1, dtype=float)[None, :]
    if i.size == 0:
        return np.zeros(A_w.size)
    lp = (log_comb(A_w[:, None], i) + log_comb(A_l[:, None], m - i)
          - log_comb((A_w + A_l)[:, None], m))
    return np.minimum(np.exp(lp).sum(axis=1), 1.0)


def _check_population(A_w, A_l, N):
    if A_w < 0 or A_l < 0 or A_w + A_l > N:
        raise ValidationError(f"invalid population A_w={A_w}, A_l={A_l}, N={N}")


@dataclass(frozen=True)
class PollingSample:
    n: int
    B_w: int
    B_l: int

    def __post_init__(self):
        if min(self.n, self.B_w, self.B_l) < 0 or self.B_w + self.B_l > self.n:
            raise ValidationError(f"inconsistent tallies: {self}")

    @property
    def B_u(self) -> int:
        return self.n - self.B_w - self.B_l

    @property
    def diff(self) -> int:
        return self.B_w - self.B_l

    @property
    def m(self) -> int:
        return self.B_w + self.B_l

    @property
    def d(self):
        return exact(self.diff) / self.n if self.n else exact(0)


@dataclass(frozen=True)
class PollingResult:
    pvalue: float
    A_w: int | None = None
    A_l: int | None = None
    status: str = "ok"  # ok | null-empty | unfalsifiable


def null_boundary(N: int, c: int):
    """Range of ``A_w`` on the boundary ``A_w - A_l = c`` with ``A_w + A_l <= N``."""
    lo, hi = max(0, c), (N + c) // 2
    return (lo, hi) if lo <= hi else None


def _candidates(lo: int, hi: int, paranoid: bool) -> np.ndarray:
    if paranoid or hi - lo + 1 <= INTERIOR_GRID + 2:
        return np.arange(lo, hi + 1)
    grid = np.rint(np.linspace(lo, hi, INTERIOR_GRID + 2)).astype(int)
    return np.unique(grid)


def polling_pvalue(sample: PollingSample, N: int, c: int, method: str = TRI,
                   paranoid: bool = False) -> PollingResult:
    """Maximum p-value over the boundary of the null ``A_w - A_l <= c``.

    By default both ends of the feasible ``A_w`` range are evaluated along
    with an evenly spaced interior grid; ``paranoid=True`` scans every value.
    """
    if sample.n > N:
        raise ValidationError(f"sample of {sample.n} exceeds stratum size {N}")
    c = int(c)
    if sample.n == 0:
        return PollingResult(1.0, status="ok")
    if c < -N:
        return PollingResult(0.0, status="null-empty")
    if c >= N:
        return PollingResult(1.0, N, 0, status="unfalsifiable")
    lo, hi = null_boundary(N, c)
    A_w = _candidates(lo, hi, paranoid)
    A_l = A_w - c
    if method == TRI:
        tails = _tri_tail_many(A_w, A_l, N, sample.n, sample.diff)
    elif method == COND_HYPER:
        keep = A_w + A_l >= sample.m
        tails = np.zeros(A_w.size)
        if keep.any():
            tails[keep] = _cond_tail_many(A_w[keep], A_l[keep], sample.m, sample.B_w)
    else:
        raise ValidationError(f"unknown polling method {method!r}")
    k = int(np.argmax(tails))
    return PollingResult(float(tails[k]), int(A_w[k]), int(A_l[k]))


@lru_cache(maxsize=200_000)
def _cached_tri(n: int, diff: int, N: int, c: int, paranoid: bool) -> float:
    return polling_pvalue(PollingSample(n, max(diff, 0), max(-diff, 0)), N, c,
                          paranoid=paranoid).pvalue


def tri_pvalue(n: int, diff: int, N: int, c: int, paranoid: bool = False) -> float:
    """Memoized tri-hypergeometric p-value; it depends on the tallies only via ``diff``."""
    return _cached_tri(int(n), int(diff), int(N), int(c), bool(paranoid))


def rejection_cutoff(n: int, N: int, c: int, alpha: float, hint: int | None = None) -> int | None:
    """Smallest ``B_w - B_l`` at which the tri test rejects at level ``alpha``.

    Uses that the p-value is non-increasing in the observed difference.
    Returns None when even ``B_w = n`` does not reject. ``hint`` is a guess
    at the answer; a good one saves p-value evaluations, a bad one is harmless.
    """
    if tri_pvalue(n, n, N, c) > alpha:
        return None
    lo, hi = -n, n
    if hint is not None and -n < hint < n:
        # gallop outward from the hint to bracket the cutoff
        step = 2
        if tri_pvalue(n, hint, N, c) <= alpha:
            hi = hint
            while hi - step > -n and tri_pvalue(n, hi - step, N, c) <= alpha:
                hi -= step
                step *= 2
            lo = max(-n, hi - step)
        else:
            lo = hint
            while lo + step < n and tri_pvalue(n, lo + step, N, c) > alpha:
                lo += step
                step *= 2
            hi = min(n, lo + step)
    if tri_pvalue(n, lo, N, c) <= alpha:
        return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tri_pvalue(n, mid, N, c) <= alpha:
            hi = mid
        else:
            lo = mid
    return hi


def polling_null_threshold(margins: MarginTable, stratum: str, lam, pair=None) -> int:
    """Vote-margin bound ``c = V_wl,s - lam * V_wl``, rounded up so the tested null is larger."""
    if pair is None:
        if len(margins.pairs) != 1:
            raise ValidationError("contest has several winner/loser pairs; pass pair=")
        pair = margins.pairs[0]
    value = exact(margins.stratum_margin(pair, stratum)) - exact(lam) * margins.margin(pair)
    return math.ceil(value)


@dataclass(frozen=True)
class PollingEvidence:
    """Cumulative polling sample for one stratum and one winner/loser pair."""

    ballots: int
    stratum_margin: int
    margin: int
    sample: PollingSample
    method: str = TRI
    paranoid: bool = False

    def null_threshold(self, lam) -> int:
        return math.ceil(exact(self.stratum_margin) - exact(lam) * self.margin)

    def result(self, lam) -> PollingResult:
        return polling_pvalue(self.sample, self.ballots, self.null_threshold(lam),
                              self.method, self.paranoid)

    def pvalue(self, lam) -> float:
        c = self.null_threshold(lam)
        if self.method == TRI:
            if c < -self.ballots:
                return 0.0
            if c >= self.ballots or self.sample.n == 0:
                return 1.0
            return tri_pvalue(self.sample.n, self.sample.diff, self.ballots, c, self.paranoid)
        return self.result(lam).pvalue
