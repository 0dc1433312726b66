"""Seed-reproducible sample selection.

Every draw ``k`` (1-based) is driven by ``SHA-256("<seed>,<k>")``: the first
eight digest bytes, read big-endian, give a uniform fraction ``x / 2**64``.
Anyone holding the seed and the manifest can re-derive the sample.
"""

from __future__ import annotations

import bisect
import csv
import hashlib
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .model import ValidationError

SRS = "srs"
PPEB = "ppeb"
_SCALE = 1 << 64


@dataclass(frozen=True)
class Draw:
    index: int
    digest_hex: str
    selected: str


@dataclass(frozen=True)
class SamplePlan:
    seed: str
    stratum_id: str
    method: str
    draws: tuple

    @property
    def selected(self) -> list:
        return [d.selected for d in self.draws]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["draw_index", "digest_hex", "selected_id"])
        for d in self.draws:
            w.writerow([d.index, d.digest_hex, d.selected])
        return buf.getvalue()


def digest(seed: str, k: int) -> bytes:
    return hashlib.sha256(f"{seed},{k}".encode("ascii")).digest()


def uniform_int(seed: str, k: int) -> int:
    """Numerator ``x`` of the k-th uniform fraction ``x / 2**64``."""
    return int.from_bytes(digest(seed, k)[:8], "big")


def srs_draws(seed: str, N: int, n: int) -> list:
    """:func:`draw_srs` with the digests kept, for transcripts."""
    if not 0 <= n <= N:
        raise ValidationError(f"cannot draw {n} distinct ballots from {N}")
    out, seen, k = [], set(), 0
    while len(out) < n:
        k += 1
        d = digest(seed, k)
        idx = (int.from_bytes(d[:8], "big") * N >> 64) + 1
        if idx not in seen:
            seen.add(idx)
            out.append(Draw(k, d.hex(), str(idx)))
    return out


def draw_srs(seed: str, N: int, n: int) -> list:
    """``n`` distinct ballot positions in ``[1, N]``, in draw order.

    Repeats are skipped, so the first ``n`` of a longer sample equal the
    sample of size ``n``.
    """
    return [int(d.selected) for d in srs_draws(seed, N, n)]


def ppeb_draws(seed: str, ids: Sequence[str], bounds: Sequence, k: int) -> list:
    if len(ids) != len(bounds):
        raise ValidationError("ids and bounds differ in length")
    pairs = []
    for bid, u in zip(ids, bounds):
        u = Fraction(u)
        if u < 0:
            raise ValidationError(f"negative error bound for batch {bid}")
        if u > 0:
            pairs.append((bid, u))
    if not pairs:
        raise ValidationError("no batch has a positive error bound")
    if k < 0:
        raise ValidationError("draw count must be nonnegative")
    cum, total = [], Fraction(0)
    for _, u in pairs:
        total += u
        cum.append(total)
    out = []
    for j in range(1, k + 1):
        d = digest(seed, j)
        target = Fraction(int.from_bytes(d[:8], "big"), _SCALE) * total
        p = bisect.bisect_left(cum, target)
        out.append(Draw(j, d.hex(), pairs[p][0]))
    return out


def draw_ppeb(seed: str, ids: Sequence[str], bounds: Sequence, k: int) -> list:
    """``k`` batch ids drawn with replacement, with probability ``u_p / U``.

    Draw ``j`` picks the first batch, in manifest order, whose cumulative
    bound reaches ``(x_j / 2**64) * U``. Batches with a zero bound are never
    selected.
    """
    return [d.selected for d in ppeb_draws(seed, ids, bounds, k)]


def stratum_seed(seed: str, stratum_id: str) -> str:
    """Independent per-stratum seed derived from the audit seed."""
    return f"{seed}/{stratum_id}"
