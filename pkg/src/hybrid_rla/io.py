"""Text formats for contests, manifests, round records and audit configuration.

Every CSV file starts with a schema tag line ``# hybrid-rla <kind>/<version>``
followed by a header row. Numbers are plain decimal strings. The audit
configuration is a flat ``key = value`` file. These formats are stand-ins for
whatever export a real tabulation system provides.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping

from .combination import ADJUST_THRESHOLD, RiskAllocation, validate_allocation
from .comparison import AUTO, SHARP, SIMPLE
from .model import COMPARISON, POLLING, Batch, ContestSpec, StratumManifest, ValidationError
from .polling import COND_HYPER, TRI

SCHEMA_PREFIX = "# hybrid-rla "
VERSION = 1

CONTEST = "contest"
COMPARISON_MANIFEST = "comparison-manifest"
POLLING_MANIFEST = "polling-manifest"
COMPARISON_ROUND = "comparison-round"
POLLING_ROUND = "polling-round"
TALLY = "tally"

ROLES = ("winner", "loser", "other", "ballots")


class ParseError(ValidationError):
    """Malformed input, located by file, line and (1-based) column."""

    def __init__(self, message: str, source: str = "<text>", line: int | None = None,
                 column: int | None = None):
        self.source, self.line, self.column = source, line, column
        where = source
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")


# ---------------------------------------------------------------------------
# tagged CSV plumbing


def _tag(kind: str) -> str:
    return f"{SCHEMA_PREFIX}{kind}/{VERSION}"


def _writer(kind: str, header):
    buf = io.StringIO()
    buf.write(_tag(kind) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    return buf, w


@dataclass
class _Table:
    source: str
    header: list
    rows: list          # (line number, list of fields)

    def col(self, name: str) -> int:
        try:
            return self.header.index(name)
        except ValueError:
            raise ParseError(f"missing column {name!r}", self.source, 2) from None


def _read_table(text: str, kind: str, source: str, required=()) -> _Table:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(SCHEMA_PREFIX):
        raise ParseError(f"missing schema tag (expected {_tag(kind)!r})", source, 1, 1)
    tag = lines[0][len(SCHEMA_PREFIX):].strip()
    name, _, version = tag.partition("/")
    if name != kind:
        raise ParseError(f"schema is {name!r}, expected {kind!r}", source, 1,
                         len(SCHEMA_PREFIX) + 1)
    if version != str(VERSION):
        raise ParseError(f"unsupported {kind} schema version {version!r}", source, 1,
                         len(SCHEMA_PREFIX) + len(name) + 2)
    reader = csv.reader(lines[1:])
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("missing header row", source, 2, 1) from None
    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        raise ParseError("duplicate column names", source, 2, 1)
    table = _Table(source, header, [])
    for name in required:
        table.col(name)
    for offset, fields in enumerate(reader):
        lineno = offset + 3
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(fields)}", source,
                             lineno, 1)
        table.rows.append((lineno, [f.strip() for f in fields]))
    return table


def _column_of(fields, idx):
    """1-based character column at which field ``idx`` starts (unquoted CSV)."""
    return sum(len(f) + 1 for f in fields[:idx]) + 1


def _int(table: _Table, lineno: int, fields, idx: int, minimum: int | None = 0) -> int:
    raw = fields[idx]
    try:
        value = int(raw)
    except ValueError:
        raise ParseError(f"{table.header[idx]}: expected an integer, got {raw!r}", table.source,
                         lineno, _column_of(fields, idx)) from None
    if minimum is not None and value < minimum:
        raise ParseError(f"{table.header[idx]}: {value} is below {minimum}", table.source,
                         lineno, _column_of(fields, idx))
    return value


def _text(path_or_text, source=None) -> tuple:
    if isinstance(path_or_text, Path):
        return path_or_text.read_text(encoding="utf-8"), source or str(path_or_text)
    return path_or_text, source or "<text>"


# ---------------------------------------------------------------------------
# contest


def emit_contest(contest: ContestSpec) -> str:
    buf, w = _writer(CONTEST, ["stratum_id", "candidate", "role", "votes"])
    for s in contest.strata:
        for c in contest.candidates:
            role = "winner" if c in contest.winners else "loser" if c in contest.losers else "other"
            if (s, c) in contest.reported_votes:
                w.writerow([s, c, role, contest.reported_votes[(s, c)]])
        if contest.ballots and s in contest.ballots:
            w.writerow([s, "", "ballots", contest.ballots[s]])
    return buf.getvalue()


def parse_contest(text, source=None) -> ContestSpec:
    text, source = _text(text, source)
    t = _read_table(text, CONTEST, source, ("stratum_id", "candidate", "role", "votes"))
    cs, cc, cr, cv = (t.col(x) for x in ("stratum_id", "candidate", "role", "votes"))
    candidates, roles, votes, ballots = [], {}, {}, {}
    for lineno, f in t.rows:
        s, c, role = f[cs], f[cc], f[cr]
        if not s:
            raise ParseError("empty stratum_id", source, lineno, _column_of(f, cs))
        if role not in ROLES:
            raise ParseError(f"role must be one of {ROLES}, got {role!r}", source, lineno,
                             _column_of(f, cr))
        n = _int(t, lineno, f, cv)
        if role == "ballots":
            if s in ballots:
                raise ParseError(f"duplicate ballot count for stratum {s}", source, lineno, 1)
            ballots[s] = n
            continue
        if not c:
            raise ParseError("empty candidate", source, lineno, _column_of(f, cc))
        if roles.setdefault(c, role) != role:
            raise ParseError(f"candidate {c} has conflicting roles", source, lineno,
                             _column_of(f, cr))
        if (s, c) in votes:
            raise ParseError(f"duplicate row for {c} in stratum {s}", source, lineno, 1)
        if c not in candidates:
            candidates.append(c)
        votes[(s, c)] = n
    return ContestSpec(
        candidates=tuple(candidates),
        winners=frozenset(c for c, r in roles.items() if r == "winner"),
        losers=frozenset(c for c, r in roles.items() if r == "loser"),
        reported_votes=votes,
        ballots=ballots or None,
    )


# ---------------------------------------------------------------------------
# manifests


def emit_manifest(manifest: StratumManifest, candidates=()) -> str:
    """Comparison manifests carry one column per candidate; polling manifests a county."""
    if manifest.kind == COMPARISON:
        buf, w = _writer(COMPARISON_MANIFEST, ["batch_id", "ballots", *candidates])
        for b in manifest.batches:
            w.writerow([b.batch_id, b.size, *(b.reported(c) for c in candidates)])
    else:
        buf, w = _writer(POLLING_MANIFEST, ["batch_id", "ballots", "county"])
        for b in manifest.batches:
            w.writerow([b.batch_id, b.size, manifest.counties.get(b.batch_id, "")])
    return buf.getvalue()


def parse_manifest(text, stratum_id: str, kind: str, source=None) -> StratumManifest:
    text, source = _text(text, source)
    schema = COMPARISON_MANIFEST if kind == COMPARISON else POLLING_MANIFEST
    t = _read_table(text, schema, source, ("batch_id", "ballots"))
    cb, cn = t.col("batch_id"), t.col("ballots")
    batches, counties, seen = [], {}, set()
    cand_cols = [i for i, h in enumerate(t.header) if i not in (cb, cn)]
    if kind == POLLING:
        cand_cols = []
        cc = t.col("county")
    for lineno, f in t.rows:
        bid = f[cb]
        if not bid:
            raise ParseError("empty batch_id", source, lineno, _column_of(f, cb))
        if bid in seen:
            raise ParseError(f"duplicate batch_id {bid!r}", source, lineno, _column_of(f, cb))
        seen.add(bid)
        size = _int(t, lineno, f, cn, minimum=1)
        votes = None
        if kind == COMPARISON:
            votes = {}
            for i in cand_cols:
                v = _int(t, lineno, f, i)
                if v > size:
                    raise ParseError(f"{t.header[i]}: {v} votes exceed batch size {size}",
                                     source, lineno, _column_of(f, i))
                votes[t.header[i]] = v
        else:
            counties[bid] = f[cc]
        batches.append(Batch(bid, size, votes))
    if not batches:
        raise ParseError("manifest lists no batches", source, 2)
    return StratumManifest(stratum_id, kind, sum(b.size for b in batches), tuple(batches),
                           counties)


# ---------------------------------------------------------------------------
# round records


@dataclass(frozen=True)
class ComparisonRound:
    """Audited votes for each comparison draw, in draw order."""

    stratum_id: str
    round: int
    draws: tuple     # (draw_index, batch_id, {candidate: votes})


@dataclass(frozen=True)
class PollingRound:
    """Marks seen on each polled ballot; an empty mark set is a ballot with no vote."""

    stratum_id: str
    round: int
    draws: tuple     # (draw_index, ballot_index, frozenset of candidates)


def emit_comparison_round(rec: ComparisonRound, candidates) -> str:
    buf, w = _writer(COMPARISON_ROUND, ["round", "draw_index", "batch_id", *candidates])
    for k, bid, votes in rec.draws:
        w.writerow([rec.round, k, bid, *(votes.get(c, 0) for c in candidates)])
    return buf.getvalue()


def parse_comparison_round(text, stratum_id: str, source=None) -> ComparisonRound:
    text, source = _text(text, source)
    t = _read_table(text, COMPARISON_ROUND, source, ("round", "draw_index", "batch_id"))
    cr, ck, cb = t.col("round"), t.col("draw_index"), t.col("batch_id")
    cand_cols = [i for i in range(len(t.header)) if i not in (cr, ck, cb)]
    draws, rounds = [], set()
    for lineno, f in t.rows:
        rounds.add(_int(t, lineno, f, cr, minimum=1))
        draws.append((_int(t, lineno, f, ck, minimum=1), f[cb],
                      {t.header[i]: _int(t, lineno, f, i) for i in cand_cols}))
    return ComparisonRound(stratum_id, _single_round(rounds, source), tuple(draws))


def emit_polling_round(rec: PollingRound) -> str:
    buf, w = _writer(POLLING_ROUND, ["round", "draw_index", "ballot_index", "marks"])
    for k, idx, marks in rec.draws:
        w.writerow([rec.round, k, idx, ";".join(sorted(marks))])
    return buf.getvalue()


def parse_polling_round(text, stratum_id: str, source=None) -> PollingRound:
    text, source = _text(text, source)
    t = _read_table(text, POLLING_ROUND, source, ("round", "draw_index", "ballot_index", "marks"))
    cr, ck, ci, cm = (t.col(x) for x in ("round", "draw_index", "ballot_index", "marks"))
    draws, rounds = [], set()
    for lineno, f in t.rows:
        rounds.add(_int(t, lineno, f, cr, minimum=1))
        marks = frozenset(m.strip() for m in f[cm].split(";") if m.strip())
        draws.append((_int(t, lineno, f, ck, minimum=1), _int(t, lineno, f, ci, minimum=1),
                      marks))
    return PollingRound(stratum_id, _single_round(rounds, source), tuple(draws))


def emit_tally(tally: Mapping[str, int]) -> str:
    buf, w = _writer(TALLY, ["candidate", "votes"])
    for c in sorted(tally):
        w.writerow([c, tally[c]])
    return buf.getvalue()


def parse_tally(text, source=None) -> dict:
    """Hand-count totals for a whole stratum."""
    text, source = _text(text, source)
    t = _read_table(text, TALLY, source, ("candidate", "votes"))
    cc, cv = t.col("candidate"), t.col("votes")
    out = {}
    for lineno, f in t.rows:
        if f[cc] in out:
            raise ParseError(f"duplicate candidate {f[cc]!r}", source, lineno, 1)
        out[f[cc]] = _int(t, lineno, f, cv)
    return out


def _single_round(rounds, source) -> int:
    if len(rounds) != 1:
        raise ParseError(f"a round record must hold exactly one round, found {sorted(rounds)}",
                         source)
    return rounds.pop()


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class AuditConfig:
    contest: str                      # paths, relative to the config file's directory
    strata: Mapping[str, tuple]       # stratum id -> (kind, manifest path)
    allocation: RiskAllocation
    seed: str
    comparison_test: str = "km"
    gamma: float = 0.95
    polling_method: str = TRI
    bound_mode: str = AUTO
    inflation: Fraction = Fraction(1)
    grid: int = 1000
    combination: str = "fixed"        # fixed | fisher
    schedule_step: int = 25
    extra: Mapping[str, str] = field(default_factory=dict)

    @property
    def comparison_stratum(self) -> str:
        return next(s for s, (k, _) in self.strata.items() if k == COMPARISON)

    @property
    def polling_stratum(self) -> str:
        return next(s for s, (k, _) in self.strata.items() if k == POLLING)


CONFIG_KEYS = ("contest", "alpha", "alpha1", "alpha2", "lambda1", "rule", "seed",
               "comparison_test", "gamma", "polling_method", "bound_mode", "inflation", "grid",
               "combination", "schedule_step")


def emit_config(cfg: AuditConfig) -> str:
    a = cfg.allocation
    lines = [
        _tag("config"),
        f"contest = {cfg.contest}",
    ]
    for s, (kind, path) in cfg.strata.items():
        lines.append(f"stratum.{s} = {kind}:{path}")
    lines += [
        f"alpha = {a.alpha!r}",
        f"alpha1 = {a.alpha1!r}",
        f"alpha2 = {a.alpha2!r}",
        f"lambda1 = {a.lambda1!r}",
        f"rule = {a.rule}",
        f"seed = {cfg.seed}",
        f"comparison_test = {cfg.comparison_test}",
        f"gamma = {cfg.gamma!r}",
        f"polling_method = {cfg.polling_method}",
        f"bound_mode = {cfg.bound_mode}",
        f"inflation = {cfg.inflation}",
        f"grid = {cfg.grid}",
        f"combination = {cfg.combination}",
        f"schedule_step = {cfg.schedule_step}",
    ]
    lines += [f"{k} = {v}" for k, v in cfg.extra.items()]
    return "\n".join(lines) + "\n"


def parse_config(text, source=None) -> AuditConfig:
    text, source = _text(text, source)
    values, where, strata = {}, {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", source, lineno, 1)
        key, _, value = (p.strip() for p in line.partition("="))
        eq = raw.index("=")
        rest = raw[eq + 1:]
        col = eq + 2 + len(rest) - len(rest.lstrip())
        if key in values or key in strata:
            raise ParseError(f"duplicate key {key!r}", source, lineno, 1)
        if key.startswith("stratum."):
            kind, sep, path = value.partition(":")
            if not sep or kind not in (COMPARISON, POLLING) or not path:
                raise ParseError("stratum entries look like 'comparison:file.csv' or "
                                 "'polling:file.csv'", source, lineno, col)
            strata[key[len("stratum."):]] = (kind, path)
            continue
        values[key], where[key] = value, (lineno, col)

    def need(key):
        if key not in values:
            raise ParseError(f"missing required key {key!r}", source)
        return values[key]

    def num(key, conv, default=None):
        if key not in values:
            if default is None:
                raise ParseError(f"missing required key {key!r}", source)
            return default
        try:
            return conv(values[key])
        except ValueError:
            raise ParseError(f"{key}: cannot parse {values[key]!r}", source, *where[key]) from None

    def choice(key, options, default):
        v = values.get(key, default)
        if v not in options:
            raise ParseError(f"{key} must be one of {options}, got {v!r}", source,
                             *where.get(key, (None, None)))
        return v

    seed = need("seed")
    if not seed.isascii():
        raise ParseError("seed must be ASCII", source, *where["seed"])
    kinds = sorted(k for k, _ in strata.values())
    if kinds != [COMPARISON, POLLING]:
        raise ParseError("need exactly one comparison stratum and one polling stratum", source)
    alloc = RiskAllocation(num("alpha", float), num("alpha1", float), num("alpha2", float),
                           num("lambda1", float),
                           choice("rule", ("adjust-threshold", "auto-full-count"),
                                  ADJUST_THRESHOLD))
    problems = validate_allocation(alloc)
    if problems:
        raise ValidationError("invalid risk allocation: " + "; ".join(problems))
    extra = {k: v for k, v in values.items() if k not in CONFIG_KEYS}
    return AuditConfig(
        contest=need("contest"),
        strata=strata,
        allocation=alloc,
        seed=seed,
        comparison_test=choice("comparison_test", ("km", "kw"), "km"),
        gamma=num("gamma", float, 0.95),
        polling_method=choice("polling_method", (TRI, COND_HYPER), TRI),
        bound_mode=choice("bound_mode", (AUTO, SHARP, SIMPLE), AUTO),
        inflation=num("inflation", Fraction, Fraction(1)),
        grid=num("grid", int, 1000),
        combination=choice("combination", ("fixed", "fisher"), "fixed"),
        schedule_step=num("schedule_step", int, 25),
        extra=extra,
    )


# ---------------------------------------------------------------------------
# audit event log and per-round parameter file

EVENTS = "events"
PARAMETERS = "parameters"
EVENT_KINDS = ("seed", "draw", "record", "confirm", "full-count")


@dataclass(frozen=True)
class Event:
    seq: int
    kind: str
    stratum: str
    round: int
    detail: str


def emit_events(events) -> str:
    buf, w = _writer(EVENTS, ["seq", "kind", "stratum", "round", "detail"])
    for e in events:
        w.writerow([e.seq, e.kind, e.stratum, e.round, e.detail])
    return buf.getvalue()


def parse_events(text, source=None) -> list:
    text, source = _text(text, source)
    t = _read_table(text, EVENTS, source, ("seq", "kind", "stratum", "round", "detail"))
    cq, ck, cs, cr, cd = (t.col(x) for x in ("seq", "kind", "stratum", "round", "detail"))
    out = []
    for lineno, f in t.rows:
        if f[ck] not in EVENT_KINDS:
            raise ParseError(f"unknown event kind {f[ck]!r}", source, lineno, _column_of(f, ck))
        seq = _int(t, lineno, f, cq, minimum=1)
        if seq != len(out) + 1:
            raise ParseError(f"event sequence broken: expected {len(out) + 1}, got {seq}", source,
                             lineno, _column_of(f, cq))
        out.append(Event(seq, f[ck], f[cs], _int(t, lineno, f, cr), f[cd]))
    return out


def emit_parameters(rows) -> str:
    """``rows`` of (stratum_id, county, cumulative sample size, additional draws)."""
    buf, w = _writer(PARAMETERS, ["stratum_id", "county", "sample_size", "additional"])
    for r in rows:
        w.writerow(list(r))
    return buf.getvalue()


def parse_parameters(text, source=None) -> list:
    text, source = _text(text, source)
    t = _read_table(text, PARAMETERS, source, ("stratum_id", "county", "sample_size", "additional"))
    cs, cc, cn, ca = (t.col(x) for x in ("stratum_id", "county", "sample_size", "additional"))
    return [(f[cs], f[cc], _int(t, lineno, f, cn), _int(t, lineno, f, ca)) for lineno, f in t.rows]


def format_tally(tally: Mapping[str, int]) -> str:
    return ";".join(f"{c}={tally[c]}" for c in sorted(tally))


def parse_tally_field(text: str) -> dict:
    out = {}
    for part in filter(None, text.split(";")):
        c, sep, v = part.partition("=")
        if not sep:
            raise ValidationError(f"bad tally entry {part!r}")
        out[c] = int(v)
    return out
