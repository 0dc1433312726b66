"""Command-line workflow for a two-stratum hybrid audit.

The audit directory is the directory holding the config file. Commands append
to ``events.csv`` (the audit history) and ``decisions.log``; a lock file
guards both. Draw transcripts go to ``draws/`` and ingested round records to
``rounds/``.

Exit status: 0 when a result was emitted, 2 for invalid input, 3 when the
request conflicts with the audit's state.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

from filelock import FileLock

from . import io as fmt
from .combination import (
    FULL_HAND_COUNT,
    SAMPLING,
    CONFIRMED,
    RoundRecorded,
    StratumFullCount,
    StratumRejected,
    audit_state_step,
    combined_pvalue_over_lambda,
    feasible_lambda_interval,
    initial_state,
)
from .comparison import ComparisonEvidence, clean_sample_size, stratum_bounds
from .model import COMPARISON, POLLING, StateError, ValidationError, derive_margins, exact
from .polling import PollingEvidence, PollingSample, polling_null_threshold
from .sampling import Draw, SamplePlan, ppeb_draws, srs_draws, stratum_seed
from .scenarios import all_examples
from .simulation import (
    Scenario,
    polling_expected_size,
    simulate_comparison_workload,
    simulate_polling_workload,
)

EXIT_OK, EXIT_INVALID, EXIT_STATE = 0, 2, 3


# ---------------------------------------------------------------------------
# loading an audit directory


@dataclass
class Audit:
    root: Path
    cfg: fmt.AuditConfig
    contest: object
    margins: object
    manifests: dict
    events: list

    @property
    def events_path(self) -> Path:
        return self.root / "events.csv"

    @property
    def lock(self) -> FileLock:
        return FileLock(str(self.root / "decisions.log.lock"))

    @property
    def strata(self) -> tuple:
        return (self.cfg.comparison_stratum, self.cfg.polling_stratum)

    def seed(self) -> str:
        seeds = [e.detail for e in self.events if e.kind == "seed"]
        return seeds[-1] if seeds else self.cfg.seed

    def draw_events(self, stratum=None) -> list:
        return [e for e in self.events if e.kind == "draw" and stratum in (None, e.stratum)]

    def append(self, kind: str, stratum: str, rnd: int, detail: str):
        ev = fmt.Event(len(self.events) + 1, kind, stratum, rnd, detail)
        self.events.append(ev)
        self.events_path.write_text(fmt.emit_events(self.events), encoding="utf-8")

    def log(self, text: str):
        with open(self.root / "decisions.log", "a", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")

    # -- state ----------------------------------------------------------------

    def state(self, up_to_round: int | None = None):
        st = initial_state(self.margins, self.strata, self.cfg.allocation.lambda1)
        rule = self.cfg.allocation.rule
        for e in self.events:
            if up_to_round is not None and e.round > up_to_round:
                continue
            if e.kind == "record":
                st = audit_state_step(st, RoundRecorded(e.stratum, e.round), self.margins, rule)
            elif e.kind == "confirm":
                st = audit_state_step(st, StratumRejected(e.stratum, float(e.detail)),
                                      self.margins, rule)
            elif e.kind == "full-count":
                st = audit_state_step(st, StratumFullCount(e.stratum,
                                                           fmt.parse_tally_field(e.detail)),
                                      self.margins, rule)
        return st

    def transcript(self, stratum: str, rnd: int) -> SamplePlan:
        path = self.root / "draws" / f"{stratum}-round{rnd}.csv"
        rows = list(csv.reader(path.read_text(encoding="utf-8").splitlines()[2:]))
        draws = tuple(Draw(int(k), hx, sel) for k, hx, sel in rows)
        method = "srs" if self.manifests[stratum].kind == POLLING else "ppeb"
        return SamplePlan(self.seed(), stratum, method, draws)

    def records(self, stratum: str, up_to_round: int | None = None) -> list:
        out = []
        for e in self.events:
            if e.kind != "record" or e.stratum != stratum:
                continue
            if up_to_round is not None and e.round > up_to_round:
                continue
            path = self.root / e.detail
            if self.manifests[stratum].kind == COMPARISON:
                out.append(fmt.parse_comparison_round(path, stratum))
            else:
                out.append(fmt.parse_polling_round(path, stratum))
        return out

    # -- evidence -------------------------------------------------------------

    def bounds(self, stratum: str) -> list:
        return stratum_bounds(self.manifests[stratum], self.margins, self.cfg.bound_mode,
                              self.cfg.inflation)

    def comparison_evidence(self, stratum: str, pair, up_to_round=None) -> ComparisonEvidence:
        man = self.manifests[stratum]
        bounds = {b.batch_id: b.bound for b in self.bounds(stratum)}
        U = sum(bounds.values())
        w, l = pair
        V = self.margins.margin(pair)
        taints = []
        for rec in self.records(stratum, up_to_round):
            for _, bid, audited in rec.draws:
                b = man.batch(bid)
                e = Fraction(b.reported(w) - audited.get(w, 0) - b.reported(l) + audited.get(l, 0),
                             V)
                u = bounds[bid]
                if u == 0:
                    if e > 0:
                        raise ValidationError(f"batch {bid}: overstatement in a zero-bound batch")
                    taints.append(Fraction(0))
                    continue
                if e / u > 1:
                    raise ValidationError(f"batch {bid}: taint {float(e / u):.6g} exceeds 1")
                taints.append(e / u)
        return ComparisonEvidence(U, tuple(taints), self.cfg.comparison_test, self.cfg.gamma)

    def polling_evidence(self, stratum: str, pair, up_to_round=None,
                         paranoid=False) -> PollingEvidence:
        w, l = pair
        n = bw = bl = 0
        for rec in self.records(stratum, up_to_round):
            for _, _, marks in rec.draws:
                n += 1
                bw += (w in marks) and (l not in marks)
                bl += (l in marks) and (w not in marks)
        return PollingEvidence(self.margins.stratum_ballots[stratum],
                               self.margins.stratum_margin(pair, stratum),
                               self.margins.margin(pair), PollingSample(n, bw, bl),
                               self.cfg.polling_method, paranoid)


def load_audit(config_path) -> Audit:
    config_path = Path(config_path)
    if not config_path.is_file():
        raise ValidationError(f"config file {config_path} not found")
    cfg = fmt.parse_config(config_path)
    root = config_path.parent
    contest = fmt.parse_contest(root / cfg.contest)
    manifests = {}
    for sid, (kind, path) in cfg.strata.items():
        manifests[sid] = fmt.parse_manifest(root / path, sid, kind)
    # contest ballots come from the manifests unless the contest file states them
    ballots = {sid: m.ballots for sid, m in manifests.items()}
    for sid, n in (contest.ballots or {}).items():
        if sid in ballots and ballots[sid] != n:
            raise ValidationError(f"stratum {sid}: contest says {n} ballots, manifest {ballots[sid]}")
    unknown = set(contest.strata) - set(manifests)
    if unknown:
        raise ValidationError(f"contest strata without a manifest: {sorted(unknown)}")
    contest = replace(contest, ballots=ballots)
    man = manifests[cfg.comparison_stratum]
    for c in contest.candidates:
        if man.batches and man.batches[0].votes is not None and c in man.batches[0].votes:
            total = sum(b.reported(c) for b in man.batches)
            if total != contest.votes(man.stratum_id, c):
                raise ValidationError(
                    f"stratum {man.stratum_id}: manifest has {total} votes for {c}, "
                    f"contest {contest.votes(man.stratum_id, c)}")
    events = []
    ev_path = root / "events.csv"
    if ev_path.exists():
        events = fmt.parse_events(ev_path)
    return Audit(root, cfg, contest, derive_margins(contest), manifests, events)


# ---------------------------------------------------------------------------
# commands


def cmd_init(audit: Audit, args, out):
    m = audit.margins
    c = audit.contest
    out.write(f"winners: {', '.join(sorted(c.winners))}; losers: {', '.join(sorted(c.losers))}\n")
    for s in audit.strata:
        out.write(f"stratum {s}: {audit.manifests[s].kind}, {m.stratum_ballots[s]} ballots\n")
    out.write(f"total ballots: {m.ballots}; smallest margin {m.min_margin} "
              f"(diluted {float(m.diluted_margin):.6g})\n")
    for pair in m.pairs:
        per = ", ".join(f"{s} {m.stratum_margin(pair, s)}" for s in audit.strata)
        out.write(f"pair {pair[0]}>{pair[1]}: margin {m.margin(pair)} ({per})\n")
    a = audit.cfg.allocation
    out.write(f"allocation: alpha {a.alpha:g}, alpha1 {a.alpha1:.6g}, alpha2 {a.alpha2:.6g}, "
              f"lambda1 {a.lambda1:g}, rule {a.rule}\n")
    if not audit.events_path.exists():
        with audit.lock:
            audit.events_path.write_text(fmt.emit_events([]), encoding="utf-8")
    return EXIT_OK


def _counties_split(manifest, total: int) -> list:
    """Split ``total`` draws over counties in proportion to ballots (largest remainder)."""
    sizes = {}
    for b in manifest.batches:
        county = manifest.counties.get(b.batch_id, "") or "-"
        sizes[county] = sizes.get(county, 0) + b.size
    N = sum(sizes.values())
    raw = {c: Fraction(total * n, N) for c, n in sizes.items()}
    alloc = {c: math.floor(v) for c, v in raw.items()}
    left = total - sum(alloc.values())
    for c in sorted(raw, key=lambda c: (-(raw[c] - alloc[c]), c))[:left]:
        alloc[c] += 1
    return sorted(alloc.items())


def _drawn_so_far(audit: Audit, stratum: str) -> int:
    return sum(int(e.detail.split(";")[0].split("=")[1]) for e in audit.draw_events(stratum))


def cmd_plan(audit: Audit, args, out):
    st = audit.state()
    rows = []
    a = audit.cfg.allocation
    trials = args.trials or 1000
    for s in audit.strata:
        if st.status[s] != SAMPLING:
            out.write(f"{s}: {st.status[s]}, nothing to plan\n")
            continue
        drawn = _drawn_so_far(audit, s)
        N = audit.margins.stratum_ballots[s]
        target = 0
        for pair in audit.margins.pairs:
            lam = st.lam(s, pair)
            if audit.manifests[s].kind == COMPARISON:
                U = sum(b.bound for b in audit.bounds(s))
                t = exact(lam) / U
                n = N if not 0 < t < 1 else min(N, clean_sample_size(t, a.alpha1))
            else:
                c = polling_null_threshold(audit.margins, s, lam, pair)
                w, l = pair
                A_w, A_l = audit.contest.votes(s, w), audit.contest.votes(s, l)
                guess = polling_expected_size(N, A_w, A_l, c, a.alpha2)
                if guess is None:
                    n = N
                else:
                    step = audit.cfg.schedule_step
                    top = min(N, max(4 * guess, 10 * step))
                    sc = Scenario("plan", audit.contest, audit.cfg.comparison_stratum, s,
                                  replace(a, lambda1=float(1 - lam)),
                                  schedule=tuple(range(step, top + 1, step)), trials=trials,
                                  seed=int.from_bytes(audit.seed().encode("ascii")[:8], "big"))
                    n = simulate_polling_workload(sc).quantiles[0.9]
            target = max(target, n)
        extra = max(0, target - drawn)
        out.write(f"{s}: target sample {target}, drawn {drawn}, draw {extra} more\n")
        if audit.manifests[s].kind == POLLING:
            for county, k in _counties_split(audit.manifests[s], extra):
                rows.append((s, county, target, k))
        else:
            rows.append((s, "-", target, extra))
    rnd = args.round or 1 + max([st.rounds[s] for s in audit.strata])
    path = audit.root / f"parameters-round{rnd}.csv"
    path.write_text(fmt.emit_parameters(rows), encoding="utf-8")
    out.write(f"wrote {path.name}\n")
    return EXIT_OK


def cmd_draw(audit: Audit, args, out):
    if args.stratum not in audit.strata:
        raise ValidationError(f"unknown stratum {args.stratum!r}")
    if args.n is None or args.n < 0:
        raise ValidationError("--n must be a nonnegative number of draws")
    s = args.stratum
    with audit.lock:
        if args.seed_override is not None:
            if audit.draw_events():
                raise StateError("draws already exist; the seed can no longer be changed "
                                 f"(see {audit.events_path})")
            if not args.seed_override.isascii():
                raise ValidationError("seed must be ASCII")
            audit.append("seed", "", 0, args.seed_override)
        st = audit.state()
        if st.status[s] != SAMPLING:
            raise StateError(f"stratum {s} is {st.status[s]}; no draws allowed")
        rnd = args.round or st.rounds[s] + 1
        if rnd != st.rounds[s] + 1:
            raise StateError(f"stratum {s}: next round is {st.rounds[s] + 1}, not {rnd}")
        if any(e.round == rnd for e in audit.draw_events(s)):
            raise StateError(f"stratum {s}: round {rnd} was already drawn")
        prev = _drawn_so_far(audit, s)
        seed = stratum_seed(audit.seed(), s)
        man = audit.manifests[s]
        if man.kind == POLLING:
            draws = srs_draws(seed, man.ballots, prev + args.n)[prev:]
            method = "srs"
        else:
            bounds = audit.bounds(s)
            draws = ppeb_draws(seed, [b.batch_id for b in bounds], [b.bound for b in bounds],
                               prev + args.n)[prev:]
            method = "ppeb"
        plan = SamplePlan(audit.seed(), s, method, tuple(draws))
        (audit.root / "draws").mkdir(exist_ok=True)
        path = audit.root / "draws" / f"{s}-round{rnd}.csv"
        path.write_text(fmt._tag("draws") + "\n" + plan.to_csv(), encoding="utf-8")
        audit.append("draw", s, rnd, f"count={args.n};first={prev + 1}")
    out.write(plan.to_csv())
    return EXIT_OK


def cmd_record(audit: Audit, args, out):
    s = args.stratum
    if s not in audit.strata:
        raise ValidationError(f"unknown stratum {s!r}")
    src = Path(args.file)
    text = src.read_text(encoding="utf-8")
    man = audit.manifests[s]
    if man.kind == COMPARISON:
        rec = fmt.parse_comparison_round(text, s, str(src))
    else:
        rec = fmt.parse_polling_round(text, s, str(src))
    with audit.lock:
        rnd = args.round or rec.round
        if rec.round != rnd:
            raise ValidationError(f"{src}: file holds round {rec.round}, --round says {rnd}")
        if not any(e.round == rnd for e in audit.draw_events(s)):
            raise StateError(f"stratum {s}: round {rnd} has no draws to record against")
        st = audit.state()
        audit_state_step(st, RoundRecorded(s, rnd), audit.margins, audit.cfg.allocation.rule)
        plan = audit.transcript(s, rnd)
        expected = [(d.index, d.selected) for d in plan.draws]
        got = [(k, str(x)) for k, x, _ in rec.draws]
        if got != expected:
            raise ValidationError(f"{src}: draws do not match the round {rnd} transcript "
                                  f"for stratum {s}")
        if man.kind == COMPARISON:
            for k, bid, votes in rec.draws:
                size = man.batch(bid).size
                if any(v > size for v in votes.values()):
                    raise ValidationError(f"{src}: draw {k}: votes exceed batch size {size}")
        (audit.root / "rounds").mkdir(exist_ok=True)
        dest = Path("rounds") / f"{s}-round{rnd}.csv"
        (audit.root / dest).write_text(text, encoding="utf-8")
        audit.append("record", s, rnd, dest.as_posix())
    out.write(f"recorded round {rnd} for stratum {s}: {len(rec.draws)} draws\n")
    return EXIT_OK


def stratum_pvalue(audit: Audit, st, s: str, up_to_round=None, paranoid=False):
    """Largest p-value over winner/loser pairs, with one line of detail per pair."""
    lines, worst = [], 0.0
    for pair in audit.margins.pairs:
        lam = st.lam(s, pair)
        if audit.manifests[s].kind == COMPARISON:
            ev = audit.comparison_evidence(s, pair, up_to_round)
            p = ev.pvalue(lam)
            lines.append(f"  {pair[0]}>{pair[1]}: lambda {float(lam):.6g}, "
                         f"t {float(ev.threshold(lam)):.6g}, draws {len(ev.taints)}, p {p:.6g}")
        else:
            ev = audit.polling_evidence(s, pair, up_to_round, paranoid)
            p = ev.pvalue(lam)
            smp = ev.sample
            lines.append(f"  {pair[0]}>{pair[1]}: lambda {float(lam):.6g}, "
                         f"c {ev.null_threshold(lam)}, n {smp.n}, B_w {smp.B_w}, B_l {smp.B_l}, "
                         f"p {p:.6g}")
        worst = max(worst, p)
    return worst, lines


def assess(audit: Audit, up_to_round=None, paranoid=False, grid=None) -> tuple:
    """Assessment text and decision; depends only on the config and recorded data."""
    st = audit.state(up_to_round)
    a = audit.cfg.allocation
    lines = [f"assessment: rounds " + ", ".join(f"{s}={st.rounds[s]}" for s in audit.strata)]
    verdicts = {}
    pvals = {}
    for i, s in enumerate(audit.strata):
        alpha_s = a.stratum_alpha(i)
        if st.status[s] == FULL_HAND_COUNT:
            lines.append(f"stratum {s}: fully hand counted")
            verdicts[s] = "hand-counted"
            continue
        p, detail = stratum_pvalue(audit, st, s, up_to_round, paranoid)
        pvals[s] = p
        if st.status[s] == CONFIRMED:
            verdicts[s] = "confirmed"
        elif p <= alpha_s:
            verdicts[s] = "can-confirm"
        elif all(st.lam(s, pair) <= 0 for pair in audit.margins.pairs):
            verdicts[s] = "cannot-confirm"
        else:
            verdicts[s] = "continue"
        lines.append(f"stratum {s} ({audit.manifests[s].kind}): {st.status[s]}, "
                     f"p {p:.6g}, alpha {alpha_s:.6g} -> {verdicts[s]}")
        lines += detail
    decision = None
    if audit.cfg.combination == "fisher" and not st.handcounts:
        g = grid or audit.cfg.grid
        worst = 0.0
        s1, s2 = audit.strata
        for pair in audit.margins.pairs:
            e1 = audit.comparison_evidence(s1, pair, up_to_round)
            e2 = audit.polling_evidence(s2, pair, up_to_round, paranoid)
            scan = combined_pvalue_over_lambda(
                e1.pvalue, e2.pvalue, feasible_lambda_interval(audit.margins, s1, s2, pair),
                grid=g)
            worst = max(worst, scan.pvalue)
            lines.append(f"fisher {pair[0]}>{pair[1]}: max combined p {scan.pvalue:.6g} "
                         f"(grid {g}, largest at lambda1 {scan.lambda1:.6g})")
        decision = "stop" if worst <= a.alpha else "continue"
    if decision is None:
        v = set(verdicts.values())
        if v == {"hand-counted"}:
            decision = "full-recount"
        elif v <= {"confirmed", "can-confirm", "hand-counted"}:
            decision = "stop"
        elif "cannot-confirm" in v:
            decision = "escalate"
        else:
            decision = "continue"
    lines.append(f"decision: {decision}")
    return "\n".join(lines) + "\n", decision, pvals


def cmd_assess(audit: Audit, args, out):
    text, _, _ = assess(audit, args.round, args.paranoid, args.grid)
    out.write(text)
    with audit.lock:
        audit.log(text)
    return EXIT_OK


def cmd_escalate(audit: Audit, args, out):
    s = args.stratum
    if s not in audit.strata:
        raise ValidationError(f"unknown stratum {s!r}")
    if (args.confirm is False) == (args.full_count is None):
        raise ValidationError("give exactly one of --confirm or --full-count FILE")
    with audit.lock:
        st = audit.state()
        rnd = st.rounds[s]
        if args.confirm:
            i = audit.strata.index(s)
            p, _ = stratum_pvalue(audit, st, s, paranoid=args.paranoid)
            if p > audit.cfg.allocation.stratum_alpha(i):
                raise StateError(f"stratum {s}: p = {p:.6g} exceeds its risk limit; "
                                 f"cannot confirm (see {audit.root / 'decisions.log'})")
            event = StratumRejected(s, p)
            kind, detail = "confirm", repr(p)
        else:
            tally = fmt.parse_tally(Path(args.full_count))
            event = StratumFullCount(s, tally)
            kind, detail = "full-count", fmt.format_tally(tally)
        new = audit_state_step(st, event, audit.margins, audit.cfg.allocation.rule)
        audit.append(kind, s, rnd, detail)
        fresh = new.log[len(st.log):]
        text = "\n".join(fresh) + f"\ndecision: {new.decision}\n"
        audit.log(text)
    out.write(text)
    return EXIT_OK


def _scenario_by_name(name: str, trials: int) -> Scenario:
    for sc in all_examples(trials):
        if sc.name == name:
            return sc
    raise ValidationError(f"unknown scenario {name!r}; known: "
                          + ", ".join(s.name for s in all_examples(1)))


def cmd_simulate(args, out):
    trials = args.trials or 10_000
    if args.config:
        audit = load_audit(args.config)
        sc = Scenario("audit", audit.contest, audit.cfg.comparison_stratum,
                      audit.cfg.polling_stratum, audit.cfg.allocation,
                      inflation=audit.cfg.inflation, trials=trials,
                      schedule=tuple(range(audit.cfg.schedule_step, 2001,
                                           audit.cfg.schedule_step)))
    else:
        sc = _scenario_by_name(args.scenario or "example-1", trials)
    for summary in (simulate_comparison_workload(sc), simulate_polling_workload(sc)):
        q = summary.quantiles
        out.write(f"{summary.name}: q50 {q[0.5]}, q90 {q[0.9]}, q99 {q[0.99]}, "
                  f"mean {summary.mean:.4g} (s.e. {summary.mean_se:.2g}), "
                  f"full count {summary.full_count_freq:.4g}, trials {summary.trials}\n")
    return EXIT_OK


def cmd_report(args, out):
    from .report import scenario_report, write_report
    trials = args.trials or 10_000
    if args.scenario:
        scenarios = [_scenario_by_name(args.scenario, trials)]
    else:
        scenarios = all_examples(trials)
    rep = scenario_report(scenarios, escalation=True)
    paths = write_report(rep, Path(args.out))
    out.write(rep.to_text())
    for p in paths:
        out.write(f"wrote {p}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybrid-rla", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help, config=True):
        p = sub.add_parser(name, help=help)
        if config:
            p.add_argument("--config", required=True, help="audit config file")
        return p

    add("init", "validate the audit inputs and print the margin table")
    p = add("plan", "next-round sample sizes per stratum and county")
    p.add_argument("--round", type=int)
    p.add_argument("--trials", type=int, help="simulation trials for the polling estimate")
    p = add("draw", "draw the next round's sample and write its transcript")
    p.add_argument("--stratum", required=True)
    p.add_argument("--n", type=int, required=True, help="number of new draws")
    p.add_argument("--round", type=int)
    p.add_argument("--seed-override", help="replace the config seed (only before any draw)")
    p = add("record", "ingest a round record of audited ballots")
    p.add_argument("--stratum", required=True)
    p.add_argument("--file", required=True)
    p.add_argument("--round", type=int)
    p = add("assess", "p-values and the stop/continue/escalate decision")
    p.add_argument("--round", type=int, help="only use rounds up to this one")
    p.add_argument("--paranoid", action="store_true", help="scan the whole null boundary")
    p.add_argument("--grid", type=int, help="lambda grid size for the Fisher scan")
    p = add("escalate", "confirm a stratum or record its full hand count")
    p.add_argument("--stratum", required=True)
    p.add_argument("--confirm", action="store_true")
    p.add_argument("--full-count", metavar="FILE")
    p.add_argument("--paranoid", action="store_true")
    p = add("simulate", "Monte-Carlo workload for an example or an audit config", config=False)
    p.add_argument("--config")
    p.add_argument("--scenario")
    p.add_argument("--trials", type=int)
    p = add("report", "workload tables and figures for the worked examples", config=False)
    p.add_argument("--out", required=True)
    p.add_argument("--scenario")
    p.add_argument("--trials", type=int)
    return ap


COMMANDS = {"init": cmd_init, "plan": cmd_plan, "draw": cmd_draw, "record": cmd_record,
            "assess": cmd_assess, "escalate": cmd_escalate}


def run_command(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INVALID if e.code else EXIT_OK
    try:
        if args.command == "simulate":
            return cmd_simulate(args, out)
        if args.command == "report":
            return cmd_report(args, out)
        audit = load_audit(args.config)
        return COMMANDS[args.command](audit, args, out)
    except (ValidationError, OSError) as e:
        err.write(f"error: {e}\n")
        return EXIT_INVALID
    except StateError as e:
        err.write(f"refused: {e}\n")
        return EXIT_STATE


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
