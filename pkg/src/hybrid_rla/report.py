"""Workload report across scenarios: tables plus figures.

The report compares the hybrid audit with a whole-contest ballot-level
comparison audit (as if every county had CVRs) and with the policy of
scoring every no-CVR ballot as a two-vote overstatement.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .combination import combined_pvalue_over_lambda, feasible_lambda_interval
from .comparison import ComparisonEvidence, clean_sample_size, km_pvalue_path
from .polling import PollingEvidence, PollingSample
from .scenarios import escalation_replay
from .simulation import (
    Scenario,
    WorkloadSummary,
    sensitivity_sweep,
    simulate_comparison_workload,
    simulate_polling_workload,
    two_vote_policy_size,
    unstratified_comparison_size,
)

FULL = "full hand count"
SWEEP = (0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass(frozen=True)
class ReportRow:
    scenario: str
    audit: str
    quantity: str
    value: object


@dataclass
class Report:
    rows: list = field(default_factory=list)
    workloads: dict = field(default_factory=dict)      # scenario name -> (cvr, polling)
    scenarios: list = field(default_factory=list)

    def add(self, *row):
        self.rows.append(ReportRow(*row))

    def value(self, scenario: str, audit: str, quantity: str):
        for r in self.rows:
            if (r.scenario, r.audit, r.quantity) == (scenario, audit, quantity):
                return r.value
        raise KeyError((scenario, audit, quantity))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "audit", "quantity", "value"])
        for r in self.rows:
            w.writerow([r.scenario, r.audit, r.quantity, _fmt(r.value)])
        return buf.getvalue()

    def to_text(self) -> str:
        if not self.rows:
            return "(no scenarios)\n"
        cols = [("scenario", 24), ("audit", 22), ("quantity", 34)]
        out = [" ".join(name.ljust(width) for name, width in cols) + " value"]
        out.append("-" * (sum(w for _, w in cols) + len(cols) + 12))
        for r in self.rows:
            out.append(f"{r.scenario:<24} {r.audit:<22} {r.quantity:<34} {_fmt(r.value)}")
        return "\n".join(out) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def scenario_report(scenarios: Sequence[Scenario], trials: int | None = None,
                    escalation: bool = False) -> Report:
    """Workload tables for each scenario, plus the escalation replays if asked."""
    rep = Report()
    for sc in scenarios:
        if trials is not None:
            sc = replace(sc, trials=trials)
        rep.scenarios.append(sc)
        m = sc.margins
        a = sc.allocation
        cvr = simulate_comparison_workload(sc)
        pol = simulate_polling_workload(sc)
        rep.workloads[sc.name] = (cvr, pol)
        rep.add(sc.name, "contest", "ballots", m.ballots)
        rep.add(sc.name, "contest", "margin (votes)", m.min_margin)
        rep.add(sc.name, "contest", "diluted margin", float(m.diluted_margin))
        rep.add(sc.name, "contest", "no-CVR share", m.stratum_ballots[sc.polling_stratum] / m.ballots)
        rep.add(sc.name, "hybrid: CVR stratum", f"lambda1 / alpha1", f"{a.lambda1:g} / {a.alpha1:.6g}")
        rep.add(sc.name, "hybrid: CVR stratum", "clean-audit sample", cvr.quantiles[0.5])
        _add_quantiles(rep, sc.name, "hybrid: CVR stratum", cvr, errors=bool(sc.cvr_error_rates))
        rep.add(sc.name, "hybrid: no-CVR stratum", "lambda2 / alpha2",
                f"{float(a.lambda2):g} / {a.alpha2:.6g}")
        _add_quantiles(rep, sc.name, "hybrid: no-CVR stratum", pol, errors=True)
        rep.add(sc.name, "unstratified comparison", "clean-audit sample",
                unstratified_comparison_size(m.ballots, m.min_margin, a.alpha, sc.inflation))
        legacy = m.stratum_ballots[sc.polling_stratum] / m.ballots
        n2v = two_vote_policy_size(m.ballots, m.min_margin, a.alpha, legacy, sc.inflation)
        rep.add(sc.name, "two-vote policy", "expected sample", FULL if n2v is None else n2v)
    if escalation:
        for k in (1, 2):
            out = escalation_replay(k)
            name = f"escalation-{k}"
            for lam, c, p in out.polling_pvalues:
                rep.add(name, "no-CVR stratum", f"p at lambda2={float(lam):.4g} (c={c})", p)
            rep.add(name, "outcome", "decision", out.decision)
    return rep


def _add_quantiles(rep, name, audit, s: WorkloadSummary, errors: bool):
    if not errors:
        return
    for lev in (0.5, 0.9, 0.99):
        rep.add(name, audit, f"{int(lev * 100)}% quantile of sample", s.quantiles[lev])
    rep.add(name, audit, "mean sample", s.mean)
    rep.add(name, audit, "mean sample MC s.e.", s.mean_se)
    rep.add(name, audit, "full hand count frequency", s.full_count_freq)
    rep.add(name, audit, "trials", s.trials)


# ---------------------------------------------------------------------------
# figures


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_stopping_cdf(report: Report, path: Path):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, (_, pol) in report.workloads.items():
        sizes = np.unique(pol.stop_sizes)
        sizes = sizes[sizes < pol.ballots]
        ax.step(sizes, [pol.coverage(s) for s in sizes], where="post", marker=".",
                label=name)
    for lev in (0.9, 0.99):
        ax.axhline(lev, color="grey", lw=0.8, ls="--")
    ax.set_xlabel("no-CVR sample size")
    ax.set_ylabel("fraction of trials stopped")
    ax.set_title("Polling stratum stopping sizes")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_km_paths(report: Report, path: Path):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    for sc in report.scenarios:
        t = sc.comparison_threshold()
        n = report.workloads[sc.name][0].quantiles[0.5]
        p = km_pvalue_path(np.zeros(int(n * 1.2) + 1), t)
        ax.semilogy(np.arange(1, p.size + 1), p, label=f"{sc.name} (alpha1={sc.allocation.alpha1:g})")
        ax.axhline(sc.allocation.alpha1, color="grey", lw=0.8, ls="--")
    ax.set_xlabel("ballots examined, no discrepancies")
    ax.set_ylabel("Kaplan-Markov p-value")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def lambda_scan_for(sc: Scenario, grid: int = 400, polling_n: int = 250):
    """Fisher p-value over lambda1 for a clean CVR sample of the clean-audit size and a
    polling sample of ``polling_n`` ballots whose tallies match the reported shares."""
    m = sc.margins
    pair = sc.pair
    s1, s2 = sc.cvr_stratum, sc.polling_stratum
    U = sc.inflation * m.stratum_ballots[s1] * 2 / m.min_margin
    n1 = clean_sample_size(sc.comparison_threshold(), sc.allocation.alpha1)
    N2 = m.stratum_ballots[s2]
    w, l = pair
    n2 = min(N2, polling_n)
    A_w, A_l = sc.contest.votes(s2, w), sc.contest.votes(s2, l)
    bw, bl = round(n2 * A_w / N2), round(n2 * A_l / N2)
    cmp_ev = ComparisonEvidence(U, (0,) * n1)
    pol_ev = PollingEvidence(N2, m.stratum_margin(pair, s2), m.margin(pair),
                             PollingSample(n2, bw, bl))
    interval = feasible_lambda_interval(m, s1, s2, pair)
    return combined_pvalue_over_lambda(cmp_ev.pvalue, pol_ev.pvalue, interval, grid=grid)


def plot_lambda_scan(sc: Scenario, path: Path):
    plt = _plt()
    scan = lambda_scan_for(sc)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(scan.grid, np.maximum(scan.p1, 1e-16), label="CVR stratum p")
    ax.semilogy(scan.grid, np.maximum(scan.p2, 1e-16), label="no-CVR stratum p")
    ax.semilogy(scan.grid, np.maximum(scan.combined, 1e-16), label="Fisher combined", lw=2)
    ax.axhline(sc.allocation.alpha, color="grey", lw=0.8, ls="--")
    visible = scan.grid[scan.combined > 1e-12]
    if visible.size:
        pad = max(0.25, 0.2 * (visible[-1] - visible[0]))
        ax.set_xlim(visible[0] - pad, visible[-1] + pad)
    ax.set_xlabel("lambda1")
    ax.set_ylabel("p-value")
    ax.set_title(f"{sc.name}: max combined p = {scan.pvalue:.3g}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sensitivity(sc: Scenario, path: Path, lams=SWEEP):
    plt = _plt()
    sens = sensitivity_sweep(sc, lams)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(lams, sens.comparison_sizes, "o-",
              label=f"CVR stratum (exponent {sens.comparison_exponent:.2f})")
    ax.loglog(lams, sens.polling_sizes, "s-",
              label=f"no-CVR stratum (exponent {sens.polling_exponent:.2f})")
    ax.set_xlabel("share of tolerable overstatement given to the stratum")
    ax.set_ylabel("sample size")
    ax.set_title(sc.name)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return sens


def write_report(report: Report, out: Path) -> list:
    """Write CSV, text and figures into ``out``; returns the written paths."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "report.csv", out / "report.txt"]
    paths[0].write_text(report.to_csv(), encoding="utf-8")
    paths[1].write_text(report.to_text(), encoding="utf-8")
    if report.scenarios:
        figs = [
            (out / "polling_stopping_cdf.png", lambda p: plot_stopping_cdf(report, p)),
            (out / "km_clean_paths.png", lambda p: plot_km_paths(report, p)),
            (out / "lambda_scan.png", lambda p: plot_lambda_scan(report.scenarios[0], p)),
            (out / "sensitivity.png", lambda p: plot_sensitivity(report.scenarios[0], p)),
        ]
        for p, draw in figs:
            draw(p)
            paths.append(p)
    return paths
