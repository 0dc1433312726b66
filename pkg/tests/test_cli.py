import re
from fractions import Fraction

import pytest

from hybrid_rla import io as fmt
from hybrid_rla.cli import load_audit
from hybrid_rla.comparison import ComparisonEvidence
from hybrid_rla.scenarios import (
    CVR,
    ESC_REPORTED_BATCH,
    NOCVR,
    escalation_allocation,
    write_escalation_audit,
)

from replay import cli, escalation_cli_replay, record_comparison_round, record_polling_round


@pytest.fixture
def cfg(tmp_path):
    path = write_escalation_audit(tmp_path)
    rc, _, err = cli("init", "--config", path)
    assert rc == 0, err
    return path


def _pvalue(text, stratum):
    m = re.search(rf"stratum {stratum} \(\w+\): \S+, p (\S+),", text)
    return float(m.group(1))


def test_exit_codes_for_invalid_input(tmp_path):
    assert cli("assess", "--config", tmp_path / "missing.cfg")[0] == 2
    assert cli("frobnicate")[0] == 2
    assert cli("draw", "--config", tmp_path / "x.cfg")[0] == 2     # --stratum and --n missing
    bad = tmp_path / "bad.cfg"
    bad.write_text("contest = c.csv\nseed\n", encoding="utf-8")
    rc, _, err = cli("assess", "--config", bad)
    assert rc == 2 and "bad.cfg:2:1:" in err


def test_init_reports_margins(cfg):
    rc, out, _ = cli("init", "--config", cfg)
    assert rc == 0
    assert "pair winner>loser: margin 2100" in out


def test_assess_without_data_continues(cfg):
    rc, out, _ = cli("assess", "--config", cfg)
    assert rc == 0
    assert _pvalue(out, CVR) == 1.0 and _pvalue(out, NOCVR) == 1.0
    assert out.rstrip().endswith("decision: continue")


def test_clean_comparison_round_matches_the_kaplan_markov_value(cfg):
    rc, _, _ = cli("draw", "--config", cfg, "--stratum", CVR, "--n", 20)
    assert rc == 0
    record_comparison_round(cfg, CVR, 1, lambda bid: dict(ESC_REPORTED_BATCH))
    audit = load_audit(cfg)
    U = sum(b.bound for b in audit.bounds(CVR))
    lam = Fraction(repr(escalation_allocation().lambda1))
    expected = ComparisonEvidence(U, (0.0,) * 20).pvalue(lam)
    _, out, _ = cli("assess", "--config", cfg)
    assert _pvalue(out, CVR) == pytest.approx(expected, rel=1e-5)
    assert expected < 1


def test_assess_is_reproducible(cfg):
    cli("draw", "--config", cfg, "--stratum", CVR, "--n", 5)
    record_comparison_round(cfg, CVR, 1, lambda bid: dict(ESC_REPORTED_BATCH))
    first = cli("assess", "--config", cfg)
    second = cli("assess", "--config", cfg)
    assert first == second


def test_draws_are_incremental_and_seed_is_frozen(cfg):
    rc, out1, _ = cli("draw", "--config", cfg, "--stratum", NOCVR, "--n", 5)
    assert rc == 0
    rc, _, err = cli("draw", "--config", cfg, "--stratum", NOCVR, "--n", 5)
    assert rc == 3 and "already drawn" in err      # round 1 must be recorded first
    record_polling_round(cfg, NOCVR, 1, lambda idx: frozenset({"winner"}))
    rc, out2, _ = cli("draw", "--config", cfg, "--stratum", NOCVR, "--n", 5)
    assert rc == 0
    rows1, rows2 = out1.splitlines()[1:], out2.splitlines()[1:]
    assert [r.split(",")[0] for r in rows2] == [str(k) for k in range(6, 11)]
    assert not set(rows1) & set(rows2)
    rc, _, err = cli("draw", "--config", cfg, "--stratum", NOCVR, "--n", 1,
                     "--seed-override", "other")
    assert rc == 3 and "refused" in err
    rc, _, _ = cli("draw", "--config", cfg, "--stratum", NOCVR, "--n", 1, "--round", 9)
    assert rc == 3


def test_record_rejects_a_round_that_was_not_drawn(cfg, tmp_path):
    rec = fmt.PollingRound(NOCVR, 1, ((1, 5, frozenset({"winner"})),))
    path = tmp_path / "r.csv"
    path.write_text(fmt.emit_polling_round(rec), encoding="utf-8")
    rc, _, _ = cli("record", "--config", cfg, "--stratum", NOCVR, "--file", path)
    assert rc in (2, 3)


def test_escalate_needs_exactly_one_action(cfg):
    assert cli("escalate", "--config", cfg, "--stratum", NOCVR)[0] == 2
    rc, _, err = cli("escalate", "--config", cfg, "--stratum", NOCVR, "--confirm")
    assert rc == 3 and "cannot confirm" in err


def test_plan_writes_parameters(cfg):
    rc, out, _ = cli("plan", "--config", cfg, "--trials", 50)
    assert rc == 0
    rows = fmt.parse_parameters(cfg.parent / "parameters-round1.csv")
    assert {r[0] for r in rows} == {CVR, NOCVR}
    assert "target sample" in out


def test_simulate_command():
    rc, out, _ = cli("simulate", "--scenario", "example-2", "--trials", 20)
    assert rc == 0
    assert len(re.findall(r"q50 \d+, q90 \d+, q99 \d+", out)) == 2
    assert cli("simulate", "--scenario", "nope", "--trials", 1)[0] == 2


def test_report_command_writes_tables_and_figures(tmp_path):
    rc, out, _ = cli("report", "--out", tmp_path / "rep", "--scenario", "example-2",
                     "--trials", 20)
    assert rc == 0
    names = {p.name for p in (tmp_path / "rep").iterdir()}
    assert {"report.csv", "report.txt"} <= names
    assert any(n.endswith(".png") for n in names)


@pytest.mark.parametrize("scenario", [1, 2])
def test_escalation_replay_ends_in_a_full_recount(tmp_path, scenario):
    steps = {s: (rc, out, err) for s, rc, out, err in escalation_cli_replay(tmp_path, scenario)}
    assert steps["final-assess"][1].rstrip().endswith("decision: full-recount")
    confirm = "confirm-reopened" if scenario == 2 else "confirm-nocvr"
    assert steps[confirm][0] == 3
    if scenario == 2:
        assert steps["confirm-nocvr"][0] == 0
        assert "can-confirm" in steps["assess-nocvr"][1]
        assert "reopened" in steps["full-count-cvr"][1]
