"""Monte-Carlo workload and risk estimation.

Trial-level randomness comes from numpy generators seeded from a master seed.
The SHA-256 sampler in :mod:`hybrid_rla.sampling` is for selecting real
ballots and is much slower.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .combination import (
    RiskAllocation,
    combined_pvalue_over_lambda,
    feasible_lambda_interval,
    fisher_combine,
)
from .comparison import ComparisonEvidence, clean_sample_size, sequential_pvalue_path
from .model import ContestSpec, ValidationError, derive_margins, exact
from .polling import (
    PollingEvidence,
    PollingSample,
    polling_null_threshold,
    polling_pvalue,
    rejection_cutoff,
    tri_pvalue,
)

LEVELS = (0.5, 0.9, 0.99)

# relative error per ballot, in units of 1/V, for each comparison outcome
ERROR_KINDS = {"o1": 1, "o2": 2, "u1": -1, "u2": -2}


@dataclass(frozen=True)
class Scenario:
    """A two-stratum contest with known truth, audit parameters and a sample schedule.

    ``truth`` holds actual votes for the polling stratum; CVR-stratum errors
    are described by per-ballot rates in ``cvr_error_rates`` (keys o1, o2, u1,
    u2 for 1- and 2-vote over- and understatements).
    """

    name: str
    contest: ContestSpec
    cvr_stratum: str
    polling_stratum: str
    allocation: RiskAllocation
    truth: Mapping[tuple, int] = field(default_factory=dict)
    cvr_error_rates: Mapping[str, float] = field(default_factory=dict)
    inflation: Fraction = Fraction(1)
    schedule: tuple = tuple(range(25, 1001, 25))
    trials: int = 10_000
    seed: int = 20180615
    test: str = "km"
    gamma: float = 0.95
    max_draws: int | None = None

    @property
    def margins(self):
        return derive_margins(self.contest)

    @property
    def pair(self):
        return self.margins.pairs[0]

    def polling_null(self) -> int:
        return polling_null_threshold(self.margins, self.polling_stratum,
                                      self.allocation.lambda2, self.pair)

    def comparison_threshold(self) -> Fraction:
        m = self.margins
        U = self.inflation * Fraction(2 * m.stratum_ballots[self.cvr_stratum], m.min_margin)
        return exact(self.allocation.lambda1) / U


@dataclass(frozen=True)
class WorkloadSummary:
    name: str
    stop_sizes: np.ndarray = field(repr=False)
    ballots: int                           # stratum size; trials that never stop count it
    quantiles: Mapping[float, int]
    mean: float
    mean_se: float
    full_count_freq: float
    trials: int

    def coverage(self, n: int) -> float:
        """Fraction of trials that stopped with at most ``n`` ballots."""
        return float(np.mean(self.stop_sizes <= n))

    def coverage_se(self, n: int) -> float:
        p = self.coverage(n)
        return math.sqrt(p * (1 - p) / self.trials)


def _summarize(name, stops, ballots, levels=LEVELS) -> WorkloadSummary:
    stops = np.asarray(stops)
    sizes = np.unique(stops)
    q = {}
    for lev in levels:
        cum = np.array([np.mean(stops <= s) for s in sizes])
        hit = np.nonzero(cum >= lev - 1e-12)[0]
        q[lev] = int(sizes[hit[0]]) if hit.size else int(ballots)
    trials = stops.size
    return WorkloadSummary(
        name, stops, int(ballots), q, float(stops.mean()),
        float(stops.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0,
        float(np.mean(stops >= ballots)), trials,
    )


def rejection_cutoffs(schedule, N: int, c: int, alpha: float) -> np.ndarray:
    """Rejection cutoff on ``B_w - B_l`` for each size in ``schedule`` (inf if none)."""
    out, prev = [], []
    for n in schedule:
        hint = None
        if len(prev) >= 2:
            hint = 2 * prev[-1] - prev[-2]
        elif prev:
            hint = prev[-1]
        x = rejection_cutoff(n, N, c, alpha, hint)
        if x is not None:
            prev.append(x)
        out.append(np.inf if x is None else x)
    return np.array(out, dtype=float)


def polling_stop_sizes(N: int, A_w: int, A_l: int, c: int, alpha: float, schedule,
                       trials: int, rng: np.random.Generator) -> np.ndarray:
    """First scheduled sample size at which the tri test rejects, per trial (N if never)."""
    schedule = sorted(n for n in set(schedule) if 0 < n <= N)
    if not schedule:
        return np.full(trials, N)
    cutoffs = rejection_cutoffs(schedule, N, c, alpha)
    top = schedule[-1]
    stops = np.full(trials, N)
    idx = np.array(schedule) - 1
    for t in range(trials):
        draw = rng.choice(N, size=top, replace=False)
        step = np.where(draw < A_w, 1, np.where(draw < A_w + A_l, -1, 0))
        diffs = np.cumsum(step)[idx]
        hit = np.nonzero(diffs >= cutoffs)[0]
        if hit.size:
            stops[t] = schedule[hit[0]]
    return stops


def simulate_polling_workload(scenario: Scenario) -> WorkloadSummary:
    """Stopping-size distribution for the polling stratum under the scenario's truth."""
    s = scenario.polling_stratum
    w, l = scenario.pair
    N = scenario.margins.stratum_ballots[s]
    A_w = scenario.truth.get((s, w), scenario.contest.votes(s, w))
    A_l = scenario.truth.get((s, l), scenario.contest.votes(s, l))
    if A_w + A_l > N:
        raise ValidationError(f"{scenario.name}: true votes exceed stratum size")
    rng = np.random.default_rng([scenario.seed, 2])
    stops = polling_stop_sizes(N, A_w, A_l, scenario.polling_null(),
                               scenario.allocation.alpha2, scenario.schedule,
                               scenario.trials, rng)
    return _summarize(f"{scenario.name}: polling", stops, N)


def comparison_stop_sizes(t, alpha, rates: Mapping[str, float], inflation, trials: int,
                          max_draws: int, rng: np.random.Generator, test: str = "km",
                          gamma: float = 0.95, chunk: int = 500) -> np.ndarray:
    """First draw at which the sequential test rejects, single-ballot batches, simple bounds.

    Trials that never reject within ``max_draws`` report ``max_draws + 1``.
    """
    t = float(t)
    inflation = float(inflation)
    kinds = [k for k in ERROR_KINDS if rates.get(k, 0) > 0]
    probs = [rates[k] for k in kinds]
    if sum(probs) > 1:
        raise ValidationError("error rates sum to more than 1")
    taint_vals = np.array([0.0] + [ERROR_KINDS[k] / (2 * inflation) for k in kinds])
    p = np.array([1 - sum(probs)] + probs)
    out = np.empty(trials, dtype=int)
    for start in range(0, trials, chunk):
        m = min(chunk, trials - start)
        cat = rng.choice(taint_vals.size, size=(m, max_draws), p=p)
        T = taint_vals[cat]
        if test == "km":
            growth = (1 - T) / (1 - t)
        else:
            growth = gamma * (1 - T) / (1 - t) + 1 - gamma
        for r in range(m):
            path = sequential_pvalue_path(growth[r])
            hit = np.nonzero(path <= alpha)[0]
            out[start + r] = hit[0] + 1 if hit.size else max_draws + 1
    return out


def simulate_comparison_workload(scenario: Scenario) -> WorkloadSummary:
    """Stopping-size distribution for the CVR stratum under injected error rates."""
    t = scenario.comparison_threshold()
    alpha = scenario.allocation.alpha1
    N = scenario.margins.stratum_ballots[scenario.cvr_stratum]
    clean = clean_sample_size(t, alpha)
    if not any(scenario.cvr_error_rates.get(k, 0) for k in ERROR_KINDS):
        stops = np.full(scenario.trials, min(clean, N))
        return _summarize(f"{scenario.name}: comparison", stops, N)
    max_draws = scenario.max_draws or min(N, 20 * clean)
    rng = np.random.default_rng([scenario.seed, 1])
    stops = comparison_stop_sizes(t, alpha, scenario.cvr_error_rates, scenario.inflation,
                                  scenario.trials, max_draws, rng, scenario.test,
                                  scenario.gamma)
    stops = np.where(stops > max_draws, N, stops)
    return _summarize(f"{scenario.name}: comparison", stops, N)


def unstratified_comparison_size(ballots: int, margin: int, alpha: float, inflation=1) -> int:
    """Clean ballot-level comparison audit of the whole contest (tolerance = whole margin)."""
    t = Fraction(margin) / (exact(inflation) * 2 * ballots)
    return clean_sample_size(t, alpha)


def expected_sample_size(t, alpha, rates: Mapping[str, float], inflation=1) -> int | None:
    """Draws needed when errors occur at exactly their expected rates.

    Solves ``n * E[log growth] >= -log(alpha)`` for the Kaplan-Markov growth
    factors. Returns None when the expected log growth is not positive (the
    audit is expected to go to a full hand count).
    """
    t, inflation = float(t), float(inflation)
    drift = -math.log1p(-t)
    clean_share = 1 - sum(rates.values())
    if clean_share < 0:
        raise ValidationError("error rates sum to more than 1")
    for kind, rate in rates.items():
        if rate == 0:
            continue
        T = ERROR_KINDS[kind] / (2 * inflation)
        if T >= 1:
            return None
        drift += rate * math.log1p(-T)
    if drift <= 0:
        return None
    return math.ceil(-math.log(alpha) / drift)


def two_vote_policy_size(ballots: int, margin: int, alpha: float, legacy_fraction: float,
                         inflation=1) -> int | None:
    """Expected sample for a contest-wide comparison audit that scores every
    legacy ballot as a two-vote overstatement."""
    t = Fraction(margin) / (exact(inflation) * 2 * ballots)
    return expected_sample_size(t, alpha, {"o2": legacy_fraction}, inflation)


def polling_expected_size(N: int, A_w: int, A_l: int, c: int, alpha: float,
                          n_max: int | None = None) -> int | None:
    """Smallest ``n`` at which a sample whose tallies sit at their expected values rejects.

    The observed difference is ``round(n (A_w - A_l) / N)``. This is a cheap,
    noise-free workload measure for sweeps; None if no ``n <= n_max`` rejects.
    """
    n_max = N if n_max is None else min(n_max, N)

    def rejects(n):
        diff = round(Fraction(n * (A_w - A_l), N))
        return tri_pvalue(n, diff, N, c) <= alpha

    # Rounding the expected difference makes rejection flicker in n, so the
    # answer is found by a scan rather than bisection. Doubling first bounds the
    # scan, which keeps huge strata from evaluating n near N needlessly.
    hi = min(16, n_max)
    while not rejects(hi):
        if hi == n_max:
            return None
        hi = min(2 * hi, n_max)
    return next(n for n in range(1, hi + 1) if rejects(n))


def fit_exponent(lams: Sequence[float], sizes: Sequence[float]) -> float:
    """Exponent ``k`` in ``size ~ lam**(-k)`` by least squares on log-log scale."""
    x, y = np.log(np.asarray(lams, float)), np.log(np.asarray(sizes, float))
    slope = np.polyfit(x, y, 1)[0]
    return float(-slope)


# ---------------------------------------------------------------------------
# risk-limit validation


@dataclass(frozen=True)
class RiskEstimate:
    name: str
    alpha: float
    rejections: int
    trials: int

    @property
    def rate(self) -> float:
        return self.rejections / self.trials

    @property
    def mc_sigma(self) -> float:
        return math.sqrt(self.alpha * (1 - self.alpha) / self.trials)

    @property
    def within_limit(self) -> bool:
        return self.rate <= self.alpha + 3 * self.mc_sigma


def comparison_risk(bounds: Sequence[float], taints: Sequence[float], lam: float,
                    alpha: float, trials: int, draws: int, rng: np.random.Generator,
                    test: str = "km", gamma: float = 0.95) -> RiskEstimate:
    """Rejection rate of a sequential comparison test on a fixed batch population.

    Batches are drawn with probability proportional to ``bounds``; the null
    is true when ``sum(bounds * taints) >= lam``.
    """
    u = np.asarray(bounds, float)
    T = np.asarray(taints, float)
    U = u.sum()
    t = lam / U
    rejections = 0
    for start in range(0, trials, 1000):
        m = min(1000, trials - start)
        pick = rng.choice(u.size, size=(m, draws), p=u / U)
        tt = T[pick]
        growth = (1 - tt) / (1 - t) if test == "km" else gamma * (1 - tt) / (1 - t) + 1 - gamma
        for r in range(m):
            if sequential_pvalue_path(growth[r]).min() <= alpha:
                rejections += 1
    return RiskEstimate(f"{test} comparison", alpha, rejections, trials)


def polling_risk(N: int, c: int, A_w: int, alpha: float, trials: int,
                 sizes: Sequence[int], rng: np.random.Generator) -> RiskEstimate:
    """Rejection rate of the tri-hypergeometric test when ``A_w - A_l = c`` exactly.

    Each trial draws a sample size from ``sizes`` (independently of the data)
    and tests once, as the conditional validity argument requires.
    """
    A_l = A_w - c
    if A_l < 0 or A_w + A_l > N:
        raise ValidationError("population not on the null boundary")
    rejections = 0
    sizes = np.asarray(sizes)
    for _ in range(trials):
        n = int(rng.choice(sizes))
        draw = rng.choice(N, size=n, replace=False)
        diff = int(np.sum(draw < A_w) - np.sum((draw >= A_w) & (draw < A_w + A_l)))
        if tri_pvalue(n, diff, N, c) <= alpha:
            rejections += 1
    return RiskEstimate("tri polling", alpha, rejections, trials)


def fisher_risk(scenario: Scenario, n1: int, n2: int, alpha: float, trials: int,
                rng: np.random.Generator, grid: int = 200) -> RiskEstimate:
    """Rejection rate of the Fisher procedure maximized over lambda, for a wrong outcome.

    The CVR stratum draws ``n1`` ballots with the scenario's error rates; the
    polling stratum draws ``n2`` ballots without replacement from its truth.
    Stopping requires the combined p-value to be at most ``alpha`` for
    every lambda. The cheap check at a single lambda comes first, since the
    full scan can only reject when that check does.
    """
    m = scenario.margins
    pair = scenario.pair
    s1, s2 = scenario.cvr_stratum, scenario.polling_stratum
    N1, N2 = m.stratum_ballots[s1], m.stratum_ballots[s2]
    V = m.margin(pair)
    U = scenario.inflation * Fraction(2 * N1, m.min_margin)
    interval = feasible_lambda_interval(m, s1, s2, pair)
    w, l = pair
    A_w = scenario.truth[(s2, w)]
    A_l = scenario.truth[(s2, l)]
    rates = scenario.cvr_error_rates
    kinds = [k for k in ERROR_KINDS if rates.get(k, 0) > 0]
    tv = np.array([0.0] + [ERROR_KINDS[k] / (2 * float(scenario.inflation)) for k in kinds])
    pv = np.array([1 - sum(rates[k] for k in kinds)] + [rates[k] for k in kinds])
    # the split at which both nulls hold with equality
    omega1 = m.stratum_margin(pair, s1) - (scenario.truth[(s1, w)] - scenario.truth[(s1, l)])
    lam_star = Fraction(omega1, V)
    rejections = 0
    for _ in range(trials):
        taints = tuple(tv[rng.choice(tv.size, size=n1, p=pv)])
        draw = rng.choice(N2, size=n2, replace=False)
        bw = int(np.sum(draw < A_w))
        bl = int(np.sum((draw >= A_w) & (draw < A_w + A_l)))
        cmp_ev = ComparisonEvidence(U, taints, scenario.test, scenario.gamma)
        pol_ev = PollingEvidence(N2, m.stratum_margin(pair, s2), V, PollingSample(n2, bw, bl))
        p_star = fisher_combine(cmp_ev.pvalue(lam_star), pol_ev.pvalue(1 - lam_star))[1]
        if p_star > alpha:
            continue
        scan = combined_pvalue_over_lambda(cmp_ev.pvalue, pol_ev.pvalue, interval, grid=grid,
                                           alpha=alpha)
        if scan.pvalue <= alpha:
            rejections += 1
    return RiskEstimate("fisher combined", alpha, rejections, trials)


@dataclass(frozen=True)
class Sensitivity:
    lambdas: tuple
    comparison_sizes: tuple     # clean CVR-stratum sample when that stratum gets lambda
    polling_sizes: tuple        # expected-tally polling sample when that stratum gets lambda
    comparison_exponent: float
    polling_exponent: float


def sensitivity_sweep(scenario: Scenario, lams: Sequence[float]) -> Sensitivity:
    """Workload in each stratum as a function of its share of the tolerable overstatement."""
    m = scenario.margins
    pair = scenario.pair
    s1, s2 = scenario.cvr_stratum, scenario.polling_stratum
    U = scenario.inflation * Fraction(2 * m.stratum_ballots[s1], m.min_margin)
    alloc = scenario.allocation
    w, l = pair
    N2 = m.stratum_ballots[s2]
    A_w = scenario.truth.get((s2, w), scenario.contest.votes(s2, w))
    A_l = scenario.truth.get((s2, l), scenario.contest.votes(s2, l))
    comp, poll = [], []
    for lam in lams:
        comp.append(clean_sample_size(exact(lam) / U, alloc.alpha1))
        c = polling_null_threshold(m, s2, lam, pair)
        n = polling_expected_size(N2, A_w, A_l, c, alloc.alpha2)
        poll.append(N2 if n is None else n)
    return Sensitivity(tuple(lams), tuple(comp), tuple(poll), fit_exponent(lams, comp),
                       fit_exponent(lams, poll))
