"""Normality testing, rank comparison, and one-way ANOVA.

Shapiro-Wilk follows Royston's AS R94 polynomial approximations (valid for
3 <= n <= 50). Mann-Whitney uses midranks, full enumeration of labelings for
small samples and the tie-corrected normal approximation otherwise. ANOVA is
provided both from raw samples and from (n, mean, sd) group summaries, which
is how published results are reconstructed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from statistics import NormalDist
from typing import Optional, Sequence

import numpy as np
from scipy import special

_NORMAL = NormalDist()

DEFAULT_EXACT_THRESHOLD = 16
NORMALITY_ALPHA = 0.05


class StatsError(Exception):
    pass


class DegenerateSampleError(StatsError):
    pass


@dataclass(frozen=True)
class Sample:
    values: tuple[float, ...]
    label: str = ""

    def __post_init__(self) -> None:
        if len(self.values) < 1:
            raise StatsError("sample must contain at least one value")
        if any(not math.isfinite(v) for v in self.values):
            raise StatsError("sample values must be finite")

    @property
    def n(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class GroupSummary:
    n: int
    mean: float
    sd: float  # sample standard deviation, n-1 divisor
    label: str = ""

    def __post_init__(self) -> None:
        if self.n < 2:
            raise StatsError(f"group {self.label!r} needs n >= 2, got {self.n}")
        if self.sd < 0:
            raise StatsError("standard deviation must be non-negative")


@dataclass(frozen=True)
class TestResult:
    statistic: float
    statistic_name: str  # W_sw | U | W_ranksum | F
    p_value: float
    df: Optional[tuple[int, int]] = None
    exact: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_value <= 1.0:
            raise StatsError(f"p-value {self.p_value!r} outside [0, 1]")


def mean_sd(sample: Sample) -> GroupSummary:
    if sample.n < 2:
        raise StatsError("mean_sd needs at least two values")
    arr = np.asarray(sample.values, dtype=float)
    return GroupSummary(n=sample.n, mean=float(arr.mean()), sd=float(arr.std(ddof=1)), label=sample.label)


# --- Shapiro-Wilk ------------------------------------------------------------------


def _shapiro_wilk_weights(n: int) -> np.ndarray:
    """Royston's approximate coefficients against expected normal order statistics."""
    if n == 3:
        s = 1.0 / math.sqrt(2.0)
        return np.array([-s, 0.0, s])
    m = np.array([_NORMAL.inv_cdf((i - 0.375) / (n + 0.25)) for i in range(1, n + 1)])
    mm = float(m @ m)
    c = m / math.sqrt(mm)
    rsn = 1.0 / math.sqrt(n)
    poly_an = [-2.706056, 4.434685, -2.071190, -0.147981, 0.221157, 0.0]
    poly_an1 = [-3.582633, 5.682633, -1.752461, -0.293762, 0.042981, 0.0]
    a = m.copy()
    an = c[-1] + np.polyval(poly_an, rsn)
    if n > 5:
        an1 = c[-2] + np.polyval(poly_an1, rsn)
        phi = (mm - 2.0 * m[-1] ** 2 - 2.0 * m[-2] ** 2) / (1.0 - 2.0 * an**2 - 2.0 * an1**2)
        a[2:-2] = m[2:-2] / math.sqrt(phi)
        a[-1], a[-2] = an, an1
        a[0], a[1] = -an, -an1
    else:
        phi = (mm - 2.0 * m[-1] ** 2) / (1.0 - 2.0 * an**2)
        a[1:-1] = m[1:-1] / math.sqrt(phi)
        a[-1] = an
        a[0] = -an
    return a


def _shapiro_wilk_pvalue(w: float, n: int) -> float:
    if n == 3:
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return min(max(p, 0.0), 1.0)
    w1 = 1.0 - w
    if n <= 11:
        gamma = -2.273 + 0.459 * n
        if gamma - math.log(w1) <= 0.0:
            return 1e-19
        y = -math.log(gamma - math.log(w1))
        mu = 0.5440 - 0.39978 * n + 0.025054 * n**2 - 0.0006714 * n**3
        sigma = math.exp(1.3822 - 0.77857 * n + 0.062767 * n**2 - 0.0020322 * n**3)
    else:
        x = math.log(n)
        y = math.log(w1)
        mu = -1.5861 - 0.31082 * x - 0.083751 * x**2 + 0.0038915 * x**3
        sigma = math.exp(-0.4803 - 0.082676 * x + 0.0030302 * x**2)
    z = (y - mu) / sigma
    return min(max(1.0 - _NORMAL.cdf(z), 0.0), 1.0)


def shapiro_wilk(sample: Sample) -> TestResult:
    """Shapiro-Wilk W and its small-sample p approximation (3 <= n <= 50)."""
    n = sample.n
    if not 3 <= n <= 50:
        raise StatsError(f"shapiro_wilk supports 3 <= n <= 50, got n={n}")
    x = np.sort(np.asarray(sample.values, dtype=float))
    ss = float(((x - x.mean()) ** 2).sum())
    if ss <= 0.0:
        raise DegenerateSampleError("sample has zero variance")
    a = _shapiro_wilk_weights(n)
    w = float((a @ x) ** 2 / ss)
    w = min(w, 1.0)
    return TestResult(
        statistic=w,
        statistic_name="W_sw",
        p_value=_shapiro_wilk_pvalue(w, n),
        exact=n == 3,
    )


# --- Mann-Whitney-Wilcoxon ----------------------------------------------------------


def _midranks(values: Sequence[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    order = np.argsort(arr, kind="mergesort")
    ranks = np.empty(len(arr), dtype=float)
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def mann_whitney(a: Sample, b: Sample, exact_threshold: int = DEFAULT_EXACT_THRESHOLD) -> TestResult:
    """Two-sided Mann-Whitney-Wilcoxon test.

    Reports U for the first sample; the rank-sum W of the first sample rides
    along in ``extra`` since both conventions appear in the literature. Exact
    p-values enumerate all C(n1 + n2, n1) labelings when the pooled size is at
    most ``exact_threshold``.
    """
    n1, n2 = a.n, b.n
    pooled = list(a.values) + list(b.values)
    ranks = _midranks(pooled)
    rank_sum_a = float(ranks[:n1].sum())
    u_a = rank_sum_a - n1 * (n1 + 1) / 2.0
    u_b = n1 * n2 - u_a
    mu = n1 * n2 / 2.0
    extra = {
        "rank_sum_w": rank_sum_a,
        "u_a": u_a,
        "u_b": u_b,
        "convention": "U is U_a for the first sample; W is the first sample's rank sum",
    }

    if n1 + n2 <= exact_threshold:
        observed = abs(u_a - mu)
        hits = 0
        total = 0
        base = n1 * (n1 + 1) / 2.0
        for idx in combinations(range(n1 + n2), n1):
            u = ranks[list(idx)].sum() - base
            total += 1
            if abs(u - mu) >= observed - 1e-12:
                hits += 1
        p = hits / total
        return TestResult(statistic=u_a, statistic_name="U", p_value=min(p, 1.0), exact=True, extra=extra)

    _, counts = np.unique(np.asarray(pooled, dtype=float), return_counts=True)
    tie_term = float((counts**3 - counts).sum())
    size = n1 + n2
    var = (n1 * n2 / 12.0) * ((size + 1) - tie_term / (size * (size - 1)))
    if var <= 0.0:
        return TestResult(statistic=u_a, statistic_name="U", p_value=1.0, exact=False, extra=extra)
    z = (abs(u_a - mu) - 0.5) / math.sqrt(var)  # continuity-corrected
    p = 2.0 * (1.0 - _NORMAL.cdf(max(z, 0.0)))
    return TestResult(statistic=u_a, statistic_name="U", p_value=min(p, 1.0), exact=False, extra=extra)


# --- One-way ANOVA -------------------------------------------------------------------


def _f_sf(f: float, df1: int, df2: int) -> float:
    if f <= 0.0:
        return 1.0
    x = df2 / (df2 + df1 * f)
    return float(special.betainc(df2 / 2.0, df1 / 2.0, x))


def anova_oneway_raw(groups: list[Sample]) -> TestResult:
    if len(groups) < 2:
        raise StatsError("ANOVA needs at least two groups")
    for g in groups:
        if g.n < 2:
            raise StatsError(f"group {g.label!r} needs n >= 2")
    data = [np.asarray(g.values, dtype=float) for g in groups]
    total_n = sum(len(d) for d in data)
    grand = sum(float(d.sum()) for d in data) / total_n
    ss_between = sum(len(d) * (float(d.mean()) - grand) ** 2 for d in data)
    ss_within = sum(float(((d - d.mean()) ** 2).sum()) for d in data)
    return _anova_from_ss(ss_between, ss_within, len(groups), total_n)


def anova_oneway_summary(groups: list[GroupSummary]) -> TestResult:
    """F statistic reconstructed from group (n, mean, sd) summaries."""
    if len(groups) < 2:
        raise StatsError("ANOVA needs at least two groups")
    total_n = sum(g.n for g in groups)
    grand = sum(g.n * g.mean for g in groups) / total_n
    ss_between = sum(g.n * (g.mean - grand) ** 2 for g in groups)
    ss_within = sum((g.n - 1) * g.sd**2 for g in groups)
    return _anova_from_ss(ss_between, ss_within, len(groups), total_n)


def _anova_from_ss(ss_between: float, ss_within: float, k: int, total_n: int) -> TestResult:
    df1, df2 = k - 1, total_n - k
    if df2 <= 0:
        raise StatsError("not enough observations for within-group variance")
    ms_within = ss_within / df2
    if ms_within <= 0.0:
        if ss_between <= 0.0:
            raise DegenerateSampleError("all observations identical; F undefined")
        return TestResult(statistic=math.inf, statistic_name="F", p_value=0.0, df=(df1, df2))
    f = (ss_between / df1) / ms_within
    return TestResult(statistic=f, statistic_name="F", p_value=_f_sf(f, df1, df2), df=(df1, df2))


# --- Normality-branch pipeline --------------------------------------------------------


@dataclass(frozen=True)
class Comparison:
    """One measurement's full pipeline record: SW per group, branch, final test."""

    measure: str
    summaries: tuple[GroupSummary, ...]
    shapiro: tuple[Optional[TestResult], ...]
    chosen: str  # "anova" | "mww"
    result: TestResult


def compare_groups(a: Sample, b: Sample, measure: str = "", alpha: float = NORMALITY_ALPHA) -> Comparison:
    """Shapiro-Wilk both groups; ANOVA when both look normal, MWW otherwise.

    A degenerate (zero-variance) group counts as non-normal, which routes the
    comparison to the rank test.
    """
    shapiro_results: list[Optional[TestResult]] = []
    normal = True
    for sample in (a, b):
        try:
            res = shapiro_wilk(sample)
            shapiro_results.append(res)
            normal = normal and res.p_value > alpha
        except (StatsError, DegenerateSampleError):
            shapiro_results.append(None)
            normal = False
    if normal:
        chosen = "anova"
        result = anova_oneway_raw([a, b])
    else:
        chosen = "mww"
        result = mann_whitney(a, b)
    return Comparison(
        measure=measure,
        summaries=(mean_sd(a), mean_sd(b)),
        shapiro=tuple(shapiro_results),
        chosen=chosen,
        result=result,
    )
