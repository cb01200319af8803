"""Rank-based comparison of squared-error distributions.

Kruskal-Wallis omnibus test, two-sided Mann-Whitney U with exact small-sample
enumeration, Bonferroni correction and Tukey box-plot summaries. The p-value
kernels (chi-square and normal upper tails) are implemented here directly.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

ALPHA = 0.05
# pre-declared pairwise comparisons, in reporting order
PAIRWISE = (("mlp", "gcn"), ("gcn", "gat"))
EXACT_MAX_N = 8

_GAMMA_EPS = 1e-16
_GAMMA_MAX_ITER = 10_000
_TINY = 1e-300


# ------------------------------------------------------------- p-value kernels


def _lower_gamma_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by its power series."""
    term = total = 1.0 / a
    ap = a
    for _ in range(_GAMMA_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_gamma_cf(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) by modified Lentz continued fraction."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gamma_q(a: float, x: float) -> float:
    if a <= 0:
        raise ValueError("gamma_q needs a > 0")
    if x < 0:
        raise ValueError("gamma_q needs x >= 0")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _lower_gamma_series(a, x))
    return _upper_gamma_cf(a, x)


def chi_square_sf(x: float, df: int) -> float:
    """P(X >= x) for X ~ chi-square(df)."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if x < 0:
        raise ValueError("x must be >= 0")
    if df == 2:
        return math.exp(-x / 2.0)
    return gamma_q(df / 2.0, x / 2.0)


def normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


# ----------------------------------------------------------------------- ranks


def rank_with_ties(pooled: Sequence[float]) -> tuple[np.ndarray, list[int]]:
    """1-based average ranks and the sizes of tie groups (size >= 2 only)."""
    x = np.asarray(pooled, dtype=float)
    if x.size == 0:
        raise ValueError("cannot rank an empty sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot rank non-finite values")
    order = np.argsort(x, kind="mergesort")
    sorted_x = x[order]
    ranks = np.empty(x.size)
    ties = []
    start = 0
    for end in range(1, x.size + 1):
        if end == x.size or sorted_x[end] != sorted_x[start]:
            ranks[order[start:end]] = (start + 1 + end) / 2.0
            if end - start > 1:
                ties.append(end - start)
            start = end
    return ranks, ties


def _tie_sum(ties: Sequence[int]) -> float:
    return float(sum(t**3 - t for t in ties))


# ----------------------------------------------------------------------- tests


@dataclass(frozen=True)
class SampleGroup:
    label: str
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size == 0:
            raise ValueError(f"group {self.label!r} is empty")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"group {self.label!r} has non-finite values")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # keep pytest from collecting this as a test class

    test_name: str
    statistic: float
    p_value: float
    df: int | None = None
    corrected_p: float | None = None
    alpha: float = ALPHA
    details: dict = field(default_factory=dict, compare=False)

    @property
    def significant(self) -> bool:
        p = self.corrected_p if self.corrected_p is not None else self.p_value
        return p < self.alpha


def _as_group(g, label: str) -> SampleGroup:
    return g if isinstance(g, SampleGroup) else SampleGroup(label, g)


def kruskal_wallis(groups: Sequence, alpha: float = ALPHA) -> TestResult:
    groups = [_as_group(g, str(i)) for i, g in enumerate(groups)]
    if len(groups) < 2:
        raise ValueError("Kruskal-Wallis needs at least two groups")
    sizes = [g.values.size for g in groups]
    N = sum(sizes)
    if N < 3:
        raise ValueError("Kruskal-Wallis needs at least three observations")
    ranks, ties = rank_with_ties(np.concatenate([g.values for g in groups]))
    bounds = np.cumsum([0, *sizes])
    mean_rank = (N + 1) / 2.0
    h = sum(
        n * (ranks[lo:hi].mean() - mean_rank) ** 2
        for n, lo, hi in zip(sizes, bounds[:-1], bounds[1:])
    ) * 12.0 / (N * (N + 1))
    correction = 1.0 - _tie_sum(ties) / (N**3 - N)
    df = len(groups) - 1
    if correction <= 0:  # every value identical
        return TestResult("kruskal_wallis", 0.0, 1.0, df=df, alpha=alpha)
    h /= correction
    h = float(h)
    return TestResult("kruskal_wallis", h, min(1.0, chi_square_sf(h, df)), df=df, alpha=alpha)


@lru_cache(maxsize=None)
def exact_u_distribution(n_a: int, n_b: int) -> tuple[np.ndarray, np.ndarray]:
    """Null distribution of U_a with no ties: enumerate every choice of ranks
    for sample a. Returns ``(u_values, probabilities)``."""
    N = n_a + n_b
    offset = n_a * (n_a + 1) // 2
    counts = np.zeros(n_a * n_b + 1)
    for chosen in itertools.combinations(range(1, N + 1), n_a):
        counts[sum(chosen) - offset] += 1
    return np.arange(counts.size, dtype=float), counts / counts.sum()


def _u_statistics(a: np.ndarray, b: np.ndarray):
    ranks, ties = rank_with_ties(np.concatenate([a, b]))
    n_a, n_b = a.size, b.size
    u_a = ranks[:n_a].sum() - n_a * (n_a + 1) / 2.0
    return u_a, n_a * n_b - u_a, ties


def mann_whitney_u(a, b, method: str = "auto", alpha: float = ALPHA) -> TestResult:
    """Two-sided Mann-Whitney U test.

    ``method``: ``"exact"`` (tie-free only), ``"asymptotic"`` (normal with tie
    correction and 0.5 continuity correction) or ``"auto"``, which picks exact
    enumeration when both samples have at most 8 values and there are no ties.
    """
    a, b = _as_group(a, "a"), _as_group(b, "b")
    x, y = a.values, b.values
    n_a, n_b = x.size, y.size
    N = n_a + n_b
    u_a, u_b, ties = _u_statistics(x, y)
    stat = min(u_a, u_b)
    details = {"u_a": u_a, "u_b": u_b, "n_a": n_a, "n_b": n_b}

    if method == "auto":
        method = "exact" if (max(n_a, n_b) <= EXACT_MAX_N and not ties) else "asymptotic"
    if method == "exact":
        if ties:
            raise ValueError("exact Mann-Whitney p-values need tie-free samples")
        u, prob = exact_u_distribution(n_a, n_b)
        lower = prob[u <= u_a].sum()
        upper = prob[u >= u_a].sum()
        p = min(1.0, 2.0 * min(lower, upper))
    elif method == "asymptotic":
        mu = n_a * n_b / 2.0
        var = n_a * n_b / 12.0 * ((N + 1) - _tie_sum(ties) / (N * (N - 1))) if N > 1 else 0.0
        if var <= 0:
            p = 1.0
            details["z"] = 0.0
        else:
            z = (abs(u_a - mu) - 0.5) / math.sqrt(var)
            details["z"] = z
            p = min(1.0, 2.0 * normal_sf(z))
    else:
        raise ValueError(f"unknown method {method!r}")
    details["method"] = method
    return TestResult("mann_whitney_u", stat, p, alpha=alpha, details=details)


def mann_whitney_z(a, b) -> float:
    """Normal-approximation z of U_a without continuity correction."""
    x, y = np.asarray(a, float).ravel(), np.asarray(b, float).ravel()
    n_a, n_b = x.size, y.size
    N = n_a + n_b
    u_a, _, ties = _u_statistics(x, y)
    var = n_a * n_b / 12.0 * ((N + 1) - _tie_sum(ties) / (N * (N - 1)))
    return (u_a - n_a * n_b / 2.0) / math.sqrt(var)


def bonferroni(p_values: Sequence[float], m: int | None = None) -> list[float]:
    m = len(p_values) if m is None else m
    if m < len(p_values):
        raise ValueError("m must be at least the number of p-values")
    for p in p_values:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p-value {p} outside [0, 1]")
    return [min(1.0, m * p) for p in p_values]


# ------------------------------------------------------------------- box stats


@dataclass(frozen=True)
class BoxStats:
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outlier_count: int

    @property
    def lower_fence(self) -> float:
        return self.q1 - 1.5 * (self.q3 - self.q1)

    @property
    def upper_fence(self) -> float:
        return self.q3 + 1.5 * (self.q3 - self.q1)


def box_stats(values) -> BoxStats:
    x = np.sort(np.asarray(values, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("box_stats needs data")
    q1, median, q3 = np.quantile(x, [0.25, 0.5, 0.75])  # linear, position p*(n-1)
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = x[(x >= lo) & (x <= hi)]
    # whiskers reach the most extreme points within the fences but never end
    # inside the box (possible when a quartile is interpolated)
    return BoxStats(
        float(median), float(q1), float(q3),
        float(min(inside.min(), q1)), float(max(inside.max(), q3)),
        int(np.sum((x < lo) | (x > hi))),
    )


# ---------------------------------------------------------------- model report


@dataclass
class StatReport:
    segment: str
    omnibus: TestResult
    pairwise: dict[str, TestResult]
    se_box: dict[str, BoxStats]
    error_box: dict[str, BoxStats] = field(default_factory=dict)

    def rows(self) -> list[dict]:
        out = [_row(self.segment, "kruskal_wallis", self.omnibus)]
        for name, res in self.pairwise.items():
            out.append(_row(self.segment, f"mann_whitney_u:{name}", res))
        return out


def _row(segment: str, test: str, res: TestResult) -> dict:
    return {
        "dataset_segment": segment,
        "test": test,
        "statistic": res.statistic,
        "df": res.df,
        "p": res.p_value,
        "corrected_p": res.corrected_p,
        "significant": res.significant,
    }


def compare_models(se: Mapping[str, np.ndarray], segment: str,
                   errors: Mapping[str, np.ndarray] | None = None,
                   alpha: float = ALPHA) -> StatReport:
    """Kruskal-Wallis over every model, then the pre-declared pairwise tests
    whose models are both present, Bonferroni-corrected over those pairs."""
    labels = list(se)
    omnibus = kruskal_wallis([SampleGroup(k, se[k]) for k in labels], alpha)
    pairs = [(a, b) for a, b in PAIRWISE if a in se and b in se]
    raw = [mann_whitney_u(se[a], se[b], alpha=alpha) for a, b in pairs]
    corrected = bonferroni([r.p_value for r in raw], len(pairs)) if pairs else []
    pairwise = {}
    for (a, b), r, cp in zip(pairs, raw, corrected):
        pairwise[f"{a}_vs_{b}"] = TestResult(
            r.test_name, r.statistic, r.p_value, corrected_p=cp, alpha=alpha, details=r.details
        )
    return StatReport(
        segment, omnibus, pairwise,
        {k: box_stats(v) for k, v in se.items()},
        {k: box_stats(v) for k, v in (errors or {}).items()},
    )


STATS_HEADER = ["dataset_segment", "test", "statistic", "df", "p", "corrected_p", "significant"]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_stats_csv(reports: Sequence[StatReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_HEADER)
        for rep in reports:
            for row in rep.rows():
                w.writerow([_cell(row[k]) for k in STATS_HEADER])


def read_stats_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = []
        for r in csv.DictReader(fh):
            rows.append({
                "dataset_segment": r["dataset_segment"],
                "test": r["test"],
                "statistic": float(r["statistic"]),
                "df": int(r["df"]) if r["df"] else None,
                "p": float(r["p"]),
                "corrected_p": float(r["corrected_p"]) if r["corrected_p"] else None,
                "significant": r["significant"] == "true",
            })
        return rows
