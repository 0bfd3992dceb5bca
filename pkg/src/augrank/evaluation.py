"""Ranking metrics (Success@k, MRR@k, nDCG@k, AP/MAP) and the two-tailed
paired t-test used to mark significance between runs.

Conventions: nDCG uses linear gain grade/log2(rank+1) with the ideal DCG
computed from the query's judged grades sorted descending; AP binarizes at
a configurable grade threshold (for graded qrels the default is grade >= 2,
for binary qrels grade >= 1). Per-query metrics return None for queries
absent from the qrels; aggregation excludes and reports those instead of
silently counting them as zeros. Aggregation sums in sorted query-id order
so floating-point results are reproducible.

The t-test p-value comes from the Student t distribution via the
regularized incomplete beta function I_x(df/2, 1/2) at x = df/(df + t^2),
evaluated with a Lentz-style continued fraction.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from enum import Enum

from .corpus_io import Qrels, RankedList
from .errors import ConflictError, ValidationError


class SignificanceMarker(str, Enum):
    NONE = "none"
    P05 = "p05"
    P01 = "p01"


@dataclass(frozen=True)
class MetricConfig:
    """Cutoffs and relevance thresholds for the metric suite.

    `map_relevance_threshold=None` resolves per qrels: grade >= 2 when any
    judgment is graded (max grade >= 2), else grade >= 1.
    """

    success_cutoffs: frozenset[int] = frozenset({1, 5, 10, 20})
    mrr_cutoff: int = 10
    ndcg_cutoff: int = 10
    binary_relevance_threshold: int = 1
    map_relevance_threshold: int | None = None

    def __post_init__(self):
        for k in self.success_cutoffs:
            if k < 1:
                raise ValidationError(f"success cutoff must be >= 1, got {k}")
        if self.mrr_cutoff < 1 or self.ndcg_cutoff < 1:
            raise ValidationError("metric cutoffs must be >= 1")
        if self.binary_relevance_threshold < 1:
            raise ValidationError("binary relevance threshold must be >= 1")
        if self.map_relevance_threshold is not None and self.map_relevance_threshold < 1:
            raise ValidationError("MAP relevance threshold must be >= 1")

    def metric_names(self) -> list[str]:
        return [f"s@{k}" for k in sorted(self.success_cutoffs)] + [
            f"mrr@{self.mrr_cutoff}",
            f"ndcg@{self.ndcg_cutoff}",
            "map",
        ]

    def resolve_map_threshold(self, qrels: Qrels) -> int:
        if self.map_relevance_threshold is not None:
            return self.map_relevance_threshold
        return 2 if qrels.max_grade() >= 2 else 1


@dataclass
class MetricReport:
    """Per-query and mean metric values for one run.

    `query_count` counts the judged queries contributing to the aggregate;
    unjudged run queries are listed separately.
    """

    per_query: dict[str, dict[str, float]]
    aggregate: dict[str, float]
    query_count: int
    unjudged_query_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    degrees_of_freedom: int
    p_value: float
    mean_difference: float
    marker: SignificanceMarker


def success_at_k(ranked: RankedList, qrels: Qrels, k: int, threshold: int) -> float | None:
    """1.0 if any of the top-k passages has grade >= threshold, else 0.0.

    Returns None (unjudged) when the query has no qrels entry at all.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if not qrels.has_query(ranked.query_id):
        return None
    for pid, _ in ranked.entries[:k]:
        if qrels.grade(ranked.query_id, pid) >= threshold:
            return 1.0
    return 0.0


def mrr_at_k(ranked: RankedList, qrels: Qrels, k: int, threshold: int) -> float | None:
    """Reciprocal rank of the first passage with grade >= threshold within
    the top k; 0.0 if there is none."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if not qrels.has_query(ranked.query_id):
        return None
    for rank, (pid, _) in enumerate(ranked.entries[:k], start=1):
        if qrels.grade(ranked.query_id, pid) >= threshold:
            return 1.0 / rank
    return 0.0


def ndcg_at_k(ranked: RankedList, qrels: Qrels, k: int) -> float | None:
    """DCG@k / IDCG@k with linear gain grade/log2(rank+1).

    IDCG comes from all the query's judged grades sorted descending. 0.0
    when the query has no positively graded judgment.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if not qrels.has_query(ranked.query_id):
        return None
    grades = qrels.grades_for(ranked.query_id)
    ideal = sorted(grades.values(), reverse=True)[:k]
    idcg = sum(g / math.log2(i + 1) for i, g in enumerate(ideal, start=1))
    if idcg == 0.0:
        return 0.0
    dcg = sum(
        grades.get(pid, 0) / math.log2(rank + 1)
        for rank, (pid, _) in enumerate(ranked.entries[:k], start=1)
    )
    return dcg / idcg


def average_precision(ranked: RankedList, qrels: Qrels, threshold: int) -> float | None:
    """Mean of precision@i over the ranks i holding a relevant passage,
    normalized by the total number of judged-relevant passages R.

    0.0 when R = 0.
    """
    if not qrels.has_query(ranked.query_id):
        return None
    total_relevant = qrels.count_relevant(ranked.query_id, threshold)
    if total_relevant == 0:
        return 0.0
    hits = 0
    precision_sum = 0.0
    for rank, (pid, _) in enumerate(ranked.entries, start=1):
        if qrels.grade(ranked.query_id, pid) >= threshold:
            hits += 1
            precision_sum += hits / rank
    return precision_sum / total_relevant


def evaluate_run(
    lists: Sequence[RankedList], qrels: Qrels, cfg: MetricConfig = MetricConfig()
) -> MetricReport:
    """Per-query metrics and their means over the judged queries.

    Queries missing from the qrels are excluded from the means and reported
    in `unjudged_query_ids`. Raises when no run query is judged.
    """
    seen: set[str] = set()
    for ranked in lists:
        if ranked.query_id in seen:
            raise ConflictError(f"run contains query {ranked.query_id!r} twice")
        seen.add(ranked.query_id)

    map_threshold = cfg.resolve_map_threshold(qrels)
    threshold = cfg.binary_relevance_threshold
    per_query: dict[str, dict[str, float]] = {}
    unjudged: list[str] = []
    for ranked in lists:
        if not qrels.has_query(ranked.query_id):
            unjudged.append(ranked.query_id)
            continue
        values: dict[str, float] = {}
        for k in sorted(cfg.success_cutoffs):
            values[f"s@{k}"] = success_at_k(ranked, qrels, k, threshold)
        values[f"mrr@{cfg.mrr_cutoff}"] = mrr_at_k(ranked, qrels, cfg.mrr_cutoff, threshold)
        values[f"ndcg@{cfg.ndcg_cutoff}"] = ndcg_at_k(ranked, qrels, cfg.ndcg_cutoff)
        values["map"] = average_precision(ranked, qrels, map_threshold)
        per_query[ranked.query_id] = values
    if not per_query:
        raise ValidationError("no run query appears in the qrels")

    ordered_qids = sorted(per_query)
    aggregate = {
        name: sum(per_query[qid][name] for qid in ordered_qids) / len(ordered_qids)
        for name in cfg.metric_names()
    }
    return MetricReport(per_query, aggregate, len(ordered_qids), tuple(unjudged))


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified
    Lentz's method)."""
    max_iterations = 300
    eps = 1e-15
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iterations + 1):
        m2 = 2 * m
        numerator = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + numerator * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numerator / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        numerator = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + numerator * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numerator / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValidationError(f"x must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_two_tailed_p(t: float, df: int) -> float:
    """Two-tailed p-value of a t statistic with df degrees of freedom."""
    if df < 1:
        raise ValidationError(f"degrees of freedom must be >= 1, got {df}")
    if math.isinf(t):
        return 0.0
    p = regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
    return min(max(p, 0.0), 1.0)


def _marker_for(p: float) -> SignificanceMarker:
    if p <= 0.01:
        return SignificanceMarker.P01
    if p <= 0.05:
        return SignificanceMarker.P05
    return SignificanceMarker.NONE


def paired_t_test(
    baseline: Mapping[str, float], treatment: Mapping[str, float]
) -> TTestResult:
    """Two-tailed paired t-test over per-query values keyed by query id.

    Differences are treatment - baseline; the statistic uses the sample
    standard deviation (n-1 denominator). Zero-variance differences are
    decided directly: p=1.0 when all differences are zero, p=0.0 when all
    are the same nonzero value.
    """
    if set(baseline) != set(treatment):
        raise ValidationError("baseline and treatment must cover the same query set")
    n = len(baseline)
    if n < 2:
        raise ValidationError(f"paired t-test needs at least 2 queries, got {n}")
    qids = sorted(baseline)
    diffs = [treatment[qid] - baseline[qid] for qid in qids]
    mean = sum(diffs) / n
    variance = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    df = n - 1
    if variance == 0.0:
        if mean == 0.0:
            t, p = 0.0, 1.0
        else:
            t, p = math.copysign(math.inf, mean), 0.0
    else:
        t = mean / math.sqrt(variance / n)
        p = student_t_two_tailed_p(t, df)
    return TTestResult(t, df, p, mean, _marker_for(p))


def compare_runs(
    baseline_report: MetricReport, treatment_report: MetricReport, metric: str
) -> TTestResult:
    """Paired t-test over the shared queries' per-query values for one
    metric of two reports."""
    for report, name in ((baseline_report, "baseline"), (treatment_report, "treatment")):
        if metric not in report.aggregate:
            raise ValidationError(f"metric {metric!r} absent from the {name} report")
    shared = set(baseline_report.per_query) & set(treatment_report.per_query)
    if len(shared) < 2:
        raise ValidationError(
            f"reports share {len(shared)} queries; at least 2 are required"
        )
    baseline = {qid: baseline_report.per_query[qid][metric] for qid in shared}
    treatment = {qid: treatment_report.per_query[qid][metric] for qid in shared}
    return paired_t_test(baseline, treatment)
