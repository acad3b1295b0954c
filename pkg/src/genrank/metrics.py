"""Ranking metrics and the two-sided paired t-test."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ContractError, DegenerateTestError

log = logging.getLogger(__name__)


def _doc_ids(ranked) -> list[str]:
    """Accept a RankedList, a list of doc ids, or a list of (doc id, score) pairs."""
    entries = getattr(ranked, "entries", ranked)
    out = []
    for e in entries:
        if isinstance(e, str):
            out.append(e)
        elif hasattr(e, "doc_id"):
            out.append(e.doc_id)
        else:
            out.append(e[0])
    return out


def mrr(ranked, qrels: Mapping[str, int], cutoff: int = 10) -> float:
    for rank, doc in enumerate(_doc_ids(ranked)[:cutoff], start=1):
        if qrels.get(doc, 0) >= 1:
            return 1.0 / rank
    return 0.0


def dcg(grades: Sequence[float]) -> float:
    return float(sum(g / math.log2(i + 2) for i, g in enumerate(grades)))


def ndcg_at(ranked, qrels: Mapping[str, int], k: int = 10) -> float:
    ideal = dcg(sorted((g for g in qrels.values() if g > 0), reverse=True)[:k])
    if ideal == 0:
        return 0.0
    return dcg([qrels.get(d, 0) for d in _doc_ids(ranked)[:k]]) / ideal


def ndcg_at_10(ranked, qrels: Mapping[str, int]) -> float:
    return ndcg_at(ranked, qrels, 10)


def recall(ranked, qrels: Mapping[str, int], k: int | None = None) -> float:
    docs = _doc_ids(ranked)
    k = len(docs) if k is None else k
    relevant = {d for d, g in qrels.items() if g >= 1}
    if not relevant:
        raise ContractError("recall is undefined for a query without relevant documents")
    return len(relevant.intersection(docs[:k])) / len(relevant)


@dataclass
class MetricReport:
    per_query: dict[str, dict[str, float]] = field(default_factory=dict)
    excluded: list[str] = field(default_factory=list)

    METRICS = ("mrr", "ndcg@10", "recall")

    @property
    def n_queries(self) -> int:
        return len(self.per_query)

    def mean(self, metric: str) -> float:
        vals = [v[metric] for v in self.per_query.values() if metric in v]
        return float(np.mean(vals)) if vals else 0.0

    def values(self, metric: str, query_ids: Sequence[str] | None = None) -> list[float]:
        ids = sorted(self.per_query) if query_ids is None else query_ids
        return [self.per_query[q][metric] for q in ids]

    def to_tsv(self) -> str:
        lines = ["metric\tmean\tn_queries"]
        for m in self.METRICS:
            n = sum(1 for v in self.per_query.values() if m in v)
            lines.append(f"{m}\t{self.mean(m):.6f}\t{n}")
        return "\n".join(lines) + "\n"

    def per_query_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["query_id", *self.METRICS])
        for q in sorted(self.per_query):
            w.writerow([q, *(f"{self.per_query[q].get(m, float('nan')):.6f}" for m in self.METRICS)])
        return buf.getvalue()


def evaluate_run(run: Mapping[str, object], qrels: Mapping[str, Mapping[str, int]],
                 mrr_cutoff: int = 10, recall_depth: int | None = None) -> MetricReport:
    """Per-query MRR, NDCG@10 and Recall; queries missing from qrels are skipped."""
    report = MetricReport()
    for qid in sorted(run):
        judged = qrels.get(qid)
        if judged is None:
            log.warning("query %s has no qrels; excluded", qid)
            report.excluded.append(qid)
            continue
        ranked = run[qid]
        row = {"mrr": mrr(ranked, judged, mrr_cutoff), "ndcg@10": ndcg_at_10(ranked, judged)}
        if any(g >= 1 for g in judged.values()):
            row["recall"] = recall(ranked, judged, recall_depth)
        else:
            log.warning("query %s has no relevant documents; recall excluded", qid)
        report.per_query[qid] = row
    return report


# ---------------------------------------------------------------------------
# Student t distribution and the paired test
# ---------------------------------------------------------------------------


def _beta_continued_fraction(a: float, b: float, x: float, max_iter: int = 500,
                             eps: float = 1e-15) -> float:
    """Modified Lentz evaluation of the incomplete-beta continued fraction."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ContractError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_continued_fraction(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, dof: float) -> float:
    """P(|T| >= |t|) for Student's t with ``dof`` degrees of freedom."""
    if dof <= 0:
        raise ContractError("degrees of freedom must be positive")
    if not math.isfinite(t):
        return 0.0
    return min(1.0, regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t)))


def student_t_cdf(t: float, dof: float) -> float:
    tail = 0.5 * student_t_two_sided_p(t, dof)
    return 1.0 - tail if t >= 0 else tail


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sided paired t-test; returns (t statistic, p-value)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ContractError("paired t-test needs two aligned lists of length >= 2")
    diff = a - b
    n = diff.size
    sd = diff.std(ddof=1)
    if sd == 0:
        raise DegenerateTestError("differences have zero variance")
    t = float(diff.mean() / (sd / math.sqrt(n)))
    return t, student_t_two_sided_p(t, n - 1)
