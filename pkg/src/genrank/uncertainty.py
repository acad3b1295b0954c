"""Nucleus-entropy uncertainty of generation steps and its aggregates."""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, UndefinedCorrelationError
from .metrics import student_t_two_sided_p

DEFAULT_P = 0.95
_CUM_TOL = 1e-12


@dataclass(frozen=True)
class NucleusDistribution:
    support: np.ndarray  # token ids, most probable first
    probs: np.ndarray  # renormalised over the support
    p_threshold: float

    def __len__(self) -> int:
        return len(self.support)


def nucleus(dist, p: float = DEFAULT_P) -> NucleusDistribution:
    """Smallest most-probable prefix whose mass reaches ``p``, renormalised."""
    if not 0.0 < p <= 1.0:
        raise ContractError(f"nucleus threshold must lie in (0, 1], got {p}")
    dist = np.asarray(dist, dtype=np.float64)
    if abs(dist.sum() - 1.0) > 1e-6:
        raise ContractError(f"distribution sums to {dist.sum():.9f}, expected 1")
    order = np.argsort(-dist, kind="stable")
    sorted_p = dist[order]
    nonzero = int(np.count_nonzero(sorted_p > 0))
    k = int(np.searchsorted(np.cumsum(sorted_p), p - _CUM_TOL, side="left")) + 1
    k = max(1, min(k, nonzero))
    support = order[:k]
    mass = sorted_p[:k]
    return NucleusDistribution(support, mass / mass.sum(), p)


def entropy(probs) -> float:
    """Shannon entropy in nats, with 0 log 0 = 0."""
    probs = np.asarray(probs, dtype=np.float64)
    nz = probs[probs > 0]
    return float(-(nz * np.log(nz)).sum()) + 0.0


def term_uncertainty(nd: NucleusDistribution) -> float:
    return entropy(nd.probs)


def step_uncertainties(dists: np.ndarray, p: float = DEFAULT_P) -> np.ndarray:
    """Term-level uncertainty for every row of a ``[T, V]`` array of distributions."""
    return np.array([term_uncertainty(nucleus(row, p)) for row in np.atleast_2d(dists)])


@dataclass(frozen=True)
class UncertaintyAggregates:
    mean: float
    variance: float
    max: float
    entropy: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.mean, self.variance, self.max, self.entropy


AGGREGATE_NAMES = ("mean", "variance", "max", "entropy")


def query_aggregates(values: Sequence[float]) -> UncertaintyAggregates:
    """Mean, population variance, max, and the entropy of the values normalised to sum 1."""
    u = np.asarray(values, dtype=np.float64)
    if u.size == 0:
        raise ContractError("cannot aggregate an empty list of uncertainties")
    if np.any(u < 0):
        raise ContractError("term uncertainties must be non-negative")
    total = u.sum()
    ent = entropy(u / total) if total > 0 else 0.0
    mean = float(u.mean())
    return UncertaintyAggregates(mean, float(np.mean((u - mean) ** 2)), float(u.max()), ent)


# ---------------------------------------------------------------------------
# Correlation
# ---------------------------------------------------------------------------


def fractional_ranks(xs) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    xs = np.asarray(xs, dtype=np.float64)
    order = np.argsort(xs, kind="stable")
    ranks = np.empty(len(xs))
    sorted_x = xs[order]
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    if len(xs) != len(ys) or len(xs) < 2:
        raise ContractError("spearman needs two equal-length lists of at least 2 values")
    rx, ry = fractional_ranks(xs), fractional_ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx ** 2).sum() * (ry ** 2).sum())
    if denom == 0:
        raise UndefinedCorrelationError("a list has zero rank variance")
    return float(np.clip((rx * ry).sum() / denom, -1.0, 1.0))


def spearman_test(xs, ys) -> tuple[float, float]:
    """Spearman r with a two-sided p-value from the t approximation (n - 2 dof)."""
    r = spearman(xs, ys)
    n = len(xs)
    if n < 3:
        return r, 1.0
    if abs(r) >= 1.0:
        return r, 0.0
    t = r * np.sqrt((n - 2) / (1.0 - r * r))
    return r, student_t_two_sided_p(t, n - 2)


# ---------------------------------------------------------------------------
# Position-level analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PositionSummary:
    query_length: int
    position: int  # 1-based; the last position is EOS
    q1: float
    median: float
    q3: float
    mean: float
    n: int


def position_stats(per_query: Iterable[Sequence[float]]) -> dict[int, list[PositionSummary]]:
    """Group per-query term uncertainties by query length, summarise each position."""
    groups: dict[int, list[np.ndarray]] = defaultdict(list)
    for values in per_query:
        values = np.asarray(values, dtype=np.float64)
        groups[len(values)].append(values)
    out = {}
    for length in sorted(groups):
        mat = np.stack(groups[length])
        q1, med, q3 = np.percentile(mat, [25, 50, 75], axis=0)
        out[length] = [PositionSummary(length, i + 1, float(q1[i]), float(med[i]), float(q3[i]),
                                       float(mat[:, i].mean()), mat.shape[0])
                       for i in range(length)]
    return out


def eos_is_lowest(stats: dict[int, list[PositionSummary]]) -> dict[int, bool]:
    """Per query length: is the mean uncertainty at EOS the minimum over positions?"""
    out = {}
    for length, rows in stats.items():
        means = [r.mean for r in rows]
        out[length] = bool(means[-1] <= min(means))
    return out


def relevance_csv(rows: Iterable[tuple[str, str, float, UncertaintyAggregates]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["query_id", "doc_id", "relevance_score", "unc_mean", "unc_var", "unc_max", "unc_entropy"])
    for qid, did, score, agg in rows:
        w.writerow([qid, did, f"{score:.10g}", f"{agg.mean:.10g}", f"{agg.variance:.10g}",
                    f"{agg.max:.10g}", f"{agg.entropy:.10g}"])
    return buf.getvalue()


def position_csv(stats: dict[int, list[PositionSummary]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["query_length", "position", "q1", "median", "q3"])
    for length in sorted(stats):
        for r in stats[length]:
            w.writerow([length, r.position, f"{r.q1:.10g}", f"{r.median:.10g}", f"{r.q3:.10g}"])
    return buf.getvalue()
