"""Ranked-list truncation that maximises F1.

Four methods are compared under repeated k-fold cross-validation: the per-list
oracle, one global cut-off tuned on training lists (greedy), and a learned
self-attention predictor fed either relevance scores alone (``rel``) or
relevance plus four per-document uncertainty aggregates (``rel+unc``).
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DimensionError
from .nn import Linear, Module, TransformerEncoderLayer, sinusoidal_positions

log = logging.getLogger(__name__)

FEATURE_SETS = ("rel", "rel+unc")
METHODS = ("greedy", "oracle", "rel", "rel+unc")
METHOD_LABELS = {"greedy": "Greedy", "oracle": "Oracle", "rel": "Rel", "rel+unc": "Rel+Uncertainty"}


@dataclass(frozen=True)
class CutoffInstance:
    query_id: str
    relevance: np.ndarray  # [n], non-increasing
    uncertainty: np.ndarray  # [n, 4]
    labels: np.ndarray  # [n], 0/1

    def __post_init__(self):
        n = len(self.labels)
        if n == 0:
            raise ContractError(f"empty ranked list for query {self.query_id}")
        if self.relevance.shape != (n,) or self.uncertainty.ndim != 2 or self.uncertainty.shape[0] != n:
            raise DimensionError(
                f"query {self.query_id}: {self.relevance.shape} scores, {self.uncertainty.shape} "
                f"uncertainty rows, {n} labels")
        if np.any(np.diff(self.relevance) > 0):
            raise ContractError(f"query {self.query_id}: list is not ordered by relevance score")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def has_relevant(self) -> bool:
        return bool(self.labels.any())

    def features(self, feature_set: str) -> np.ndarray:
        if feature_set == "rel":
            return self.relevance[:, None]
        if feature_set == "rel+unc":
            return np.concatenate([self.relevance[:, None], self.uncertainty], axis=1)
        raise ContractError(f"unknown feature set {feature_set!r}; choose from {FEATURE_SETS}")


def make_instance(query_id: str, relevance, uncertainty, labels) -> CutoffInstance:
    unc = np.asarray(uncertainty, dtype=np.float64)
    return CutoffInstance(query_id, np.asarray(relevance, dtype=np.float64),
                          unc[:, None] if unc.ndim == 1 else unc,
                          (np.asarray(labels) > 0).astype(np.int64))


def instances_from_ranked_lists(ranked_lists) -> list[CutoffInstance]:
    """One instance per RankedList; each rank carries its own document's aggregates."""
    out = []
    for rl in ranked_lists:
        if any(e.aggregates is None or e.grade is None for e in rl.entries):
            raise ContractError(f"query {rl.query_id}: entries need grades and uncertainty aggregates")
        out.append(make_instance(rl.query_id, [e.score for e in rl.entries],
                                 [e.aggregates.as_tuple() for e in rl.entries],
                                 [e.grade for e in rl.entries]))
    return out


# ---------------------------------------------------------------------------
# F1, oracle, greedy
# ---------------------------------------------------------------------------


def _f1_curve(labels) -> np.ndarray:
    """F1 at every k = 1..n; identically 0 when nothing is relevant."""
    labels = np.asarray(labels) > 0
    total = labels.sum()
    k = np.arange(1, len(labels) + 1)
    return 2.0 * np.cumsum(labels) / (k + total) if total else np.zeros(len(labels))


def f1_at(labels, k: int) -> float:
    if not 1 <= k <= len(labels):
        raise ContractError(f"cut-off {k} outside [1, {len(labels)}]")
    if not np.any(np.asarray(labels) > 0):
        log.warning("list without relevant documents: F1 is 0 at every cut-off")
    return float(_f1_curve(labels)[k - 1])


def oracle_cutoff(labels) -> tuple[int, float]:
    """Best k (smallest on ties) and its F1."""
    if len(labels) == 0:
        raise ContractError("oracle cut-off needs a non-empty list")
    curve = _f1_curve(labels)
    k = int(np.argmax(curve))
    return k + 1, float(curve[k])


def _clipped_f1(labels, k: int) -> float:
    return float(_f1_curve(labels)[min(k, len(labels)) - 1])


def greedy_cutoff(train: Sequence) -> int:
    """Single cut-off maximising mean training F1; lists shorter than k are cut at their end."""
    if not train:
        raise ContractError("greedy cut-off needs at least one training list")
    lists = [getattr(x, "labels", x) for x in train]
    depth = max(len(x) for x in lists)
    mean_f1 = np.zeros(depth)
    for labels in lists:
        curve = _f1_curve(labels)
        mean_f1 += np.concatenate([curve, np.full(depth - len(curve), curve[-1])])
    return int(np.argmax(mean_f1)) + 1


# ---------------------------------------------------------------------------
# Learned predictor
# ---------------------------------------------------------------------------


def _znorm(x: np.ndarray) -> np.ndarray:
    sd = x.std(axis=0)
    return (x - x.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def _pad(instances: Sequence[CutoffInstance], feature_set: str):
    depth = max(len(x) for x in instances)
    dim = instances[0].features(feature_set).shape[1]
    feats = np.zeros((len(instances), depth, dim))
    mask = np.zeros((len(instances), depth), dtype=bool)
    for i, inst in enumerate(instances):
        f = inst.features(feature_set)
        if f.shape[1] != dim:
            raise ContractError(f"query {inst.query_id}: {f.shape[1]} features, expected {dim}")
        feats[i, :len(inst)] = _znorm(f)
        mask[i, :len(inst)] = True
    return feats, mask


class CutoffPredictor(Module):
    """Per-rank features -> projection + positions -> self-attention -> one logit per rank."""

    def __init__(self, n_features: int, feature_set: str, dim: int = 32, n_heads: int = 2,
                 ff_dim: int = 64, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.n_features = n_features
        self.feature_set = feature_set
        self.dim = dim
        self.proj = Linear(rng, n_features, dim)
        self.layer = TransformerEncoderLayer(rng, dim, n_heads, ff_dim)
        self.head = Linear(rng, dim, 1)

    def logits(self, feats: np.ndarray, mask: np.ndarray) -> ad.Tensor:
        if feats.shape[-1] != self.n_features:
            raise ContractError(f"predictor expects {self.n_features} features, got {feats.shape[-1]}")
        b, depth, _ = feats.shape
        x = self.proj(ad.Tensor(feats)) + sinusoidal_positions(depth, self.dim)
        x = self.layer(x, mask[:, None, None, :])
        scores = ad.reshape(self.head(x), (b, depth))
        return ad.masked_fill(scores, ~mask, ad.MASK_VALUE)

    def predict(self, instances: Sequence[CutoffInstance]) -> np.ndarray:
        """Predicted cut-offs, each in [1, list length]."""
        feats, mask = _pad(instances, self.feature_set)
        with ad.no_grad():
            return np.argmax(self.logits(feats, mask).data, axis=1) + 1


def train_predictor(instances: Sequence[CutoffInstance], feature_set: str, seed: int = 0,
                    epochs: int = 15, lr: float = 3e-3, batch_size: int = 32) -> CutoffPredictor:
    """Listwise cross-entropy against the oracle position, Adam, seeded shuffling."""
    if len(instances) < 2:
        raise ContractError("train_predictor needs at least 2 instances")
    feats, mask = _pad(instances, feature_set)
    target = np.array([oracle_cutoff(x.labels)[0] - 1 for x in instances])
    model = CutoffPredictor(feats.shape[2], feature_set, seed=seed)
    opt = ad.Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    n = len(instances)
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            logp = ad.log_softmax(model.logits(feats[idx], mask[idx]), axis=-1)
            loss = -ad.mean(ad.gather_last(logp, target[idx]))
            opt.zero_grad()
            ad.backward(loss)
            opt.step()
    return model


# ---------------------------------------------------------------------------
# Cross-validated evaluation
# ---------------------------------------------------------------------------


@dataclass
class CutoffReport:
    fold_f1: dict[str, list[float]] = field(default_factory=lambda: {m: [] for m in METHODS})
    n_instances: int = 0
    n_excluded: int = 0
    folds: int = 5
    trials: int = 50

    def mean_f1(self, method: str) -> float:
        return float(np.mean(self.fold_f1[method]))

    def pct_of_oracle(self, method: str) -> float:
        oracle = self.mean_f1("oracle")
        return 100.0 * self.mean_f1(method) / oracle if oracle > 0 else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "mean_f1", "pct_of_oracle"])
        for m in METHODS:
            w.writerow([METHOD_LABELS[m], f"{self.mean_f1(m):.4f}", f"{self.pct_of_oracle(m):.1f}"])
        return buf.getvalue()

    def to_table(self) -> str:
        rows = [("Method", "F1", "% of Oracle")]
        rows += [(METHOD_LABELS[m], f"{self.mean_f1(m):.3f}", f"{self.pct_of_oracle(m):.1f}")
                 for m in METHODS]
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        lines = [f"{r[0]:<{widths[0]}}  {r[1]:>{widths[1]}}  {r[2]:>{widths[2]}}" for r in rows]
        lines.insert(1, "-" * len(lines[0]))
        lines.append(f"{self.n_instances} lists, {self.n_excluded} excluded (no relevant), "
                     f"{self.trials} trials x {self.folds} folds")
        return "\n".join(lines) + "\n"


def evaluate(instances: Sequence[CutoffInstance], folds: int = 5, trials: int = 50, seed: int = 0,
             epochs: int = 15, lr: float = 3e-3) -> CutoffReport:
    usable = [x for x in instances if x.has_relevant]
    excluded = len(instances) - len(usable)
    if excluded:
        log.warning("%d lists without relevant documents excluded from cut-off evaluation", excluded)
    if folds < 2:
        raise ContractError("cross-validation needs at least 2 folds")
    if len(usable) < folds:
        raise ContractError(f"{len(usable)} usable lists cannot fill {folds} folds")
    report = CutoffReport(n_instances=len(usable), n_excluded=excluded, folds=folds, trials=trials)
    rng = np.random.default_rng(seed)
    for trial in range(trials):
        order = rng.permutation(len(usable))
        parts = np.array_split(order, folds)
        for f, test_idx in enumerate(parts):
            train = [usable[i] for j, p in enumerate(parts) if j != f for i in p]
            test = [usable[i] for i in test_idx]
            labels = [x.labels for x in test]
            k = greedy_cutoff(train)
            report.fold_f1["greedy"].append(float(np.mean([_clipped_f1(y, k) for y in labels])))
            report.fold_f1["oracle"].append(float(np.mean([oracle_cutoff(y)[1] for y in labels])))
            for fs in FEATURE_SETS:
                model = train_predictor(train, fs, seed=seed * 100_003 + trial * folds + f,
                                        epochs=epochs, lr=lr)
                ks = model.predict(test)
                report.fold_f1[fs].append(float(np.mean([f1_at(y, int(k)) for y, k in zip(labels, ks)])))
    return report


# ---------------------------------------------------------------------------
# Synthetic data with planted uncertainty signal
# ---------------------------------------------------------------------------


def synthetic_cutoff_data(n_lists: int = 200, depth: int = 20, seed: int = 0,
                          separation: float = 3.0, uncertainty_signal: float = 1.0,
                          max_relevant: float = 0.8) -> list[CutoffInstance]:
    """Lists whose relevance scores only loosely separate relevant documents.

    The number of relevant documents is log-uniform on [1, max_relevant * depth],
    so no single global cut-off suits every list. Latent scores: relevant
    ~ N(separation, 1), others ~ N(0, 1); lists are sorted by score. Each
    document's four uncertainty aggregates are lower by ``uncertainty_signal``
    (in noise units) when it is relevant.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_lists):
        n_rel = int(round(np.exp(rng.uniform(0.0, np.log(max_relevant * depth)))))
        labels = np.zeros(depth, dtype=np.int64)
        labels[:n_rel] = 1
        scores = rng.normal(size=depth) + separation * labels
        order = np.argsort(-scores, kind="stable")
        labels, scores = labels[order], scores[order]
        base = rng.normal(size=(depth, 1)) * 0.3
        unc = 1.0 + base + rng.normal(scale=0.5, size=(depth, 4)) \
            - 0.5 * uncertainty_signal * labels[:, None]
        out.append(make_instance(f"s{i}", scores, np.abs(unc), labels))
    return out
