"""Desk-scale experiment drivers shared by ``scripts/`` and the acceptance suite.

All corpora come from :mod:`genrank.toy`, so every experiment runs offline.
"""
from __future__ import annotations

import io
import time
from dataclasses import dataclass, field

import numpy as np

from .metrics import MetricReport, evaluate_run, paired_t_test
from .models import GenerativeRanker, ModelConfig, build_model
from .scoring import CollectionLM, DocumentCache, ql_rerank, rerank
from .text import Vocabulary, build_vocab, tokenize
from .toy import ToyCorpus, make_toy_corpus
from .training import LossKind, TextTriple, train


def corpus_vocab(corpus: ToyCorpus, min_frequency: int = 5) -> Vocabulary:
    """Vocabulary over passages plus training queries; held-out queries never leak in."""
    return build_vocab(list(corpus.collection.values()) + list(corpus.train_queries().values()),
                       min_frequency)


def text_triples(corpus: ToyCorpus, cache: DocumentCache) -> list[TextTriple]:
    return [TextTriple(tuple(tokenize(corpus.queries[q])), cache[p], cache[n])
            for q, p, n in corpus.triples]


# -- trainability ------------------------------------------------------------

@dataclass(frozen=True)
class TrainabilityResult:
    architecture: str
    loss: str
    epochs: int
    accuracy: float
    seconds: float
    target: float

    @property
    def reached(self) -> bool:
        return self.accuracy >= self.target


def trainability(architecture: str, loss: str, n_triples: int = 50, max_epochs: int = 200,
                 target: float = 0.95, seed: int = 0, batch_size: int = 2,
                 feedforward_dim: int = 64) -> TrainabilityResult:
    """Train on a ``n_triples`` toy corpus until pairwise accuracy reaches ``target``."""
    corpus = make_toy_corpus(n_train_queries=n_triples // 2, triples_per_query=2, seed=seed)
    vocab = corpus_vocab(corpus)
    triples = text_triples(corpus, DocumentCache(corpus.collection, vocab))
    model = build_model(ModelConfig(architecture, len(vocab), feedforward_dim=feedforward_dim,
                                    seed=seed))
    _, report = train(model, triples, LossKind(loss), max_epochs, seed=seed,
                      batch_size=batch_size, stream=io.StringIO(), target_accuracy=target)
    return TrainabilityResult(architecture, loss, len(report.epoch_accuracy),
                              max(report.epoch_accuracy), report.wall_time, target)


# -- copy discriminator -------------------------------------------------------

@dataclass(frozen=True)
class CopyProbe:
    architecture: str
    cases: int
    nonzero: int  # cases where the OOV query term got positive probability
    extended_mass_zero: int  # cases where every extended id got exactly zero

    @property
    def nonzero_rate(self) -> float:
        return self.nonzero / self.cases

    @property
    def zero_mass_rate(self) -> float:
        return self.extended_mass_zero / self.cases


def copy_probe(architecture: str, corpus: ToyCorpus, vocab: Vocabulary,
               model: GenerativeRanker | None = None, seed: int = 0) -> CopyProbe:
    """Score every query against each passage containing its OOV entity.

    A case is one (query, passage) pair; the probe looks at the decoder step
    that emits the entity.
    """
    if model is None:
        model = build_model(ModelConfig(architecture, len(vocab), feedforward_dim=64, seed=seed))
    cache = DocumentCache(corpus.collection, vocab)
    by_entity: dict[str, list[str]] = {}
    for did, e in corpus.doc_entity.items():
        by_entity.setdefault(e, []).append(did)
    cases = nonzero = zero_mass = 0
    for qid, text in corpus.queries.items():
        tokens = tokenize(text)
        entity = next((t for t in tokens if t in by_entity and t not in vocab), None)
        if entity is None:
            continue
        pos = tokens.index(entity)
        for did in by_entity[entity]:
            doc = cache[did]
            step = model.forward_teacher_forced(doc, tokens)[pos]
            cases += 1
            nonzero += bool(step.final_dist[doc.ext_vocab.id(entity)] > 0)
            zero_mass += bool(np.all(step.final_dist[len(vocab):] == 0.0))
    return CopyProbe(architecture, cases, nonzero, zero_mass)


# -- ranking quality -----------------------------------------------------------

@dataclass
class RankingQuality:
    reports: dict[str, MetricReport] = field(default_factory=dict)
    train_seconds: float = 0.0
    final_accuracy: float = float("nan")

    def mean(self, system: str, metric: str = "mrr") -> float:
        return self.reports[system].mean(metric)

    def compare(self, a: str, b: str, metric: str = "mrr") -> tuple[float, float, float]:
        """(mean difference, t, p) of system ``a`` over ``b`` on shared queries."""
        ids = sorted(set(self.reports[a].per_query) & set(self.reports[b].per_query))
        x, y = self.reports[a].values(metric, ids), self.reports[b].values(metric, ids)
        t, p = paired_t_test(x, y)
        return float(np.mean(x) - np.mean(y)), t, p


def ranking_quality(architecture: str = "t_pgn", loss: str = "nll", n_train_queries: int = 150,
                    n_heldout: int = 500, n_candidates: int = 20, docs_per_entity: int = 6,
                    min_frequency: int = 10, epochs: int = 200, lr: float | None = None,
                    batch_size: int = 32, seed: int = 0, mu: float = 1000.0) -> RankingQuality:
    """Untrained vs trained generative ranker vs QL on held-out planted candidates.

    Every entity appears once per topic, so exact matching cannot tell the
    relevant passage from its siblings; only the learned topic mapping can.
    """
    corpus = make_toy_corpus(n_entities=n_train_queries + n_heldout, n_topics=6,
                             docs_per_entity=docs_per_entity, n_train_queries=n_train_queries,
                             n_candidates=n_candidates, seed=seed)
    vocab = corpus_vocab(corpus, min_frequency)
    cache = DocumentCache(corpus.collection, vocab)
    config = ModelConfig(architecture, len(vocab), seed=seed)
    cands = {q: [(d, 0.0) for d in corpus.candidates[q]] for q in corpus.dev_qids}

    def run_of(model):
        return {q: rerank(model, q, corpus.queries[q], cands[q], cache, nucleus_p=None,
                          keep_profiles=False).pairs() for q in corpus.dev_qids}

    out = RankingQuality()
    out.reports["untrained"] = evaluate_run(run_of(build_model(config)), corpus.qrels)
    model = build_model(config)
    start = time.perf_counter()
    _, report = train(model, text_triples(corpus, cache), LossKind(loss), epochs, lr, seed,
                      batch_size=batch_size, stream=io.StringIO())
    out.train_seconds = time.perf_counter() - start
    out.final_accuracy = report.accuracy
    out.reports["trained"] = evaluate_run(run_of(model), corpus.qrels)
    lm = CollectionLM.from_texts(corpus.collection, mu)
    out.reports["ql"] = evaluate_run({q: ql_rerank(q, corpus.queries[q], cands[q], lm).pairs()
                                      for q in corpus.dev_qids}, corpus.qrels)
    return out

