"""Generative relevance scoring, the QL and BM25 baselines, and re-ranking."""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DataError
from .models import PROB_FLOOR, GenerativeRanker, make_batch
from .text import EncodedDoc, Vocabulary, encode_doc, tokenize
from .uncertainty import DEFAULT_P, UncertaintyAggregates, query_aggregates, step_uncertainties

log = logging.getLogger(__name__)


@dataclass
class GenerationProfile:
    query_id: str
    doc_id: str
    tokens: list[str]  # query tokens followed by "<eos>"
    token_ids: np.ndarray  # target ids in the document's extended vocabulary
    log_probs: np.ndarray
    floored: np.ndarray
    uncertainties: np.ndarray | None = None

    @property
    def score(self) -> float:
        return float(self.log_probs.sum())

    def __len__(self) -> int:
        return len(self.log_probs)

    @property
    def any_floored(self) -> bool:
        return bool(self.floored.any())

    def aggregates(self) -> UncertaintyAggregates:
        if self.uncertainties is None:
            raise ContractError("profile has no term uncertainties")
        return query_aggregates(self.uncertainties)


def _query_tokens(query) -> list[str]:
    return tokenize(query) if isinstance(query, str) else list(query)


def score_profiles(model: GenerativeRanker, query, docs: Sequence[EncodedDoc],
                   doc_ids: Sequence[str] | None = None, query_id: str = "",
                   batch_size: int = 64, nucleus_p: float | None = DEFAULT_P
                   ) -> list[GenerationProfile]:
    """Teacher-forced profiles of one query against many documents.

    ``nucleus_p=None`` skips term uncertainties.
    """
    tokens = _query_tokens(query)
    doc_ids = list(doc_ids) if doc_ids is not None else [str(i) for i in range(len(docs))]
    out: list[GenerationProfile] = []
    with ad.no_grad():
        for lo in range(0, len(docs), batch_size):
            chunk = docs[lo:lo + batch_size]
            batch = make_batch(chunk, [tokens] * len(chunk), copy=model.copies)
            _, step_lp, floored, final = model.query_log_probs(batch)
            t_len = int(batch.query_mask[0].sum())
            for i, doc in enumerate(chunk):
                unc = None
                if nucleus_p is not None:
                    ext = len(doc.ext_vocab)
                    unc = step_uncertainties(final.data[i, :t_len, :ext], nucleus_p)
                out.append(GenerationProfile(
                    query_id, doc_ids[lo + i], tokens[:t_len - 1] + ["<eos>"],
                    batch.targets[i, :t_len].copy(), step_lp.data[i, :t_len].copy(),
                    floored[i, :t_len].copy(), unc))
    return out


def score_query_doc(model: GenerativeRanker, query, doc: EncodedDoc, query_id: str = "",
                    doc_id: str = "", nucleus_p: float | None = DEFAULT_P
                    ) -> tuple[float, GenerationProfile]:
    """Sum over query positions (EOS included) of log final-dist probability."""
    profile = score_profiles(model, query, [doc], [doc_id], query_id, nucleus_p=nucleus_p)[0]
    return profile.score, profile


def score_pairs(model: GenerativeRanker, queries: Sequence[Sequence[str]], docs: Sequence[EncodedDoc],
                batch_size: int = 64) -> np.ndarray:
    """Scores of aligned (query, doc) pairs, batched; no profiles."""
    out = np.empty(len(docs))
    with ad.no_grad():
        for lo in range(0, len(docs), batch_size):
            batch = make_batch(docs[lo:lo + batch_size], queries[lo:lo + batch_size], copy=model.copies)
            total, _, _, _ = model.query_log_probs(batch)
            out[lo:lo + batch_size] = total.data
    return out


# ---------------------------------------------------------------------------
# Ranked lists
# ---------------------------------------------------------------------------


@dataclass
class RankedEntry:
    doc_id: str
    score: float
    grade: int | None = None
    aggregates: UncertaintyAggregates | None = None
    profile: GenerationProfile | None = None


@dataclass
class RankedList:
    query_id: str
    entries: list[RankedEntry] = field(default_factory=list)

    def __post_init__(self):
        self.entries.sort(key=lambda e: (-e.score, e.doc_id))
        ids = [e.doc_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate doc id in ranked list for query {self.query_id}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]

    def pairs(self) -> list[tuple[str, float]]:
        return [(e.doc_id, e.score) for e in self.entries]


class DocumentCache:
    """Encodes collection texts lazily and keeps the result."""

    def __init__(self, collection: Mapping[str, str], vocab: Vocabulary):
        self.collection = collection
        self.vocab = vocab
        self._cache: dict[str, EncodedDoc] = {}

    def __getitem__(self, doc_id: str) -> EncodedDoc:
        doc = self._cache.get(doc_id)
        if doc is None:
            text = self.collection.get(doc_id)
            if text is None:
                raise DataError(f"document {doc_id!r} not found in collection")
            doc = encode_doc(text, self.vocab)
            self._cache[doc_id] = doc
        return doc


def rerank(model: GenerativeRanker, query_id: str, query, candidates: Sequence[tuple[str, float]],
           docs: DocumentCache, qrels: Mapping[str, int] | None = None,
           nucleus_p: float | None = DEFAULT_P, keep_profiles: bool = True) -> RankedList:
    if not candidates:
        raise ContractError(f"no candidates to re-rank for query {query_id}")
    doc_ids = [d for d, _ in candidates]
    encoded = [docs[d] for d in doc_ids]
    profiles = score_profiles(model, query, encoded, doc_ids, query_id, nucleus_p=nucleus_p)
    entries = []
    for prof in profiles:
        entries.append(RankedEntry(
            prof.doc_id, prof.score,
            None if qrels is None else qrels.get(prof.doc_id, 0),
            prof.aggregates() if prof.uncertainties is not None else None,
            prof if keep_profiles else None))
    return RankedList(query_id, entries)


# ---------------------------------------------------------------------------
# Query likelihood with Dirichlet smoothing
# ---------------------------------------------------------------------------


class CollectionLM:
    def __init__(self, docs: Mapping[str, Sequence[str]], mu: float = 1000.0):
        if not mu > 0:
            raise ContractError(f"Dirichlet mu must be > 0, got {mu}")
        self.mu = mu
        self.doc_tf: dict[str, Counter] = {d: Counter(toks) for d, toks in docs.items()}
        self.doc_len: dict[str, int] = {d: len(toks) for d, toks in docs.items()}
        cf: Counter = Counter()
        for tf in self.doc_tf.values():
            cf.update(tf)
        total = sum(cf.values())
        self.p_collection: dict[str, float] = {w: c / total for w, c in cf.items()} if total else {}

    @classmethod
    def from_texts(cls, collection: Mapping[str, str], mu: float = 1000.0) -> "CollectionLM":
        return cls({d: tokenize(t) for d, t in collection.items()}, mu)

    def step_probabilities(self, query_tokens: Sequence[str], doc) -> tuple[np.ndarray, np.ndarray]:
        """Smoothed P(q | doc) per query token and a floor flag per token."""
        if isinstance(doc, str):
            tf, length = self.doc_tf[doc], self.doc_len[doc]
        else:
            tf, length = Counter(doc), len(doc)
        probs = np.array([(tf.get(q, 0) + self.mu * self.p_collection.get(q, 0.0)) / (length + self.mu)
                          for q in query_tokens])
        flags = probs < PROB_FLOOR
        return np.maximum(probs, PROB_FLOOR), flags


def ql_score(query, doc, lm: CollectionLM) -> float:
    """Sum of log Dirichlet-smoothed term probabilities; ``doc`` is an id or tokens."""
    probs, _ = lm.step_probabilities(_query_tokens(query), doc)
    return float(np.log(probs).sum())


def ql_rerank(query_id: str, query, candidates: Sequence[tuple[str, float]], lm: CollectionLM) -> RankedList:
    tokens = _query_tokens(query)
    return RankedList(query_id, [RankedEntry(d, ql_score(tokens, d, lm)) for d, _ in candidates])


# ---------------------------------------------------------------------------
# BM25
# ---------------------------------------------------------------------------


class BM25Index:
    def __init__(self, docs: Mapping[str, Sequence[str]], k1: float = 1.2, b: float = 0.75):
        self.k1, self.b = k1, b
        self.doc_len = {d: len(t) for d, t in docs.items()}
        self.n_docs = len(docs)
        self.avgdl = (sum(self.doc_len.values()) / self.n_docs) if self.n_docs else 0.0
        self.postings: dict[str, dict[str, int]] = {}
        for d, toks in docs.items():
            for term, tf in Counter(toks).items():
                self.postings.setdefault(term, {})[d] = tf

    @classmethod
    def from_texts(cls, collection: Mapping[str, str], **kw) -> "BM25Index":
        return cls({d: tokenize(t) for d, t in collection.items()}, **kw)

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))

    def scores(self, query_tokens: Iterable[str]) -> dict[str, float]:
        out: dict[str, float] = {}
        for term in query_tokens:
            posting = self.postings.get(term)
            if not posting:
                continue
            idf = self.idf(term)
            for d, tf in posting.items():
                norm = self.k1 * (1.0 - self.b + self.b * self.doc_len[d] / self.avgdl)
                out[d] = out.get(d, 0.0) + idf * tf * (self.k1 + 1.0) / (tf + norm)
        return out


def bm25_topk(query, index: BM25Index, k: int = 200) -> list[tuple[str, float]]:
    """Top-k documents sharing at least one term with the query, doc-id tie-break."""
    tokens = _query_tokens(query)
    if not tokens:
        log.warning("empty query after tokenization; no candidates")
        return []
    scored = sorted(index.scores(tokens).items(), key=lambda kv: (-kv[1], kv[0]))
    return scored[:k]
