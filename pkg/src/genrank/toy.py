"""Synthetic retrieval corpus with vocabulary mismatch and planted OOV entities.

Every passage pairs a rare entity name with a topic. Passages describe the
topic with *document-side* words; queries name the topic with *query-side*
words that never occur in passages, and name the entity verbatim. Each entity
occurs in ``docs_per_entity`` passages (with different topics) and in a single
query, so with the default vocabulary threshold entity names stay OOV and can
only be produced by copying. Exact-match baselines see the entity but not the
topic; a trained generator can learn the topic mapping.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .text import write_qrels, write_run, write_tsv_pairs

_CONS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
FILLERS = ("the", "a", "of", "and", "in", "to", "is", "was", "for", "with", "on", "by", "as",
           "at", "it", "from", "that", "are", "this", "be")
TEMPLATES = (
    ("what", "is", "{e}", "{q0}"),
    ("how", "{q0}", "{q1}", "{e}"),
    ("{q0}", "of", "{e}"),
    ("{e}", "{q1}"),
    ("how", "does", "{e}", "{q0}", "{q1}"),
    ("where", "{q1}", "{e}", "{q0}"),
)


def _syllable(rng) -> str:
    return _CONS[rng.integers(len(_CONS))] + _VOWELS[rng.integers(len(_VOWELS))]


def _fresh_words(rng, n: int, syllables: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < n:
        w = "".join(_syllable(rng) for _ in range(syllables))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


@dataclass
class ToyCorpus:
    collection: dict[str, str]
    queries: dict[str, str]
    train_qids: list[str]
    dev_qids: list[str]
    triples: list[tuple[str, str, str]]
    qrels: dict[str, dict[str, int]]
    candidates: dict[str, list[str]] = field(default_factory=dict)
    doc_topic: dict[str, int] = field(default_factory=dict)
    doc_entity: dict[str, str] = field(default_factory=dict)

    def train_queries(self) -> dict[str, str]:
        return {q: self.queries[q] for q in self.train_qids}

    def dev_queries(self) -> dict[str, str]:
        return {q: self.queries[q] for q in self.dev_qids}

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "collection": out / "collection.tsv",
            "queries": out / "queries.train.tsv",
            "dev_queries": out / "queries.dev.tsv",
            "triples": out / "triples.train.tsv",
            "qrels": out / "qrels.dev.txt",
            "train_qrels": out / "qrels.train.txt",
            "candidates": out / "candidates.dev.run",
        }
        write_tsv_pairs(paths["collection"], self.collection)
        write_tsv_pairs(paths["queries"], self.train_queries())
        write_tsv_pairs(paths["dev_queries"], self.dev_queries())
        paths["triples"].write_text("".join(f"{q}\t{p}\t{n}\n" for q, p, n in self.triples), encoding="utf-8")
        write_qrels(paths["qrels"], {q: self.qrels[q] for q in self.dev_qids})
        write_qrels(paths["train_qrels"], {q: self.qrels[q] for q in self.train_qids})
        # first-stage scores are placeholders; only the listed order matters
        write_run(paths["candidates"], {q: [(d, float(-r)) for r, d in enumerate(docs, 1)]
                                        for q, docs in self.candidates.items()}, "toy")
        return paths


def make_toy_corpus(n_entities: int = 67, n_topics: int = 6, docs_per_entity: int = 3,
                    n_train_queries: int | None = None, triples_per_query: int = 2,
                    n_candidates: int = 20, topic_doc_words: int = 6, seed: int = 0) -> ToyCorpus:
    """Build a corpus of ``n_entities * docs_per_entity`` passages and one query per entity.

    The first ``n_train_queries`` queries (default 3/4) form the training split;
    the rest are held out with planted candidate lists of ``n_candidates`` docs.
    """
    rng = np.random.default_rng(seed)
    taken = set(FILLERS) | {w for t in TEMPLATES for w in t}
    doc_words = [_fresh_words(rng, topic_doc_words, 2, taken) for _ in range(n_topics)]
    query_words = [_fresh_words(rng, 2, 2, taken) for _ in range(n_topics)]
    entities = _fresh_words(rng, n_entities, 3, taken)

    collection: dict[str, str] = {}
    doc_topic: dict[str, int] = {}
    doc_entity: dict[str, str] = {}
    by_entity: dict[str, list[str]] = {}
    by_topic: dict[int, list[str]] = {t: [] for t in range(n_topics)}
    n_docs = 0
    for e in entities:
        topics = rng.choice(n_topics, size=min(docs_per_entity, n_topics), replace=False)
        for t in topics:
            did = f"d{n_docs}"
            n_docs += 1
            words = list(rng.choice(doc_words[t], size=4, replace=False))
            words += list(rng.choice(FILLERS, size=int(rng.integers(5, 9))))
            words.insert(int(rng.integers(len(words) + 1)), e)
            order = rng.permutation(len(words))
            collection[did] = " ".join(words[i] for i in order)
            doc_topic[did] = int(t)
            doc_entity[did] = e
            by_entity.setdefault(e, []).append(did)
            by_topic[int(t)].append(did)

    queries: dict[str, str] = {}
    qrels: dict[str, dict[str, int]] = {}
    relevant: dict[str, str] = {}
    for i, e in enumerate(entities):
        did = by_entity[e][int(rng.integers(len(by_entity[e])))]
        q0, q1 = query_words[doc_topic[did]]
        template = TEMPLATES[int(rng.integers(len(TEMPLATES)))]
        qid = f"q{i}"
        queries[qid] = " ".join(w.format(e=e, q0=q0, q1=q1) for w in template)
        qrels[qid] = {did: 1}
        relevant[qid] = did

    qids = list(queries)
    n_train = int(round(0.75 * len(qids))) if n_train_queries is None else n_train_queries
    train_qids, dev_qids = qids[:n_train], qids[n_train:]
    all_docs = list(collection)

    def hard_negatives(qid: str) -> tuple[list[str], list[str]]:
        pos = relevant[qid]
        same_entity = [d for d in by_entity[doc_entity[pos]] if d != pos]
        same_topic = [d for d in by_topic[doc_topic[pos]] if doc_entity[d] != doc_entity[pos]]
        return same_entity, same_topic

    triples = []
    for qid in train_qids:
        pos = relevant[qid]
        same_entity, same_topic = hard_negatives(qid)
        pools = [same_entity, same_topic, [d for d in all_docs if d != pos]]
        for k in range(triples_per_query):
            pool = [d for d in pools[k % len(pools)] if d != pos] or pools[2]
            triples.append((qid, pos, pool[int(rng.integers(len(pool)))]))

    candidates = {}
    for qid in dev_qids:
        pos = relevant[qid]
        same_entity, same_topic = hard_negatives(qid)
        chosen = [pos] + same_entity
        extra = [d for d in rng.permutation(same_topic) if d not in chosen][:max(0, n_candidates // 4)]
        chosen += list(extra)
        rest = [d for d in rng.permutation(all_docs) if d not in chosen]
        chosen += rest[:n_candidates - len(chosen)]
        candidates[qid] = [chosen[i] for i in rng.permutation(len(chosen))]

    return ToyCorpus(collection, queries, train_qids, dev_qids, triples, qrels, candidates,
                     doc_topic, doc_entity)
