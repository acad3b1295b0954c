"""Tokenisation, vocabularies with per-document OOV extension, and loaders
for MS-MARCO-style TSV files and TREC qrels/run files."""
from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import ContractError, DataError

PAD, UNK, SOS, EOS = 0, 1, 2, 3
SPECIALS = ("<pad>", "<unk>", "<sos>", "<eos>")

MAX_DOC_LEN = 200
MAX_QUERY_LEN = 30  # including EOS

VOCAB_MAGIC = "#genrank-vocab"
VOCAB_VERSION = 1

_PUNCT = string.punctuation


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip surrounding ASCII punctuation."""
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_PUNCT)
        if tok:
            out.append(tok)
    return out


@dataclass(frozen=True)
class Vocabulary:
    terms: tuple[str, ...]
    counts: tuple[int, ...] = ()
    min_frequency: int = 1
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.terms[:4]) != SPECIALS:
            raise ContractError("vocabulary must start with the four special tokens")
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.terms)})
        if len(self.index) != len(self.terms):
            raise ContractError("duplicate term in vocabulary")

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self.index

    def id(self, term: str) -> int:
        return self.index.get(term, UNK)

    def term(self, idx: int) -> str:
        return self.terms[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.index.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.terms[i] for i in ids]

    # -- persistence ---------------------------------------------------
    def dumps(self) -> str:
        lines = [f"{VOCAB_MAGIC} v{VOCAB_VERSION} min_frequency={self.min_frequency}"]
        counts = self.counts or (0,) * len(self.terms)
        for i, (t, c) in enumerate(zip(self.terms, counts)):
            lines.append(f"{i}\t{t}\t{c}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str, source: str = "<string>") -> "Vocabulary":
        lines = text.splitlines()
        if not lines or not lines[0].startswith(VOCAB_MAGIC):
            raise DataError(f"{source}:1: missing vocabulary header")
        header = lines[0].split()
        if header[1] != f"v{VOCAB_VERSION}":
            raise DataError(f"{source}:1: unsupported vocabulary version {header[1]}")
        min_freq = int(header[2].split("=")[1])
        terms, counts = [], []
        for n, line in enumerate(lines[1:], start=2):
            parts = line.split("\t")
            if len(parts) != 3 or int(parts[0]) != len(terms):
                raise DataError(f"{source}:{n}: malformed vocabulary line")
            terms.append(parts[1])
            counts.append(int(parts[2]))
        return cls(tuple(terms), tuple(counts), min_freq)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls.loads(Path(path).read_text(encoding="utf-8"), str(path))


def build_vocab(corpus: Iterable, min_frequency: int = 5) -> Vocabulary:
    """Build from a stream of texts (str) or token lists.

    Ids are assigned by frequency descending, then lexicographically.
    """
    if min_frequency < 1:
        raise ContractError(f"min_frequency must be >= 1, got {min_frequency}")
    counts: Counter = Counter()
    for item in corpus:
        counts.update(tokenize(item) if isinstance(item, str) else item)
    for s in SPECIALS:
        counts.pop(s, None)
    kept = sorted((t for t, c in counts.items() if c >= min_frequency), key=lambda t: (-counts[t], t))
    return Vocabulary(SPECIALS + tuple(kept), (0,) * 4 + tuple(counts[t] for t in kept), min_frequency)


@dataclass(frozen=True)
class ExtendedVocabulary:
    """A base vocabulary plus one document's OOV terms at ids >= len(base)."""
    base: Vocabulary
    doc_oov: dict[str, int]

    def __len__(self) -> int:
        return len(self.base) + len(self.doc_oov)

    def id(self, term: str) -> int:
        if term in self.base.index:
            return self.base.index[term]
        return self.doc_oov.get(term, UNK)

    def term(self, idx: int) -> str:
        if idx < len(self.base):
            return self.base.terms[idx]
        for t, i in self.doc_oov.items():
            if i == idx:
                return t
        raise IndexError(f"extended id {idx} not in this document's vocabulary")

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.term(i) for i in ids]


def encode_with_extension(tokens: list[str], vocab: Vocabulary
                          ) -> tuple[list[int], list[int], ExtendedVocabulary]:
    base_ids, ext_ids = [], []
    oov: dict[str, int] = {}
    for tok in tokens:
        idx = vocab.index.get(tok)
        if idx is None:
            if tok not in oov:
                oov[tok] = len(vocab) + len(oov)
            base_ids.append(UNK)
            ext_ids.append(oov[tok])
        else:
            base_ids.append(idx)
            ext_ids.append(idx)
    return base_ids, ext_ids, ExtendedVocabulary(vocab, oov)


@dataclass(frozen=True)
class EncodedDoc:
    tokens: tuple[str, ...]
    base_ids: tuple[int, ...]
    ext_ids: tuple[int, ...]
    ext_vocab: ExtendedVocabulary

    def __len__(self) -> int:
        return len(self.base_ids)


def encode_doc(text_or_tokens, vocab: Vocabulary, max_len: int = MAX_DOC_LEN) -> EncodedDoc:
    tokens = tokenize(text_or_tokens) if isinstance(text_or_tokens, str) else list(text_or_tokens)
    tokens = tokens[:max_len]
    base, ext, ev = encode_with_extension(tokens, vocab)
    return EncodedDoc(tuple(tokens), tuple(base), tuple(ext), ev)


def encode_query(text_or_tokens, vocab: Vocabulary, max_len: int = MAX_QUERY_LEN
                 ) -> tuple[list[str], list[int]]:
    """Query tokens (truncated) and base ids terminated by EOS."""
    tokens = tokenize(text_or_tokens) if isinstance(text_or_tokens, str) else list(text_or_tokens)
    tokens = tokens[:max_len - 1]
    return tokens, vocab.encode(tokens) + [EOS]


@dataclass(frozen=True)
class TrainingTriple:
    query: tuple[int, ...]
    doc_pos: tuple[int, ...]
    doc_neg: tuple[int, ...]

    def __post_init__(self):
        if not (self.query and self.doc_pos and self.doc_neg):
            raise ContractError("triple sequences must be non-empty")
        if self.query[-1] != EOS:
            raise ContractError("encoded query must end with EOS")


# ---------------------------------------------------------------------------
# File loaders
# ---------------------------------------------------------------------------

CandidateRun = dict  # query id -> list[(doc id, score)]
Qrels = dict  # query id -> {doc id: grade}


def _lines(path) -> Iterator[tuple[int, str]]:
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if line.strip():
                yield n, line


def _tsv_pairs(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for n, line in _lines(path):
        parts = line.split("\t", 1)
        if len(parts) != 2 or not parts[0]:
            raise DataError(f"{path}:{n}: expected 'id<TAB>text'")
        if parts[0] in out:
            raise DataError(f"{path}:{n}: duplicate id {parts[0]!r}")
        out[parts[0]] = parts[1]
    return out


def load_collection(path) -> dict[str, str]:
    return _tsv_pairs(path)


def load_queries(path) -> dict[str, str]:
    return _tsv_pairs(path)


def load_triples(path) -> list[tuple[str, str, str]]:
    out = []
    for n, line in _lines(path):
        parts = line.split("\t")
        if len(parts) != 3 or not all(parts):
            raise DataError(f"{path}:{n}: expected 'query_id<TAB>pos_doc_id<TAB>neg_doc_id'")
        out.append((parts[0], parts[1], parts[2]))
    return out


def load_qrels(path) -> Qrels:
    out: Qrels = {}
    for n, line in _lines(path):
        parts = line.split()
        if len(parts) != 4:
            raise DataError(f"{path}:{n}: expected 'query_id 0 doc_id grade'")
        try:
            grade = int(parts[3])
        except ValueError:
            raise DataError(f"{path}:{n}: non-integer grade {parts[3]!r}") from None
        if grade < 0:
            raise DataError(f"{path}:{n}: negative grade {grade}")
        out.setdefault(parts[0], {})[parts[2]] = grade
    return out


def load_run(path) -> CandidateRun:
    """Read a TREC 6-column run; per query the lines are ordered by rank."""
    rows: dict[str, list[tuple[int, str, float]]] = {}
    for n, line in _lines(path):
        parts = line.split()
        if len(parts) != 6:
            raise DataError(f"{path}:{n}: expected 'query_id Q0 doc_id rank score tag'")
        try:
            rank, score = int(parts[3]), float(parts[4])
        except ValueError:
            raise DataError(f"{path}:{n}: bad rank or score") from None
        entries = rows.setdefault(parts[0], [])
        if any(d == parts[2] for _, d, _ in entries):
            raise DataError(f"{path}:{n}: duplicate doc {parts[2]!r} for query {parts[0]!r}")
        entries.append((rank, parts[2], score))
    return {q: [(d, s) for _, d, s in sorted(v, key=lambda r: r[0])] for q, v in rows.items()}


def format_run_lines(query_id: str, ranked: Iterable[tuple[str, float]], tag: str) -> list[str]:
    return [f"{query_id} Q0 {doc} {rank} {score:.10g} {tag}"
            for rank, (doc, score) in enumerate(ranked, start=1)]


def write_run(path, run: dict[str, list[tuple[str, float]]], tag: str) -> None:
    lines = []
    for qid in sorted(run):
        lines.extend(format_run_lines(qid, run[qid], tag))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def write_tsv_pairs(path, pairs: dict[str, str]) -> None:
    Path(path).write_text("".join(f"{k}\t{v}\n" for k, v in pairs.items()), encoding="utf-8")


def write_qrels(path, qrels: Qrels) -> None:
    lines = [f"{q} 0 {d} {g}" for q in qrels for d, g in qrels[q].items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
