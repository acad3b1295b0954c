"""Encoder-decoder query generators used as rankers.

Four architectures share one interface: encode a document, then produce at
every query position a probability distribution over the base vocabulary
extended with the document's OOV terms.

* ``seq2seq_attention`` -- LSTM encoder, LSTM decoder with attention.
* ``pgn`` -- the same plus a pointer-generator copy mixture.
* ``transf2transf`` -- transformer encoder and causal transformer decoder.
* ``t_pgn`` -- transformer encoder feeding an encoder LSTM whose final state
  initialises a pointer-generator LSTM decoder; attention runs over the
  transformer outputs.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DimensionError, EmptySequenceError
from .nn import (Embedding, Linear, LSTMCell, LSTMEncoder, Module, TransformerDecoderLayer,
                 TransformerEncoderLayer, sinusoidal_positions)
from .text import EOS, MAX_QUERY_LEN, PAD, SOS, UNK, EncodedDoc, ExtendedVocabulary, tokenize

ARCHITECTURES = ("seq2seq_attention", "pgn", "transf2transf", "t_pgn")
COPY_ARCHITECTURES = frozenset({"pgn", "t_pgn"})
TRANSFORMER_ARCHITECTURES = frozenset({"transf2transf", "t_pgn"})
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    architecture: str
    vocab_size: int
    embedding_dim: int = 32
    hidden_dim: int = 32
    n_transformer_layers: int = 2
    n_heads: int = 2
    feedforward_dim: int = 512
    seed: int = 0
    dropout: float = 0.0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ContractError(f"unknown architecture {self.architecture!r}; choose from {ARCHITECTURES}")
        dims = (self.vocab_size, self.embedding_dim, self.hidden_dim, self.n_transformer_layers,
                self.n_heads, self.feedforward_dim)
        if min(dims) < 1:
            raise ContractError(f"all model dimensions must be >= 1: {self}")
        if self.vocab_size <= EOS:
            raise ContractError("vocab_size must include the four special tokens")
        if self.architecture in TRANSFORMER_ARCHITECTURES and self.embedding_dim % self.n_heads:
            raise ContractError(
                f"embedding_dim {self.embedding_dim} not divisible by n_heads {self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def copies(self) -> bool:
        return self.architecture in COPY_ARCHITECTURES

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


# ---------------------------------------------------------------------------
# Batches
# ---------------------------------------------------------------------------


@dataclass
class Batch:
    """Right-padded documents and (optionally) teacher-forcing query arrays."""
    doc_base: np.ndarray
    doc_ext: np.ndarray
    doc_mask: np.ndarray
    ext_size: int
    ext_vocabs: list[ExtendedVocabulary]
    dec_in: np.ndarray | None = None
    targets: np.ndarray | None = None
    query_mask: np.ndarray | None = None
    _copy: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.doc_base.shape[0]

    @property
    def copy_matrix(self) -> np.ndarray:
        """One-hot ``[B, L, ext_size]`` map from document position to extended id."""
        if self._copy is None:
            b, length = self.doc_ext.shape
            m = np.zeros((b, length, self.ext_size))
            rows, cols = np.nonzero(self.doc_mask)
            m[rows, cols, self.doc_ext[rows, cols]] = 1.0
            self._copy = m
        return self._copy


def query_targets(tokens: Sequence[str], doc: EncodedDoc, copy: bool) -> list[int]:
    """Target ids for scoring: base id, else the document's extended id when
    copying is available, else UNK. EOS is appended."""
    base = doc.ext_vocab.base
    out = []
    for tok in tokens:
        idx = base.index.get(tok)
        if idx is None:
            idx = doc.ext_vocab.doc_oov.get(tok, UNK) if copy else UNK
        out.append(idx)
    return out + [EOS]


def make_batch(docs: Sequence[EncodedDoc], queries: Sequence[Sequence[str]] | None = None,
               copy: bool = False) -> Batch:
    if not docs:
        raise EmptySequenceError("empty batch")
    for d in docs:
        if len(d) == 0:
            raise EmptySequenceError("cannot encode an empty document")
    base_size = len(docs[0].ext_vocab.base)
    b = len(docs)
    length = max(len(d) for d in docs)
    doc_base = np.full((b, length), PAD, dtype=np.int64)
    doc_ext = np.full((b, length), PAD, dtype=np.int64)
    doc_mask = np.zeros((b, length), dtype=bool)
    for i, d in enumerate(docs):
        doc_base[i, :len(d)] = d.base_ids
        doc_ext[i, :len(d)] = d.ext_ids
        doc_mask[i, :len(d)] = True
    ext_size = base_size + max(len(d.ext_vocab.doc_oov) for d in docs)
    batch = Batch(doc_base, doc_ext, doc_mask, ext_size, [d.ext_vocab for d in docs])
    if queries is not None:
        if len(queries) != b:
            raise DimensionError(f"{len(queries)} queries for {b} documents")
        targets = [query_targets(list(q)[:MAX_QUERY_LEN - 1], d, copy) for q, d in zip(queries, docs)]
        t_len = max(len(t) for t in targets)
        batch.targets = np.full((b, t_len), PAD, dtype=np.int64)
        batch.dec_in = np.full((b, t_len), PAD, dtype=np.int64)
        batch.query_mask = np.zeros((b, t_len), dtype=bool)
        for i, (t, d) in enumerate(zip(targets, docs)):
            batch.targets[i, :len(t)] = t
            inputs = [SOS] + [x if x < base_size else UNK for x in t[:-1]]
            batch.dec_in[i, :len(t)] = inputs
            batch.query_mask[i, :len(t)] = True
    return batch


# ---------------------------------------------------------------------------
# Per-example result types
# ---------------------------------------------------------------------------


@dataclass
class EncoderState:
    memory: Tensor  # [B, L, d] attention keys/values
    mask: np.ndarray  # [B, L]
    final_state: tuple[Tensor, Tensor] | None
    batch: Batch

    @property
    def contextual_embeddings(self) -> np.ndarray:
        """``[L, d]`` embeddings of the first (usually only) document."""
        return self.memory.data[0, :int(self.mask[0].sum())]

    @property
    def extended_vocab(self) -> ExtendedVocabulary:
        return self.batch.ext_vocabs[0]


@dataclass
class DecoderStepOutput:
    final_dist: np.ndarray
    attention: np.ndarray
    p_gen: float | None = None


def copy_mixture(p_vocab: Tensor, copy_dist: Tensor, p_gen: Tensor) -> Tensor:
    """p_gen * P_vocab + (1 - p_gen) * attention mass, both over extended ids."""
    return p_gen * p_vocab + (1.0 - p_gen) * copy_dist


def vocab_softmax(logits: Tensor) -> Tensor:
    """Softmax over the base vocabulary; PAD and SOS are never generated."""
    mask = np.zeros(logits.shape[-1], dtype=bool)
    mask[[PAD, SOS]] = True
    return ad.softmax(ad.masked_fill(logits, mask, ad.MASK_VALUE))


def _pad_vocab(p_vocab: Tensor, ext_size: int) -> Tensor:
    extra = ext_size - p_vocab.shape[-1]
    if extra == 0:
        return p_vocab
    return ad.concat([p_vocab, Tensor(np.zeros(p_vocab.shape[:-1] + (extra,)))], axis=-1)


def _attention_to_ids(attn: Tensor, copy_matrix: np.ndarray) -> Tensor:
    if attn.ndim == 2:
        b, length = attn.shape
        return ad.reshape(ad.matmul(ad.reshape(attn, (b, 1, length)), copy_matrix), (b, -1))
    return ad.matmul(attn, copy_matrix)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


class GenerativeRanker(Module):
    def __init__(self, config: ModelConfig):
        self.config = config
        self.training = False
        self._rng = np.random.default_rng(config.seed)
        self._dropout_rng = np.random.default_rng(config.seed + 1)

    @property
    def copies(self) -> bool:
        return self.config.copies

    @property
    def vocab_size(self) -> int:
        return self.config.vocab_size

    def _drop(self):
        return (self.config.dropout, self._dropout_rng) if self.training else (0.0, None)

    # -- subclass hooks ------------------------------------------------
    def encode_batch(self, batch: Batch) -> EncoderState:
        raise NotImplementedError

    def initial_decoder_state(self, enc: EncoderState):
        raise NotImplementedError

    def step(self, prev_ids: np.ndarray, state, enc: EncoderState):
        """One decoding step: returns (final [B,V+], attention [B,L], p_gen [B,1] | None, state)."""
        raise NotImplementedError

    def teacher_forced(self, batch: Batch, enc: EncoderState):
        """All positions at once: (final [B,T,V+], attention [B,T,L], p_gen [B,T,1] | None)."""
        raise NotImplementedError

    # -- shared ----------------------------------------------------------
    def _check_ids(self, ids: np.ndarray) -> None:
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise IndexError(f"decoder input id outside base vocabulary [0, {self.vocab_size})")

    def query_log_probs(self, batch: Batch):
        """Per-query sum of log final-dist probabilities of the targets.

        Returns (total [B] Tensor, per-step log-probs [B,T] Tensor, floored [B,T] bool,
        final distribution Tensor [B,T,V+]).
        """
        enc = self.encode_batch(batch)
        final, _, _ = self.teacher_forced(batch, enc)
        picked = ad.gather_last(final, batch.targets)
        floored = (picked.data < PROB_FLOOR) & batch.query_mask
        step_lp = ad.log(ad.clip(picked, PROB_FLOOR, 1.0)) * batch.query_mask
        return step_lp.sum(axis=1), step_lp, floored, final

    # -- single-example API ---------------------------------------------
    def encode(self, doc: EncodedDoc) -> EncoderState:
        return self.encode_batch(make_batch([doc]))

    def decode_step(self, prev_token_id: int, decoder_state, enc: EncoderState):
        final, attn, p_gen, state = self.step(np.array([prev_token_id]), decoder_state, enc)
        out = DecoderStepOutput(final.data[0].copy(), attn.data[0, :int(enc.mask[0].sum())].copy(),
                                None if p_gen is None else float(p_gen.data[0, 0]))
        return out, state

    def forward_teacher_forced(self, doc: EncodedDoc, query) -> list[DecoderStepOutput]:
        """``query`` is a token list, a text, or a list of ids ending in EOS."""
        if isinstance(query, str):
            query = tokenize(query)
        query = list(query)
        if query and isinstance(query[0], (int, np.integer)):
            if query[-1] != EOS:
                raise ContractError("query ids must end with EOS")
            batch = make_batch([doc])
            tgt = np.array([query], dtype=np.int64)
            batch.targets = tgt
            batch.dec_in = np.array([[SOS] + [x if x < self.vocab_size else UNK for x in query[:-1]]])
            batch.query_mask = np.ones_like(tgt, dtype=bool)
        else:
            batch = make_batch([doc], [query], copy=self.copies)
        with ad.no_grad():
            enc = self.encode_batch(batch)
            final, attn, p_gen = self.teacher_forced(batch, enc)
        length = len(doc)
        return [DecoderStepOutput(final.data[0, t].copy(), attn.data[0, t, :length].copy(),
                                  None if p_gen is None else float(p_gen.data[0, t, 0]))
                for t in range(batch.targets.shape[1])]

    def greedy_generate(self, doc: EncodedDoc, max_len: int = MAX_QUERY_LEN) -> list[str]:
        """Feed back the argmax token (lowest id on ties) until EOS or ``max_len``."""
        if max_len < 1:
            raise ContractError("max_len must be >= 1")
        out: list[str] = []
        with ad.no_grad():
            enc = self.encode(doc)
            state = self.initial_decoder_state(enc)
            prev = SOS
            for _ in range(max_len):
                step, state = self.decode_step(prev, state, enc)
                tok = int(np.argmax(step.final_dist))
                if tok == EOS:
                    break
                out.append(doc.ext_vocab.term(tok))
                prev = tok if tok < self.vocab_size else UNK
        return out


class Seq2SeqAttention(GenerativeRanker):
    def __init__(self, config: ModelConfig):
        super().__init__(config)
        rng = self._rng
        e, h, v = config.embedding_dim, config.hidden_dim, config.vocab_size
        self.embedding = Embedding(rng, v, e)
        self._build_encoder(rng)
        mem = self._memory_dim()
        self.decoder = LSTMCell(rng, e, h)
        self.attention = Linear(rng, h, mem, bias=False)
        self.output = Linear(rng, h + mem, v)
        if self.copies:
            self.pointer = Linear(rng, mem + h + e, 1)

    def _build_encoder(self, rng):
        self.encoder = LSTMEncoder(rng, self.config.embedding_dim, self.config.hidden_dim)

    def _memory_dim(self) -> int:
        return self.config.hidden_dim

    def encode_batch(self, batch: Batch) -> EncoderState:
        x = self.embedding(batch.doc_base)
        states, final = self.encoder(x, batch.doc_mask)
        return EncoderState(states, batch.doc_mask, final, batch)

    def initial_decoder_state(self, enc: EncoderState):
        return enc.final_state

    def _attend(self, h: Tensor, enc: EncoderState):
        return ad.attention(self.attention(h), enc.memory, enc.memory, enc.mask)

    def _distribution(self, h: Tensor, ctx: Tensor, x: Tensor, attn: Tensor, enc: EncoderState):
        p_vocab = _pad_vocab(vocab_softmax(self.output(ad.concat([h, ctx], axis=-1))), enc.batch.ext_size)
        if not self.copies:
            return p_vocab, None
        p_gen = ad.sigmoid(self.pointer(ad.concat([ctx, h, x], axis=-1)))
        copy_dist = _attention_to_ids(attn, enc.batch.copy_matrix)
        return copy_mixture(p_vocab, copy_dist, p_gen), p_gen

    def step(self, prev_ids, state, enc):
        prev_ids = np.asarray(prev_ids, dtype=np.int64)
        self._check_ids(prev_ids)
        h, c = state
        x = self.embedding(prev_ids)
        h, c = self.decoder(x, h, c)
        ctx, attn = self._attend(h, enc)
        final, p_gen = self._distribution(h, ctx, x, attn, enc)
        return final, attn, p_gen, (h, c)

    def teacher_forced(self, batch, enc):
        self._check_ids(batch.dec_in)
        emb = self.embedding(batch.dec_in)
        h, c = enc.final_state
        hs, ctxs, attns = [], [], []
        for t in range(batch.dec_in.shape[1]):
            h, c = self.decoder(emb[:, t, :], h, c)
            ctx, attn = self._attend(h, enc)
            hs.append(h)
            ctxs.append(ctx)
            attns.append(attn)
        hs, ctxs, attns = ad.stack(hs, 1), ad.stack(ctxs, 1), ad.stack(attns, 1)
        final, p_gen = self._distribution(hs, ctxs, emb, attns, enc)
        return final, attns, p_gen


class PointerGenerator(Seq2SeqAttention):
    pass


class TransformerPointerGenerator(Seq2SeqAttention):
    def _build_encoder(self, rng):
        cfg = self.config
        self.transformer = [TransformerEncoderLayer(rng, cfg.embedding_dim, cfg.n_heads, cfg.feedforward_dim)
                            for _ in range(cfg.n_transformer_layers)]
        self.encoder = LSTMEncoder(rng, cfg.embedding_dim, cfg.hidden_dim)

    def _memory_dim(self) -> int:
        return self.config.embedding_dim

    def encode_batch(self, batch: Batch) -> EncoderState:
        length = batch.doc_base.shape[1]
        x = self.embedding(batch.doc_base) + sinusoidal_positions(length, self.config.embedding_dim)
        key_mask = batch.doc_mask[:, None, None, :]
        rate, rng = self._drop()
        for layer in self.transformer:
            x = layer(x, key_mask, rate, rng)
        _, final = self.encoder(x, batch.doc_mask)
        return EncoderState(x, batch.doc_mask, final, batch)


class Transf2Transf(GenerativeRanker):
    def __init__(self, config: ModelConfig):
        super().__init__(config)
        rng = self._rng
        e, v = config.embedding_dim, config.vocab_size
        self.embedding = Embedding(rng, v, e)
        self.encoder_layers = [TransformerEncoderLayer(rng, e, config.n_heads, config.feedforward_dim)
                               for _ in range(config.n_transformer_layers)]
        self.decoder_layers = [TransformerDecoderLayer(rng, e, config.n_heads, config.feedforward_dim)
                               for _ in range(config.n_transformer_layers)]
        self.output = Linear(rng, e, v)

    def encode_batch(self, batch: Batch) -> EncoderState:
        length = batch.doc_base.shape[1]
        x = self.embedding(batch.doc_base) + sinusoidal_positions(length, self.config.embedding_dim)
        key_mask = batch.doc_mask[:, None, None, :]
        rate, rng = self._drop()
        for layer in self.encoder_layers:
            x = layer(x, key_mask, rate, rng)
        return EncoderState(x, batch.doc_mask, None, batch)

    def initial_decoder_state(self, enc: EncoderState):
        return np.zeros((enc.mask.shape[0], 0), dtype=np.int64)

    def _decode(self, dec_in: np.ndarray, enc: EncoderState):
        self._check_ids(dec_in)
        t_len = dec_in.shape[1]
        x = self.embedding(dec_in) + sinusoidal_positions(t_len, self.config.embedding_dim)
        causal = np.tril(np.ones((t_len, t_len), dtype=bool))[None, None]
        memory_mask = enc.mask[:, None, None, :]
        rate, rng = self._drop()
        cross = None
        for layer in self.decoder_layers:
            x, cross = layer(x, enc.memory, causal, memory_mask, rate, rng)
        p_vocab = _pad_vocab(vocab_softmax(self.output(x)), enc.batch.ext_size)
        return p_vocab, cross.mean(axis=1)

    def teacher_forced(self, batch, enc):
        final, attn = self._decode(batch.dec_in, enc)
        return final, attn, None

    def step(self, prev_ids, state, enc):
        prev_ids = np.asarray(prev_ids, dtype=np.int64)
        self._check_ids(prev_ids)
        inputs = np.concatenate([state, prev_ids[:, None]], axis=1)
        final, attn = self._decode(inputs, enc)
        return final[:, -1, :], attn[:, -1, :], None, inputs


_CLASSES = {
    "seq2seq_attention": Seq2SeqAttention,
    "pgn": PointerGenerator,
    "transf2transf": Transf2Transf,
    "t_pgn": TransformerPointerGenerator,
}


def build_model(config: ModelConfig) -> GenerativeRanker:
    return _CLASSES[config.architecture](config)
