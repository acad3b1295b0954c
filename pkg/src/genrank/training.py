"""Pairwise ranking losses and the training loop."""
from __future__ import annotations

import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import ModelCheckpoint, atomic_write_text
from .errors import ContractError, NumericError
from .models import GenerativeRanker, TRANSFORMER_ARCHITECTURES, make_batch
from .scoring import score_pairs
from .text import EncodedDoc, Vocabulary

log = logging.getLogger(__name__)

LOSS_NAMES = ("nll", "marg", "nl3u")


@dataclass(frozen=True)
class LossKind:
    name: str
    margin: float = 1.0

    def __post_init__(self):
        if self.name not in LOSS_NAMES:
            raise ContractError(f"unknown loss {self.name!r}; choose from {LOSS_NAMES}")
        if self.name == "marg" and not self.margin > 0:
            raise ContractError(f"margin must be > 0, got {self.margin}")

    @property
    def uses_negative(self) -> bool:
        return self.name != "nll"


def _check_log_prob(x: Tensor, what: str) -> None:
    if np.any(x.data > 0):
        raise ContractError(f"{what} must be a log-probability (<= 0), got max {x.data.max():.3g}")


def nll_loss(logp_pos) -> Tensor:
    """Mean of -log P(Q|D+) over the batch."""
    logp_pos = ad.as_tensor(logp_pos)
    _check_log_prob(logp_pos, "logP_pos")
    return ad.mean(-logp_pos)


def margin_loss(logp_pos, logp_neg, b: float = 1.0) -> Tensor:
    if not b > 0:
        raise ContractError(f"margin must be > 0, got {b}")
    logp_pos, logp_neg = ad.as_tensor(logp_pos), ad.as_tensor(logp_neg)
    return ad.mean(ad.relu(b - logp_pos + logp_neg))


def nl3u_loss(logp_pos, logp_neg) -> Tensor:
    """-log P(Q|D+) - log(1 - P(Q|D-)), averaged over the batch."""
    logp_pos, logp_neg = ad.as_tensor(logp_pos), ad.as_tensor(logp_neg)
    _check_log_prob(logp_pos, "logP_pos")
    _check_log_prob(logp_neg, "logP_neg")
    return ad.mean(-logp_pos - ad.log1mexp(logp_neg))


def log1mexp(x: float) -> float:
    """Scalar log(1 - e^x) for x < 0."""
    return float(ad.log1mexp(ad.Tensor(x)).data)


def compute_loss(kind: LossKind, logp_pos: Tensor, logp_neg: Tensor | None) -> Tensor:
    if kind.name == "nll":
        return nll_loss(logp_pos)
    if kind.name == "marg":
        return margin_loss(logp_pos, logp_neg, kind.margin)
    return nl3u_loss(logp_pos, logp_neg)


def default_learning_rate(architecture: str) -> float:
    return 1e-4 if architecture in TRANSFORMER_ARCHITECTURES else 1e-3


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TextTriple:
    """A query as tokens with its encoded relevant and non-relevant documents."""
    query: tuple[str, ...]
    pos: EncodedDoc
    neg: EncodedDoc


@dataclass
class TrainReport:
    epoch_loss: list[float] = field(default_factory=list)
    epoch_accuracy: list[float] = field(default_factory=list)
    wall_time: float = field(default=0.0, compare=False)

    @property
    def accuracy(self) -> float:
        return self.epoch_accuracy[-1] if self.epoch_accuracy else float("nan")


def pairwise_accuracy(model: GenerativeRanker, triples: Sequence[TextTriple],
                      batch_size: int = 64) -> float:
    queries = [t.query for t in triples]
    pos = score_pairs(model, queries, [t.pos for t in triples], batch_size)
    neg = score_pairs(model, queries, [t.neg for t in triples], batch_size)
    return float(np.mean(pos > neg))


def train(model: GenerativeRanker, triples: Sequence[TextTriple], loss: LossKind,
          epochs: int = 10, lr: float | None = None, seed: int = 0, *, batch_size: int = 32,
          clip_norm: float = 2.0, checkpoint_dir=None, log_path=None,
          vocab: Vocabulary | None = None, stream: TextIO | None = None,
          target_accuracy: float | None = None) -> tuple[ModelCheckpoint, TrainReport]:
    """Optimise ``model`` in place with Adam; returns the final checkpoint and report.

    NLL only reads the relevant document of every triple. Each epoch writes
    one log line ``epoch<TAB>mean_loss<TAB>pairwise_acc``. With
    ``target_accuracy`` set, training stops after the first epoch reaching it.
    """
    if not triples:
        raise ContractError("training needs at least one triple")
    if epochs < 0:
        raise ContractError("epochs must be >= 0")
    lr = default_learning_rate(model.config.architecture) if lr is None else lr
    stream = sys.stdout if stream is None else stream
    rng = np.random.default_rng(seed)
    params = model.parameters()
    opt = ad.Adam(params, lr=lr)
    report = TrainReport()
    log_lines: list[str] = []
    start = time.perf_counter()
    meta = {"loss": loss.name, "margin": loss.margin, "seed": seed, "lr": lr, "epoch": 0}
    n = len(triples)

    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        model.training = True
        total, count = 0.0, 0
        for bi, lo in enumerate(range(0, n, batch_size)):
            chunk = [triples[i] for i in order[lo:lo + batch_size]]
            queries = [t.query for t in chunk]
            docs = [t.pos for t in chunk]
            if loss.uses_negative:
                queries = queries + queries
                docs = docs + [t.neg for t in chunk]
            batch = make_batch(docs, queries, copy=model.copies)
            logp, _, _, _ = model.query_log_probs(batch)
            k = len(chunk)
            pos = logp[:k]
            neg = logp[k:] if loss.uses_negative else None
            value = compute_loss(loss, pos, neg)
            if not math.isfinite(value.item()):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch index {bi}")
            opt.zero_grad()
            ad.backward(value)
            ad.clip_grad_norm(params, clip_norm)
            opt.step()
            if not all(np.isfinite(p.data).all() for p in params):
                raise NumericError(f"non-finite parameters after epoch {epoch}, batch index {bi}")
            total += value.item() * k
            count += k
        model.training = False
        mean_loss = total / count
        acc = pairwise_accuracy(model, triples)
        report.epoch_loss.append(mean_loss)
        report.epoch_accuracy.append(acc)
        line = f"{epoch}\t{mean_loss:.6f}\t{acc:.4f}"
        log_lines.append(line)
        print(line, file=stream, flush=True)
        meta["epoch"] = epoch
        if checkpoint_dir is not None:
            ModelCheckpoint.from_model(model, meta, vocab).save(
                Path(checkpoint_dir) / f"epoch_{epoch:03d}.ckpt")
        if log_path is not None:
            atomic_write_text(log_path, "\n".join(log_lines) + "\n")
        if target_accuracy is not None and acc >= target_accuracy:
            break

    report.wall_time = time.perf_counter() - start
    return ModelCheckpoint.from_model(model, meta, vocab), report
