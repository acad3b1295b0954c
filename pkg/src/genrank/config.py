"""Experiment configuration: a flat ``key = value`` file with flag overrides.

Precedence is command-line flag, then file, then the dataclass default.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError, ContractError
from .models import ARCHITECTURES, ModelConfig
from .training import LOSS_NAMES, LossKind, default_learning_rate


@dataclass(frozen=True)
class ExperimentConfig:
    # inputs
    collection: str = ""
    queries: str = ""
    triples: str = ""
    qrels: str = ""
    candidates: str = ""  # first-stage run to re-rank; BM25 when unset
    run: str = ""  # run to evaluate or analyse; defaults to this experiment's re-ranked run
    baseline_run: str = ""
    vocab: str = ""
    checkpoint: str = ""
    out: str = "out"
    # text
    min_frequency: int = 5
    # model
    architecture: str = "t_pgn"
    embedding_dim: int = 32
    hidden_dim: int = 32
    n_transformer_layers: int = 2
    n_heads: int = 2
    feedforward_dim: int = 512
    dropout: float = 0.0
    # training
    loss: str = "nll"
    margin: float = 1.0
    epochs: int = 10
    lr: float = 0.0  # 0 selects the per-architecture default
    batch_size: int = 32
    clip_norm: float = 2.0
    # retrieval and evaluation
    candidates_k: int = 200
    mu: float = 1000.0
    mrr_cutoff: int = 10
    recall_depth: int = 0  # 0 means the whole ranked list
    nucleus_p: float = 0.95
    cutoff_folds: int = 5
    cutoff_trials: int = 50
    cutoff_epochs: int = 15
    max_query_len: int = 30
    generate_limit: int = 0  # 0 generates for every document
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if self.loss not in LOSS_NAMES:
            raise ConfigError(f"loss must be one of {LOSS_NAMES}, got {self.loss!r}")
        positive = ("min_frequency", "epochs", "batch_size", "candidates_k", "mrr_cutoff",
                    "cutoff_folds", "cutoff_trials", "cutoff_epochs", "max_query_len")
        for key in positive:
            low = 0 if key == "epochs" else 1
            if getattr(self, key) < low:
                raise ConfigError(f"{key} must be >= {low}, got {getattr(self, key)}")
        for key in ("recall_depth", "generate_limit", "lr", "dropout"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be >= 0, got {getattr(self, key)}")
        if not 0 < self.nucleus_p <= 1:
            raise ConfigError(f"nucleus_p must lie in (0, 1], got {self.nucleus_p}")
        if self.mu <= 0 or self.margin <= 0 or self.clip_norm <= 0:
            raise ConfigError("mu, margin and clip_norm must be > 0")
        try:
            self.model_config(vocab_size=8)
        except ContractError as exc:
            raise ConfigError(str(exc)) from exc

    # -- derived ------------------------------------------------------------
    @property
    def tag(self) -> str:
        return f"{self.architecture}-{self.loss}"

    @property
    def experiment_dir(self) -> Path:
        return Path(self.out) / self.tag

    def subdir(self, name: str) -> Path:
        if name not in ("checkpoints", "runs", "reports", "csv"):
            raise ConfigError(f"unknown experiment subdirectory {name!r}")
        return self.experiment_dir / name

    @property
    def vocab_path(self) -> Path:
        return Path(self.vocab) if self.vocab else Path(self.out) / "vocab.txt"

    @property
    def checkpoint_path(self) -> Path:
        return Path(self.checkpoint) if self.checkpoint else self.subdir("checkpoints") / "final.ckpt"

    @property
    def rerank_run_path(self) -> Path:
        return self.subdir("runs") / "rerank.run"

    @property
    def analysed_run_path(self) -> Path:
        return Path(self.run) if self.run else self.rerank_run_path

    @property
    def loss_kind(self) -> LossKind:
        return LossKind(self.loss, self.margin)

    @property
    def learning_rate(self) -> float:
        return self.lr if self.lr > 0 else default_learning_rate(self.architecture)

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(self.architecture, vocab_size, self.embedding_dim, self.hidden_dim,
                           self.n_transformer_layers, self.n_heads, self.feedforward_dim,
                           self.seed, self.dropout)

    def require(self, *keys: str) -> None:
        """Each named path must be set and exist."""
        for key in keys:
            value = getattr(self, key)
            if not value:
                raise ConfigError(f"missing required setting '{key}'")
            if not Path(value).exists():
                raise ConfigError(f"{key}: no such file {value}")

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, value: Any) -> Any:
    kind = _TYPES[key]
    if not isinstance(value, str):
        return value
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind}, got {value!r}") from None
    return value


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    """``key = value`` per line; ``#`` starts a comment."""
    out: dict[str, Any] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{source}:{n}: unknown setting '{key}'")
        out[key] = _coerce(key, value)
    return out


def load_config(path=None, overrides: Mapping[str, Any] | None = None) -> ExperimentConfig:
    values: dict[str, Any] = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(parse_config_text(p.read_text(encoding="utf-8"), str(p)))
    for key, value in (overrides or {}).items():
        if key not in _TYPES:
            raise ConfigError(f"unknown setting '{key}'")
        if value is not None:
            values[key] = _coerce(key, value)
    return ExperimentConfig(**values)
