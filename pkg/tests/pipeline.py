"""Drive the command-line pipeline over a toy corpus directory."""
from __future__ import annotations

import hashlib
from pathlib import Path

from genrank.cli import main
from genrank.config import ExperimentConfig

FAST = {"embedding_dim": 8, "hidden_dim": 8, "n_transformer_layers": 1, "feedforward_dim": 16,
        "epochs": 2, "cutoff_folds": 2, "cutoff_trials": 1, "cutoff_epochs": 1}


def write_config(path: Path, corpus: dict[str, Path], out: Path, **settings) -> Path:
    values = {"collection": corpus["collection"], "queries": corpus["queries"],
              "triples": corpus["triples"], "out": out, **settings}
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()), encoding="utf-8")
    return path


def stages(corpus: dict[str, Path], cfg: ExperimentConfig) -> list[tuple[str, list[str]]]:
    dev = ["--queries", str(corpus["dev_queries"])]
    ql = cfg.subdir("runs") / "ql.run"
    return [
        ("build-vocab", []),
        ("train", []),
        ("rerank", dev + ["--candidates", str(corpus["candidates"])]),
        ("eval", ["--qrels", str(corpus["qrels"]), "--baseline-run", str(ql)]),
        ("uncertainty", dev),
        ("cutoff", dev + ["--qrels", str(corpus["qrels"])]),
        ("generate", ["--generate-limit", "5"]),
    ]


def run_pipeline(config_path: Path, corpus: dict[str, Path], cfg: ExperimentConfig,
                 upto: str | None = None) -> dict[str, int]:
    codes = {}
    for name, extra in stages(corpus, cfg):
        codes[name] = main([name, "--config", str(config_path), *extra])
        if codes[name] != 0 or name == upto:
            break
    return codes


def tree_digest(root: Path) -> dict[str, str]:
    """Relative path -> sha256 for every file below ``root``."""
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}
