"""Command-line pipeline: build-vocab, train, rerank, eval, uncertainty, cutoff, generate.

Every command validates its settings before writing anything, writes outputs
atomically under ``<out>/<arch>-<loss>/{checkpoints,runs,reports,csv}``, and
exits 0 on success, 1 on usage/config errors, 2 on data errors, 3 on numeric
failures.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .checkpoint import ModelCheckpoint, atomic_write_text
from .config import ExperimentConfig, load_config
from .cutoff import evaluate, instances_from_ranked_lists
from .errors import (ConfigError, ContractError, DataError, NumericError, SingularityError,
                     UndefinedCorrelationError)
from .metrics import MetricReport, evaluate_run, paired_t_test
from .models import build_model
from .scoring import (BM25Index, CollectionLM, DocumentCache, bm25_topk, ql_rerank, rerank)
from .text import (Vocabulary, build_vocab, format_run_lines, load_collection, load_qrels,
                   load_queries, load_run, load_triples, tokenize)
from .training import TextTriple, train
from .uncertainty import (AGGREGATE_NAMES, eos_is_lowest, position_csv, position_stats,
                          relevance_csv, spearman_test)

log = logging.getLogger("genrank")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


def _run_text(run: dict[str, list[tuple[str, float]]], tag: str) -> str:
    lines = []
    for qid in sorted(run):
        lines.extend(format_run_lines(qid, run[qid], tag))
    return "".join(line + "\n" for line in lines)


def _load_model(cfg: ExperimentConfig):
    path = cfg.checkpoint_path
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path} (run 'train' first or set checkpoint)")
    ckpt = ModelCheckpoint.load(path)
    vocab = ckpt.vocab
    if vocab is None:
        if not cfg.vocab_path.is_file():
            raise ConfigError(f"checkpoint has no vocabulary and {cfg.vocab_path} is missing")
        vocab = Vocabulary.load(cfg.vocab_path)
    return ckpt.build_model(), vocab


def _analysed_run(cfg: ExperimentConfig) -> dict[str, list[tuple[str, float]]]:
    path = cfg.analysed_run_path
    if not path.is_file():
        raise ConfigError(f"run file not found: {path} (run 'rerank' first or set run)")
    return load_run(path)


def _ranked_lists(cfg, model, vocab, queries, run, qrels=None):
    cache = DocumentCache(load_collection(cfg.collection), vocab)
    out = []
    for qid in sorted(run):
        if qid not in queries:
            log.warning("query %s in run but not in %s; skipped", qid, cfg.queries)
            continue
        grades = None if qrels is None else qrels.get(qid, {})
        out.append(rerank(model, qid, queries[qid], run[qid], cache, grades, cfg.nucleus_p))
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_build_vocab(cfg: ExperimentConfig) -> Path:
    cfg.require("collection")
    texts = list(load_collection(cfg.collection).values())
    if cfg.queries:
        cfg.require("queries")
        texts += list(load_queries(cfg.queries).values())
    if not any(tokenize(t) for t in texts):
        log.warning("empty corpus: vocabulary holds only the special tokens")
    vocab = build_vocab(texts, cfg.min_frequency)
    atomic_write_text(cfg.vocab_path, vocab.dumps())
    print(f"vocabulary: {len(vocab)} terms (min_frequency={cfg.min_frequency}) -> {cfg.vocab_path}")
    return cfg.vocab_path


def cmd_train(cfg: ExperimentConfig) -> Path:
    cfg.require("collection", "queries", "triples")
    if not cfg.vocab_path.is_file():
        raise ConfigError(f"vocabulary not found: {cfg.vocab_path} (run 'build-vocab' first)")
    vocab = Vocabulary.load(cfg.vocab_path)
    collection = load_collection(cfg.collection)
    queries = load_queries(cfg.queries)
    cache = DocumentCache(collection, vocab)
    triples = []
    for qid, pos, neg in load_triples(cfg.triples):
        if qid not in queries:
            raise DataError(f"{cfg.triples}: query {qid!r} not found in {cfg.queries}")
        triples.append(TextTriple(tuple(tokenize(queries[qid])), cache[pos], cache[neg]))
    model = build_model(cfg.model_config(len(vocab)))
    ckpt, report = train(model, triples, cfg.loss_kind, cfg.epochs, cfg.learning_rate, cfg.seed,
                         batch_size=cfg.batch_size, clip_norm=cfg.clip_norm,
                         checkpoint_dir=cfg.subdir("checkpoints"),
                         log_path=cfg.subdir("reports") / "train.log", vocab=vocab)
    ckpt.save(cfg.checkpoint_path)
    print(f"trained {cfg.tag}: {len(triples)} triples, {cfg.epochs} epochs, "
          f"final accuracy {report.accuracy:.4f} -> {cfg.checkpoint_path}")
    return cfg.checkpoint_path


def cmd_rerank(cfg: ExperimentConfig) -> Path:
    cfg.require("collection", "queries")
    if cfg.candidates:
        cfg.require("candidates")
    model, vocab = _load_model(cfg)
    collection = load_collection(cfg.collection)
    queries = load_queries(cfg.queries)
    runs_dir = cfg.subdir("runs")
    if cfg.candidates:
        candidates = load_run(cfg.candidates)
    else:
        index = BM25Index.from_texts(collection)
        candidates = {q: bm25_topk(text, index, cfg.candidates_k) for q, text in queries.items()}
        candidates = {q: c for q, c in candidates.items() if c}
        atomic_write_text(runs_dir / "bm25.run", _run_text(candidates, "bm25"))
    cache = DocumentCache(collection, vocab)
    lm = CollectionLM.from_texts(collection, cfg.mu)
    reranked, ql = {}, {}
    for qid in sorted(candidates):
        if qid not in queries:
            log.warning("query %s has candidates but no text; skipped", qid)
            continue
        cands = candidates[qid][:cfg.candidates_k]
        reranked[qid] = rerank(model, qid, queries[qid], cands, cache, nucleus_p=None,
                               keep_profiles=False).pairs()
        ql[qid] = ql_rerank(qid, queries[qid], cands, lm).pairs()
    missing = sorted(set(queries) - set(reranked))
    if missing:
        log.warning("%d queries without candidates", len(missing))
    atomic_write_text(runs_dir / "ql.run", _run_text(ql, f"ql-mu{cfg.mu:g}"))
    atomic_write_text(cfg.rerank_run_path, _run_text(reranked, cfg.tag))
    print(f"re-ranked {len(reranked)} queries -> {cfg.rerank_run_path}")
    return cfg.rerank_run_path


def _ttest_tsv(report: MetricReport, baseline: MetricReport) -> str:
    lines = ["metric\tmean_run\tmean_baseline\tt\tp\tn_queries"]
    for m in MetricReport.METRICS:
        common = sorted(q for q in report.per_query
                        if m in report.per_query[q] and m in baseline.per_query.get(q, {}))
        a, b = report.values(m, common), baseline.values(m, common)
        try:
            t, p = paired_t_test(a, b)
            stat = f"{t:.6f}\t{p:.6g}"
        except ContractError:  # degenerate differences or fewer than two queries
            stat = "nan\tnan"
        mean_a = float(np.mean(a)) if a else float("nan")
        mean_b = float(np.mean(b)) if b else float("nan")
        lines.append(f"{m}\t{mean_a:.6f}\t{mean_b:.6f}\t{stat}\t{len(common)}")
    return "\n".join(lines) + "\n"


def cmd_eval(cfg: ExperimentConfig) -> Path:
    cfg.require("qrels")
    if cfg.baseline_run:
        cfg.require("baseline_run")
    run = _analysed_run(cfg)
    qrels = load_qrels(cfg.qrels)
    depth = cfg.recall_depth or None
    report = evaluate_run(run, qrels, cfg.mrr_cutoff, depth)
    reports = cfg.subdir("reports")
    atomic_write_text(reports / "metrics.tsv", report.to_tsv())
    atomic_write_text(cfg.subdir("csv") / "per_query.csv", report.per_query_csv())
    print(report.to_tsv(), end="")
    if cfg.baseline_run:
        baseline = evaluate_run(load_run(cfg.baseline_run), qrels, cfg.mrr_cutoff, depth)
        text = _ttest_tsv(report, baseline)
        atomic_write_text(reports / "ttest.tsv", text)
        print(text, end="")
    return reports / "metrics.tsv"


def cmd_uncertainty(cfg: ExperimentConfig) -> Path:
    cfg.require("collection", "queries")
    run = _analysed_run(cfg)
    model, vocab = _load_model(cfg)
    lists = _ranked_lists(cfg, model, vocab, load_queries(cfg.queries), run)
    rows, per_query = [], []
    for rl in lists:
        for e in rl.entries:
            rows.append((rl.query_id, e.doc_id, e.score, e.aggregates))
            per_query.append(e.profile.uncertainties)
    if not rows:
        raise DataError("no (query, document) pairs to analyse")
    stats = position_stats(per_query)
    csv_dir = cfg.subdir("csv")
    atomic_write_text(csv_dir / "relevance_uncertainty.csv", relevance_csv(rows))
    atomic_write_text(csv_dir / "position_uncertainty.csv", position_csv(stats))
    scores = [r[2] for r in rows]
    lines = ["aggregate\tspearman_r\tp\tn_pairs"]
    for i, name in enumerate(AGGREGATE_NAMES):
        values = [r[3].as_tuple()[i] for r in rows]
        try:
            r, p = spearman_test(scores, values)
            lines.append(f"{name}\t{r:.6f}\t{p:.6g}\t{len(rows)}")
        except (UndefinedCorrelationError, ContractError):
            lines.append(f"{name}\tnan\tnan\t{len(rows)}")
    lines.append("")
    lines.append("query_length\teos_lowest\tn_pairs")
    lowest = eos_is_lowest(stats)
    for length in sorted(stats):
        lines.append(f"{length}\t{str(lowest[length]).lower()}\t{stats[length][0].n}")
    text = "\n".join(lines) + "\n"
    atomic_write_text(cfg.subdir("reports") / "uncertainty.tsv", text)
    print(text, end="")
    return csv_dir / "relevance_uncertainty.csv"


def cmd_cutoff(cfg: ExperimentConfig) -> Path:
    cfg.require("collection", "queries", "qrels")
    run = _analysed_run(cfg)
    model, vocab = _load_model(cfg)
    lists = _ranked_lists(cfg, model, vocab, load_queries(cfg.queries), run, load_qrels(cfg.qrels))
    report = evaluate(instances_from_ranked_lists(lists), cfg.cutoff_folds, cfg.cutoff_trials,
                      cfg.seed, epochs=cfg.cutoff_epochs)
    atomic_write_text(cfg.subdir("reports") / "cutoff.txt", report.to_table())
    atomic_write_text(cfg.subdir("csv") / "cutoff.csv", report.to_csv())
    print(report.to_table(), end="")
    return cfg.subdir("csv") / "cutoff.csv"


def cmd_generate(cfg: ExperimentConfig) -> Path:
    cfg.require("collection")
    model, vocab = _load_model(cfg)
    collection = load_collection(cfg.collection)
    cache = DocumentCache(collection, vocab)
    doc_ids = list(collection)
    if cfg.generate_limit:
        doc_ids = doc_ids[:cfg.generate_limit]
    lines = [f"{d}\t{' '.join(model.greedy_generate(cache[d], cfg.max_query_len))}\n" for d in doc_ids]
    path = cfg.subdir("runs") / "generated.tsv"
    atomic_write_text(path, "".join(lines))
    print(f"generated {len(lines)} queries -> {path}")
    return path


HELP = {
    "build-vocab": "build the vocabulary from the collection (and queries, if given)",
    "train": "train a ranker on query/positive/negative triples",
    "rerank": "re-rank first-stage candidates; also writes the QL baseline run",
    "eval": "MRR, NDCG@10 and recall; paired t-test against baseline_run if set",
    "uncertainty": "term and query uncertainty CSVs with relevance correlations",
    "cutoff": "cross-validated F1 cut-off prediction on the re-ranked lists",
    "generate": "greedy query generation for collection documents",
}

COMMANDS = {
    "build-vocab": cmd_build_vocab,
    "train": cmd_train,
    "rerank": cmd_rerank,
    "eval": cmd_eval,
    "uncertainty": cmd_uncertainty,
    "cutoff": cmd_cutoff,
    "generate": cmd_generate,
}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _settings_parser() -> argparse.ArgumentParser:
    """Every config key as an optional ``--key-name`` flag; absent flags stay unset."""
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="flat key = value settings file")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        common.add_argument(flag, dest=f.name, default=argparse.SUPPRESS, metavar=f.type.upper(),
                            help=f"override '{f.name}'")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _settings_parser()
    parser = _Parser(prog="genrank", parents=[common],
                     description="Generative re-ranking with uncertainty-aware cut-off prediction.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name])
    return parser


def parse_config(argv: Sequence[str] | None) -> tuple[str, ExperimentConfig]:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command", None)
    if command is None:
        raise ConfigError("no command given; choose from " + ", ".join(COMMANDS))
    config_path = args.pop("config", None)
    return command, load_config(config_path, args)


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="genrank: warning: %(message)s", stream=sys.stderr)
    try:
        command, cfg = parse_config(argv)
        COMMANDS[command](cfg)
    except (NumericError, SingularityError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    except (ConfigError, ContractError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except (DataError, OSError, UnicodeDecodeError) as exc:
        return _fail(EXIT_DATA, exc)
    return EXIT_OK


def _fail(code: int, exc: BaseException) -> int:
    message = " ".join(str(exc).split()) or type(exc).__name__
    print(f"genrank: error: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
