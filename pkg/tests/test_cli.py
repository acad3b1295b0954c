import csv

import pytest

from genrank import cli
from genrank.config import load_config
from genrank.errors import NumericError
from genrank.text import Vocabulary, load_qrels, load_run, write_run
from genrank.toy import make_toy_corpus

from pipeline import FAST, run_pipeline, stages, tree_digest, write_config


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    return make_toy_corpus(n_entities=24, seed=3).write(tmp_path_factory.mktemp("toy"))


@pytest.fixture(scope="module")
def finished(corpus, tmp_path_factory):
    """One full pipeline run shared by the read-only tests."""
    root = tmp_path_factory.mktemp("run")
    path = write_config(root / "exp.cfg", corpus, root / "out", architecture="pgn", **FAST)
    cfg = load_config(path)
    codes = run_pipeline(path, corpus, cfg)
    return path, cfg, codes


def _single_line_error(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    errors = [l for l in err if l.startswith("genrank: error:")]
    assert len(errors) == 1
    return errors[0]


class TestPipeline:
    def test_every_stage_succeeds(self, finished):
        _, _, codes = finished
        assert list(codes.values()) == [0] * 7

    def test_layout(self, finished):
        _, cfg, _ = finished
        base = cfg.experiment_dir
        expected = ["checkpoints/final.ckpt", "checkpoints/epoch_001.ckpt", "reports/train.log",
                    "runs/rerank.run", "runs/ql.run", "runs/generated.tsv", "reports/metrics.tsv",
                    "reports/ttest.tsv", "csv/per_query.csv", "csv/relevance_uncertainty.csv",
                    "csv/position_uncertainty.csv", "reports/uncertainty.tsv",
                    "reports/cutoff.txt", "csv/cutoff.csv"]
        for rel in expected:
            assert (base / rel).is_file(), rel
        assert not list(base.rglob("*.tmp*"))

    def test_rerank_is_permutation(self, finished, corpus):
        _, cfg, _ = finished
        cands, reranked = load_run(corpus["candidates"]), load_run(cfg.rerank_run_path)
        assert set(cands) == set(reranked)
        for q in cands:
            assert sorted(d for d, _ in cands[q]) == sorted(d for d, _ in reranked[q])
            scores = [s for _, s in reranked[q]]
            assert scores == sorted(scores, reverse=True)

    def test_report_headers(self, finished):
        _, cfg, _ = finished
        reports = cfg.subdir("reports")
        assert (reports / "metrics.tsv").read_text().splitlines()[0] == "metric\tmean\tn_queries"
        assert (reports / "ttest.tsv").read_text().startswith("metric\tmean_run\tmean_baseline\tt\tp")
        log_lines = (reports / "train.log").read_text().splitlines()
        assert [l.split("\t")[0] for l in log_lines] == ["1", "2"]
        assert (cfg.subdir("csv") / "cutoff.csv").read_text().startswith("method,mean_f1,pct_of_oracle")
        generated = (cfg.subdir("runs") / "generated.tsv").read_text().splitlines()
        assert len(generated) == 5 and all("\t" in l for l in generated)

    def test_deterministic(self, finished, corpus, tmp_path):
        path, cfg, _ = finished
        again = write_config(tmp_path / "exp.cfg", corpus, tmp_path / "out", architecture="pgn", **FAST)
        assert list(run_pipeline(again, corpus, load_config(again)).values()) == [0] * 7
        assert tree_digest(tmp_path / "out") == tree_digest(cfg.experiment_dir.parent)


def test_ideal_run_scores_one(corpus, tmp_path, capsys):
    qrels = load_qrels(corpus["qrels"])
    ideal = {q: [(d, float(-i)) for i, (d, _) in
                 enumerate(sorted(g.items(), key=lambda x: -x[1]))] for q, g in qrels.items()}
    write_run(tmp_path / "ideal.run", ideal, "ideal")
    code = cli.main(["eval", "--qrels", str(corpus["qrels"]), "--run", str(tmp_path / "ideal.run"),
                     "--out", str(tmp_path / "out")])
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "out" / "t_pgn-nll" / "csv" / "per_query.csv")))
    assert len(rows) == len(qrels)
    assert all(float(r["ndcg@10"]) == 1.0 and float(r["mrr"]) == 1.0 for r in rows)


class TestBuildVocab:
    def _vocab(self, tmp_path, collection, *flags):
        out = tmp_path / "v.txt"
        code = cli.main(["build-vocab", "--collection", str(collection), "--vocab", str(out), *flags])
        assert code == 0
        return out.read_bytes()

    def test_byte_identical(self, corpus, tmp_path):
        assert self._vocab(tmp_path, corpus["collection"]) == self._vocab(tmp_path, corpus["collection"])

    def test_min_frequency_monotone(self, corpus, tmp_path):
        sizes = [len(self._vocab(tmp_path, corpus["collection"], "--min-frequency", str(m)).splitlines())
                 for m in (1, 2, 5, 20, 1000)]
        assert all(a >= b for a, b in zip(sizes, sizes[1:]))
        assert sizes[0] > sizes[-1]

    def test_empty_corpus(self, tmp_path, caplog):
        empty = tmp_path / "empty.tsv"
        empty.write_text("")
        vocab = Vocabulary.loads(self._vocab(tmp_path, empty).decode())
        assert list(vocab.terms) == ["<pad>", "<unk>", "<sos>", "<eos>"]
        assert "empty corpus" in caplog.text


class TestFailures:
    def test_no_command(self, capsys):
        assert cli.main([]) == 1
        _single_line_error(capsys)

    def test_unknown_command(self, capsys):
        assert cli.main(["fly"]) == 1
        _single_line_error(capsys)

    def test_unknown_flag(self, capsys):
        assert cli.main(["train", "--colour", "red"]) == 1
        _single_line_error(capsys)

    def test_invalid_config_writes_nothing(self, corpus, tmp_path, capsys):
        out = tmp_path / "out"
        bad = write_config(tmp_path / "bad.cfg", corpus, out, architecture="lstm")
        for name, extra in stages(corpus, load_config(None, {"out": str(out)})):
            assert cli.main([name, "--config", str(bad), *extra]) == 1
        assert not out.exists()
        assert "architecture" in _single_line_error_all(capsys)

    def test_missing_input(self, tmp_path, capsys):
        code = cli.main(["build-vocab", "--collection", str(tmp_path / "nope.tsv"),
                         "--out", str(tmp_path / "out")])
        assert code == 1
        assert "nope.tsv" in _single_line_error(capsys)
        assert not (tmp_path / "out").exists()

    def test_malformed_data(self, tmp_path, capsys):
        bad = tmp_path / "collection.tsv"
        bad.write_text("only-one-column\n")
        assert cli.main(["build-vocab", "--collection", str(bad), "--out", str(tmp_path / "out")]) == 2
        assert "collection.tsv:1" in _single_line_error(capsys)

    def test_train_without_vocab(self, corpus, tmp_path, capsys):
        path = write_config(tmp_path / "exp.cfg", corpus, tmp_path / "out", **FAST)
        assert cli.main(["train", "--config", str(path)]) == 1
        assert "build-vocab" in _single_line_error(capsys)
        assert not (tmp_path / "out").exists()

    def test_rerank_without_checkpoint(self, corpus, tmp_path, capsys):
        path = write_config(tmp_path / "exp.cfg", corpus, tmp_path / "out", **FAST)
        assert cli.main(["rerank", "--config", str(path)]) == 1
        assert "checkpoint" in _single_line_error(capsys)

    def test_numeric_failure_code(self, monkeypatch, capsys):
        def boom(cfg):
            raise NumericError("non-finite loss at epoch 1,\nbatch index 0")
        monkeypatch.setitem(cli.COMMANDS, "train", boom)
        assert cli.main(["train"]) == 3
        assert _single_line_error(capsys).endswith("epoch 1, batch index 0")


def _single_line_error_all(capsys):
    err = capsys.readouterr().err
    assert all(l.startswith("genrank: ") for l in err.strip().splitlines())
    return err
