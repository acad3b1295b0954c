import math

import numpy as np
import pytest

from genrank.errors import ContractError, DataError
from genrank.models import ARCHITECTURES
from genrank.scoring import (BM25Index, CollectionLM, DocumentCache, RankedEntry, RankedList,
                             bm25_topk, ql_rerank, ql_score, rerank, score_profiles,
                             score_query_doc)
from genrank.text import UNK

from conftest import small_model

COLLECTION = {"d1": "the zorp cat sat on the mat zorp", "d2": "a dog ran in the park",
              "d3": "the mat of the quux", "d4": "cats live how long"}


class TestScoreQueryDoc:
    @pytest.mark.parametrize("arch", ARCHITECTURES)
    def test_score_is_sum_and_product(self, arch, tiny_vocab, tiny_docs):
        model = small_model(arch, tiny_vocab)
        score, prof = score_query_doc(model, "the cat", tiny_docs[0])
        assert len(prof) == 3 and prof.tokens == ["the", "cat", "<eos>"]
        assert score == pytest.approx(prof.log_probs.sum(), abs=1e-9)
        steps = model.forward_teacher_forced(tiny_docs[0], "the cat")
        direct = np.prod([s.final_dist[i] for s, i in zip(steps, prof.token_ids)])
        assert math.exp(score) == pytest.approx(direct, rel=1e-6)
        assert not prof.any_floored

    def test_each_step_lowers_running_score(self, tiny_vocab, tiny_docs):
        model = small_model("pgn", tiny_vocab)
        short = score_query_doc(model, "the cat", tiny_docs[0])[1]
        long_ = score_query_doc(model, "the cat mat", tiny_docs[0])[1]
        # teacher forcing: a shared prefix yields identical step terms
        assert np.array_equal(short.log_probs[:2], long_.log_probs[:2])
        running = np.cumsum(long_.log_probs)
        assert np.all(np.diff(running) < 0)

    def test_deterministic(self, tiny_vocab, tiny_docs):
        model = small_model("t_pgn", tiny_vocab)
        assert score_query_doc(model, "mat zorp", tiny_docs[0])[0] == \
            score_query_doc(model, "mat zorp", tiny_docs[0])[0]

    def test_oov_lookup_rule(self, tiny_vocab, tiny_docs):
        doc = tiny_docs[0]
        copy_prof = score_query_doc(small_model("pgn", tiny_vocab), "zorp", doc)[1]
        plain_prof = score_query_doc(small_model("seq2seq_attention", tiny_vocab), "zorp", doc)[1]
        assert copy_prof.token_ids[0] == doc.ext_vocab.doc_oov["zorp"]
        assert plain_prof.token_ids[0] == UNK
        # an OOV term absent from this document falls back to UNK even with copying
        other = score_query_doc(small_model("pgn", tiny_vocab), "zorp", tiny_docs[1])[1]
        assert other.token_ids[0] == UNK

    def test_batch_size_irrelevant(self, tiny_vocab, tiny_docs):
        model = small_model("transf2transf", tiny_vocab)
        a = score_profiles(model, "the dog", tiny_docs, batch_size=1)
        b = score_profiles(model, "the dog", tiny_docs, batch_size=64)
        for x, y in zip(a, b):
            np.testing.assert_allclose(x.log_probs, y.log_probs, atol=1e-12)
            np.testing.assert_allclose(x.uncertainties, y.uncertainties, atol=1e-10)

    def test_uncertainty_within_bounds(self, tiny_vocab, tiny_docs):
        model = small_model("pgn", tiny_vocab)
        for prof in score_profiles(model, "how long zorp", tiny_docs):
            ext = len(tiny_docs[0].ext_vocab)
            assert np.all(prof.uncertainties >= 0)
            assert np.all(prof.uncertainties <= math.log(ext) + 1e-9)
            agg = prof.aggregates()
            assert agg.max >= agg.mean


class TestRankedList:
    def test_sort_and_ties(self):
        rl = RankedList("q", [RankedEntry("b", -1.0), RankedEntry("a", -2.0), RankedEntry("c", -1.0)])
        assert rl.doc_ids == ["b", "c", "a"]

    def test_duplicates(self):
        with pytest.raises(DataError):
            RankedList("q", [RankedEntry("a", 0.0), RankedEntry("a", 1.0)])


class TestRerank:
    def test_permutation_and_order(self, tiny_vocab):
        model = small_model("pgn", tiny_vocab)
        cache = DocumentCache(COLLECTION, tiny_vocab)
        cands = [(d, 0.0) for d in COLLECTION]
        rl = rerank(model, "q1", "the zorp", cands, cache, qrels={"d1": 1})
        assert sorted(rl.doc_ids) == sorted(COLLECTION)
        scores = [e.score for e in rl.entries]
        assert scores == sorted(scores, reverse=True)
        assert {e.doc_id: e.grade for e in rl.entries}["d1"] == 1
        assert all(e.aggregates is not None for e in rl.entries)

    def test_input_order_irrelevant(self, tiny_vocab):
        model = small_model("seq2seq_attention", tiny_vocab)
        cache = DocumentCache(COLLECTION, tiny_vocab)
        cands = [(d, 0.0) for d in COLLECTION]
        a = rerank(model, "q", "park dog", cands, cache)
        b = rerank(model, "q", "park dog", cands[::-1], cache)
        assert a.pairs() == b.pairs()

    def test_single_candidate(self, tiny_vocab):
        rl = rerank(small_model("pgn", tiny_vocab), "q", "x", [("d2", 0.0)],
                    DocumentCache(COLLECTION, tiny_vocab))
        assert rl.doc_ids == ["d2"]

    def test_missing_doc_named(self, tiny_vocab):
        with pytest.raises(DataError, match="d99"):
            rerank(small_model("pgn", tiny_vocab), "q", "x", [("d99", 0.0)],
                   DocumentCache(COLLECTION, tiny_vocab))

    def test_empty_candidates(self, tiny_vocab):
        with pytest.raises(ContractError):
            rerank(small_model("pgn", tiny_vocab), "q", "x", [], DocumentCache(COLLECTION, tiny_vocab))


class TestQL:
    def test_hand_example(self):
        lm = CollectionLM({"D": ["a", "a", "b"], "E": ["b"]}, mu=2)
        lm.p_collection = {"a": 0.5, "b": 0.5}
        assert ql_score("a", "D", lm) == pytest.approx(math.log(0.6))

    def test_zero_tf(self):
        lm = CollectionLM({"D": ["x", "y", "z"]}, mu=2)
        lm.p_collection = {"w": 0.25}
        assert ql_score(["w"], "D", lm) == pytest.approx(math.log(0.1))

    def test_background_limit(self):
        lm = CollectionLM({"D": ["a", "a", "b"], "E": ["b", "b", "c"]}, mu=1e12)
        probs, _ = lm.step_probabilities(["a", "c"], "D")
        np.testing.assert_allclose(probs, [lm.p_collection["a"], lm.p_collection["c"]], rtol=1e-9)

    def test_collection_normalized(self):
        lm = CollectionLM.from_texts(COLLECTION)
        assert sum(lm.p_collection.values()) == pytest.approx(1.0, abs=1e-9)

    def test_unknown_term_floored(self):
        lm = CollectionLM.from_texts(COLLECTION)
        probs, flags = lm.step_probabilities(["nope"], "d1")
        assert flags.tolist() == [True] and probs[0] == 1e-12

    def test_bag_of_words(self, rng):
        lm = CollectionLM.from_texts(COLLECTION, mu=50)
        toks = COLLECTION["d1"].split()
        shuffled = [toks[i] for i in rng.permutation(len(toks))]
        assert ql_score("the cat", toks, lm) == ql_score("the cat", shuffled, lm)

    def test_invalid_mu(self):
        with pytest.raises(ContractError):
            CollectionLM({}, mu=0)

    def test_rerank(self):
        lm = CollectionLM.from_texts(COLLECTION, mu=10)
        rl = ql_rerank("q", "zorp cat", [(d, 0.0) for d in COLLECTION], lm)
        assert rl.doc_ids[0] == "d1"


class TestBM25:
    def test_hand_example(self):
        idx = BM25Index({"A": ["x", "x"], "B": ["y", "y"]})
        assert idx.idf("x") == pytest.approx(math.log(2))
        assert idx.scores(["x"])["A"] == pytest.approx(math.log(2) * 1.375)
        assert round(idx.scores(["x"])["A"], 3) == 0.953

    def test_ubiquitous_term(self):
        idx = BM25Index({"A": ["x"], "B": ["x", "y"], "C": ["x"]})
        assert idx.idf("x") == pytest.approx(math.log(1 + 0.5 / 3.5))
        assert idx.idf("x") > 0

    def test_absent_term(self):
        idx = BM25Index.from_texts(COLLECTION)
        assert idx.scores(["nope"]) == {}
        assert bm25_topk("nope the", idx) == bm25_topk("the", idx)

    def test_topk_sorted_nonnegative(self):
        idx = BM25Index.from_texts(COLLECTION)
        out = bm25_topk("the mat cat", idx, k=3)
        assert len(out) == 3
        assert all(s >= 0 for _, s in out)
        assert [s for _, s in out] == sorted((s for _, s in out), reverse=True)
        assert out[0][0] == "d1"

    def test_tie_break(self):
        idx = BM25Index({"b": ["x"], "a": ["x"], "c": ["y"]})
        assert [d for d, _ in bm25_topk("x", idx)] == ["a", "b"]

    def test_empty_query(self, caplog):
        assert bm25_topk("?!", BM25Index.from_texts(COLLECTION)) == []
        assert "empty query" in caplog.text
