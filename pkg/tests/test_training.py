import io
import math

import numpy as np
import pytest

from genrank import autodiff as ad
from genrank.checkpoint import ModelCheckpoint
from genrank.errors import ContractError, NumericError, SingularityError
from genrank.models import make_batch
from genrank.text import encode_doc
from genrank.training import (LossKind, TextTriple, compute_loss, default_learning_rate,
                              log1mexp, margin_loss, nl3u_loss, nll_loss, train)

from conftest import small_model


class TestLosses:
    def test_nll(self):
        assert nll_loss(-2.3).item() == pytest.approx(2.3)
        assert nll_loss(0.0).item() == 0.0
        assert nll_loss(np.array([-1.0, -3.0])).item() == 2.0

    def test_nll_rejects_positive(self):
        with pytest.raises(ContractError):
            nll_loss(0.1)

    def test_margin(self):
        assert margin_loss(-2.0, -5.0, 1.0).item() == 0.0
        assert margin_loss(-5.0, -2.0, 1.0).item() == 4.0
        assert margin_loss(-3.0, -3.0, 0.7).item() == pytest.approx(0.7)

    def test_margin_zero_iff_gap(self, rng):
        for _ in range(200):
            pos, neg = -rng.exponential(3, size=2)
            b = rng.uniform(0.1, 3)
            assert (margin_loss(pos, neg, b).item() == 0.0) == (pos - neg >= b)

    def test_margin_requires_positive_b(self):
        with pytest.raises(ContractError):
            LossKind("marg", margin=0.0)

    def test_nl3u(self):
        lp = math.log(0.1)
        assert nl3u_loss(lp, lp).item() == pytest.approx(2.4079, abs=1e-4)
        assert nl3u_loss(0.0, math.log(0.5)).item() == pytest.approx(0.6931, abs=1e-4)
        assert nl3u_loss(-2.0, -800.0).item() == pytest.approx(2.0)

    def test_nl3u_singular(self):
        with pytest.raises(SingularityError):
            nl3u_loss(-1.0, 0.0)

    @pytest.mark.parametrize("x", [-1e-12, -1e-6, -1.0, -50.0])
    def test_log1mexp_finite(self, x):
        assert math.isfinite(log1mexp(x))
        assert log1mexp(x) == pytest.approx(math.log(-math.expm1(x)), rel=1e-12)

    def test_log1mexp_monotone(self):
        xs = [-1e-12, -1e-6, -1e-3, -0.5, -math.log(2), -1.0, -5.0, -50.0]
        vals = [log1mexp(x) for x in xs]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_losses_nonnegative(self, rng):
        for _ in range(300):
            pos, neg = -rng.exponential(5, size=2) - 1e-9
            for kind in ("nll", "marg", "nl3u"):
                assert compute_loss(LossKind(kind), ad.Tensor(pos), ad.Tensor(neg)).item() >= 0

    def test_learning_rates(self):
        assert default_learning_rate("pgn") == 1e-3
        assert default_learning_rate("seq2seq_attention") == 1e-3
        assert default_learning_rate("t_pgn") == 1e-4
        assert default_learning_rate("transf2transf") == 1e-4


def _triples(vocab, texts):
    return [TextTriple(tuple(q.split()), encode_doc(p, vocab), encode_doc(n, vocab)) for q, p, n in texts]


TRIPLES = [("cat mat", "the cat sat on the mat", "a dog ran in the park"),
           ("dog park", "a dog ran in the park", "the mat of the quux"),
           ("zorp", "the zorp cat sat zorp", "how long do cats live")]


class TestTrain:
    def test_zero_epochs_is_init(self, tiny_vocab):
        model = small_model("pgn", tiny_vocab)
        init = model.state_dict()
        ckpt, report = train(model, _triples(tiny_vocab, TRIPLES), LossKind("nll"), epochs=0,
                             stream=io.StringIO())
        assert report.epoch_loss == []
        for k, v in init.items():
            assert np.array_equal(ckpt.params[k], v)

    def test_deterministic(self, tiny_vocab):
        reports = []
        for _ in range(2):
            model = small_model("seq2seq_attention", tiny_vocab)
            _, r = train(model, _triples(tiny_vocab, TRIPLES), LossKind("marg"), epochs=3, seed=7,
                         batch_size=2, stream=io.StringIO())
            reports.append(r)
        assert reports[0] == reports[1]

    def test_log_and_checkpoints(self, tiny_vocab, tmp_path):
        out = io.StringIO()
        model = small_model("t_pgn", tiny_vocab)
        ckpt, report = train(model, _triples(tiny_vocab, TRIPLES), LossKind("nl3u"), epochs=2,
                             checkpoint_dir=tmp_path, log_path=tmp_path / "train.log",
                             vocab=tiny_vocab, stream=out)
        lines = out.getvalue().splitlines()
        assert len(lines) == 2 and lines[0].startswith("1\t")
        assert (tmp_path / "train.log").read_text().splitlines() == lines
        saved = ModelCheckpoint.load(tmp_path / "epoch_002.ckpt")
        assert saved.metadata["epoch"] == 2 and saved.metadata["loss"] == "nl3u"
        assert (tmp_path / "epoch_001.ckpt").exists()
        assert all(0.0 <= a <= 1.0 for a in report.epoch_accuracy)

    def test_nll_ignores_negative(self, tiny_vocab):
        """Swapping every D- leaves the trained weights bit-identical."""
        swapped = [(q, p, "cats live how long do") for q, p, _ in TRIPLES]
        finals = []
        for texts in (TRIPLES, swapped):
            model = small_model("pgn", tiny_vocab)
            train(model, _triples(tiny_vocab, texts), LossKind("nll"), epochs=2, stream=io.StringIO())
            finals.append(model.state_dict())
        for k in finals[0]:
            assert np.array_equal(finals[0][k], finals[1][k])

    def test_single_triple_likelihood_rises(self, tiny_vocab):
        model = small_model("pgn", tiny_vocab)
        triple = _triples(tiny_vocab, TRIPLES[:1])
        batch = make_batch([triple[0].pos], [triple[0].query], copy=True)
        history = []
        for _ in range(15):
            train(model, triple, LossKind("nll"), epochs=1, lr=1e-2, stream=io.StringIO())
            with ad.no_grad():
                history.append(model.query_log_probs(batch)[0].item())
        assert all(b > a for a, b in zip(history, history[1:]))

    def test_divergence_names_batch(self, tiny_vocab):
        model = small_model("seq2seq_attention", tiny_vocab)
        model.output.weight.data[0, 0] = np.nan
        with pytest.raises(NumericError, match="batch index 0"):
            train(model, _triples(tiny_vocab, TRIPLES), LossKind("nll"), epochs=1, stream=io.StringIO())

    def test_empty(self, tiny_vocab):
        with pytest.raises(ContractError):
            train(small_model("pgn", tiny_vocab), [], LossKind("nll"))
