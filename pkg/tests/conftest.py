import numpy as np
import pytest

from genrank.models import ModelConfig, build_model
from genrank.text import build_vocab, encode_doc

SMALL = dict(embedding_dim=8, hidden_dim=8, n_transformer_layers=1, n_heads=2, feedforward_dim=16)


@pytest.fixture(scope="session")
def tiny_vocab():
    corpus = ["the cat sat on the mat", "a dog ran in the park", "how long do cats live",
              "what is the mat made of"] * 2
    return build_vocab(corpus, min_frequency=2)


@pytest.fixture(scope="session")
def tiny_docs(tiny_vocab):
    texts = ["the zorp cat sat on the mat zorp", "a dog ran in the park", "the mat of the quux"]
    return [encode_doc(t, tiny_vocab) for t in texts]


def small_model(arch, vocab, seed=0, **kw):
    params = dict(SMALL)
    params.update(kw)
    return build_model(ModelConfig(arch, len(vocab), seed=seed, **params))


def random_tokens(rng, vocab, n, oov=("zorp", "quux", "blorf")):
    pool = list(vocab.terms[4:]) + list(oov)
    return [pool[i] for i in rng.integers(0, len(pool), size=n)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str, soft: bool = False) -> None:
    status = "PASS" if ok else ("WARN" if soft else "FAIL")
    line = f"[{status}] criterion {number:2d} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2])):
            terminalreporter.write_line(line)
