import logging
import re

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sparse_rrnn.data import (
    EmbeddingTable, FormatError, LabeledDoc, SynthConfig, SynthError, contains_pattern, encode,
    load_dataset, load_embeddings, save_dataset, save_embeddings, synth_generate, tokenize,
    write_synth,
)


def scan(tokens, pattern, max_gap):
    """Regex scan over the joined text; shares nothing with the generator."""
    gap = r"(?: \S+){0,%d}" % max_gap
    body = gap.join(" " + re.escape(p) for p in pattern)
    return re.search(r"(?:^|(?<= ))" + body.lstrip(" ") + r"(?= |$)", " ".join(tokens)) is not None


def test_scan_oracle_sanity():
    assert scan("x a b y".split(), ("a", "b"), 0)
    assert not scan("x a c b".split(), ("a", "b"), 0)
    assert scan("x a c b".split(), ("a", "b"), 1)
    assert not scan("xa b".split(), ("a", "b"), 0)


def test_load_embeddings(tmp_path):
    p = tmp_path / "emb.txt"
    p.write_text("the 0.1 0.2 0.3\ncat -1 0 2.5\n", encoding="utf-8")
    t = load_embeddings(p)
    assert len(t) == 2 and t.dim == 3
    np.testing.assert_array_equal(t.lookup("cat"), [-1, 0, 2.5])
    np.testing.assert_array_equal(t.lookup("dog"), np.zeros(3))


def test_embedding_roundtrip(tmp_path, rng):
    t = EmbeddingTable(4, {"a": rng.normal(size=4), "é": rng.normal(size=4)})
    p = tmp_path / "e.txt"
    save_embeddings(t, p)
    t2 = load_embeddings(p)
    for tok in ("a", "é"):
        np.testing.assert_array_equal(t2.lookup(tok), t.lookup(tok))


def test_embedding_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("a 1 2\nb 1 2 3\n")
    with pytest.raises(FormatError, match=":2:"):
        load_embeddings(p)
    p.write_text("a 1 2\nb 1 x\n")
    with pytest.raises(FormatError, match=":2:"):
        load_embeddings(p)


def test_table_is_immutable(rng):
    t = EmbeddingTable(2, {"a": rng.normal(size=2)})
    with pytest.raises(ValueError):
        t.lookup("a")[0] = 1.0


def test_load_dataset_examples(tmp_path):
    p = tmp_path / "d.tsv"
    p.write_text("1\tgreat product works\n")
    docs, dropped = load_dataset(p, min_tokens=2)
    assert dropped == 0 and len(docs) == 1
    assert docs[0].label == 1 and docs[0].tokens == ["great", "product", "works"]
    p.write_text("-1\tone two three four\n")
    docs, dropped = load_dataset(p, min_tokens=5)
    assert docs == [] and dropped == 1


def test_load_dataset_empty_warns(tmp_path, caplog):
    p = tmp_path / "empty.tsv"
    p.write_text("")
    with caplog.at_level(logging.WARNING):
        docs, dropped = load_dataset(p)
    assert docs == [] and dropped == 0
    assert "no documents" in caplog.text


def test_load_dataset_malformed(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("1\ta b c d e\n3\tnope\n")
    with pytest.raises(FormatError, match=":2:"):
        load_dataset(p)


def test_dataset_roundtrip(tmp_path):
    docs = [LabeledDoc("a b c d e".split(), 1), LabeledDoc("x y z w v u".split(), -1)]
    p = tmp_path / "d.tsv"
    save_dataset(docs, p)
    assert load_dataset(p)[0] == docs


def test_tokenize():
    assert tokenize("Great  PRODUCT\tworks\n") == ["great", "product", "works"]


@given(st.text())
def test_tokenize_idempotent(text):
    once = tokenize(text)
    assert tokenize(" ".join(once)) == once


def test_synth_bigram_gap0():
    data = synth_generate(SynthConfig(seed=3))
    a, b = data.pattern
    for docs in (data.train, data.dev, data.test):
        for d in docs:
            adjacent = (" " + a + " " + b + " ") in (" " + " ".join(d.tokens) + " ")
            assert adjacent == (d.label == 1)


@pytest.mark.parametrize("gap,length", [(1, 2), (2, 3), (0, 4)])
def test_synth_gapped_patterns(gap, length):
    cfg = SynthConfig(pattern_length=length, max_gap=gap, n_train=60, n_dev=20, n_test=20, seed=gap)
    data = synth_generate(cfg)
    for d in data.train + data.dev + data.test:
        assert scan(d.tokens, data.pattern, gap) == (d.label == 1)
        assert contains_pattern(d.tokens, data.pattern, gap) == (d.label == 1)


def test_synth_deterministic():
    a, b = synth_generate(SynthConfig(seed=9)), synth_generate(SynthConfig(seed=9))
    assert a.train == b.train and a.test == b.test and a.pattern == b.pattern
    for tok in a.table.vectors:
        np.testing.assert_array_equal(a.table.lookup(tok), b.table.lookup(tok))
    assert synth_generate(SynthConfig(seed=10)).train != a.train


def test_synth_balance_and_norms():
    data = synth_generate(SynthConfig(n_train=100, n_dev=20, n_test=40))
    for docs, n in ((data.train, 100), (data.dev, 20), (data.test, 40)):
        assert len(docs) == n and sum(d.label == 1 for d in docs) == n // 2
    norms = [np.linalg.norm(v) for v in data.table.vectors.values()]
    np.testing.assert_allclose(norms, 1.0)
    assert len(data.table) == 50 and data.table.dim == 10


def test_synth_explicit_pattern():
    data = synth_generate(SynthConfig(pattern=("w03", "w07"), n_train=10, n_dev=4, n_test=4))
    assert data.pattern == ("w03", "w07")
    with pytest.raises(ValueError):
        synth_generate(SynthConfig(pattern=("nope",)))


def test_synth_retry_budget():
    # a 2-token vocabulary cannot avoid the bigram in long documents
    cfg = SynthConfig(vocab_size=3, pattern=("w0", "w1"), min_len=30, max_len=30, max_retries=20,
                      n_train=4, n_dev=2, n_test=2, distractor_rate=1.0)
    with pytest.raises(SynthError):
        synth_generate(cfg)


def test_encode_dims(rng):
    data = synth_generate(SynthConfig(n_train=20, n_dev=4, n_test=4))
    enc = encode(data.train, data.table)
    assert all(x.shape == (len(t), 10) for x, t in zip(enc.x, enc.tokens))
    assert set(enc.y.tolist()) == {1, -1}


def test_write_synth(tmp_path):
    data = synth_generate(SynthConfig(n_train=10, n_dev=4, n_test=4))
    write_synth(data, tmp_path)
    docs, _ = load_dataset(tmp_path / "train.tsv", min_tokens=1)
    assert docs == data.train
    assert len(load_embeddings(tmp_path / "embeddings.txt")) == 50
