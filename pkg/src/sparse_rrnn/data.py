"""Embedding tables, labeled corpora and the planted-pattern generator.

File formats (UTF-8, LF):

* embeddings: ``token v1 v2 ... vD`` per line, space separated;
* datasets: ``LABEL<TAB>text`` per line with LABEL in {1, -1}.
"""

from dataclasses import dataclass, field
import logging
import os

import numpy as np

log = logging.getLogger(__name__)


class FormatError(ValueError):
    def __init__(self, path, line_no, message):
        self.path, self.line_no = path, line_no
        super().__init__(f"{path}:{line_no}: {message}")


def tokenize(text):
    """Lowercase + whitespace split. Idempotent on its own output."""
    return text.lower().split()


@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict
    unk_vector: np.ndarray = None

    def __post_init__(self):
        if self.unk_vector is None:
            self.unk_vector = np.zeros(self.dim)
        for tok, vec in self.vectors.items():
            if vec.shape != (self.dim,):
                raise ValueError(f"vector for {tok!r} has shape {vec.shape}, expected ({self.dim},)")
            vec.setflags(write=False)
        self.unk_vector.setflags(write=False)

    def __len__(self):
        return len(self.vectors)

    def __contains__(self, token):
        return token in self.vectors

    def lookup(self, token):
        return self.vectors.get(token, self.unk_vector)

    def embed(self, tokens):
        if not tokens:
            return np.zeros((0, self.dim))
        return np.stack([self.lookup(t) for t in tokens])


def load_embeddings(path):
    vectors = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if not parts or parts == [""]:
                continue
            token, raw = parts[0], parts[1:]
            try:
                vec = np.array([float(x) for x in raw], dtype=np.float64)
            except ValueError as exc:
                raise FormatError(path, line_no, f"unparseable float ({exc})") from None
            if dim is None:
                if vec.size == 0:
                    raise FormatError(path, line_no, "no vector components")
                dim = vec.size
            elif vec.size != dim:
                raise FormatError(path, line_no, f"dimension {vec.size} != {dim}")
            if not np.all(np.isfinite(vec)):
                raise FormatError(path, line_no, "non-finite component")
            vectors[token] = vec
    if dim is None:
        raise FormatError(path, 0, "empty embedding file")
    return EmbeddingTable(dim, vectors)


def save_embeddings(table, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tok, vec in table.vectors.items():
            fh.write(tok + " " + " ".join(repr(float(x)) for x in vec) + "\n")


@dataclass
class LabeledDoc:
    tokens: list
    label: int

    def __post_init__(self):
        if self.label not in (1, -1):
            raise ValueError(f"label must be 1 or -1, got {self.label!r}")
        if not self.tokens:
            raise ValueError("document has no tokens")


def load_dataset(path, min_tokens=5):
    """Returns ``(docs, dropped)``; docs shorter than ``min_tokens`` are dropped."""
    docs, dropped = [], 0
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            label, sep, text = line.partition("\t")
            if not sep or label.strip() not in ("1", "-1"):
                raise FormatError(path, line_no, "expected 'LABEL<TAB>text' with LABEL 1 or -1")
            tokens = tokenize(text)
            if len(tokens) < max(min_tokens, 1):
                dropped += 1
                continue
            docs.append(LabeledDoc(tokens, int(label)))
    if not docs:
        log.warning("%s: no documents loaded", path)
    if dropped:
        log.info("%s: dropped %d documents shorter than %d tokens", path, dropped, min_tokens)
    return docs, dropped


def save_dataset(docs, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            fh.write(f"{doc.label}\t{' '.join(doc.tokens)}\n")


@dataclass
class EncodedSplit:
    """A split ready for the model: embedded docs, labels and raw tokens."""

    x: list
    y: np.ndarray
    tokens: list

    def __len__(self):
        return len(self.x)

    def subset(self, idx):
        return EncodedSplit([self.x[i] for i in idx], self.y[idx], [self.tokens[i] for i in idx])


def encode(docs, table):
    return EncodedSplit([table.embed(d.tokens) for d in docs],
                        np.array([d.label for d in docs], dtype=np.int64),
                        [list(d.tokens) for d in docs])


@dataclass
class SynthConfig:
    vocab_size: int = 50
    dim: int = 10
    pattern: tuple = ()  # explicit pattern tokens; empty -> draw pattern_length from vocab
    pattern_length: int = 2
    max_gap: int = 0
    min_len: int = 8
    max_len: int = 16
    n_train: int = 500
    n_dev: int = 100
    n_test: int = 500
    distractor_rate: float = 0.5  # share of negatives holding the pattern tokens out of order/too far apart
    seed: int = 0
    max_retries: int = 10000

    def __post_init__(self):
        self.pattern = tuple(self.pattern)
        m = len(self.pattern) or self.pattern_length
        if not 1 <= m <= 4:
            raise ValueError("pattern length must be in 1..4")
        if self.vocab_size < m + 1 or self.dim < 1:
            raise ValueError("vocabulary too small for the pattern")
        if min(self.n_train, self.n_dev, self.n_test) < 1:
            raise ValueError("split sizes must be positive")
        if not 0 <= self.max_gap or self.min_len < m + (m - 1) * self.max_gap or self.max_len < self.min_len:
            raise ValueError("document length range cannot hold the pattern")
        if not 0 <= self.distractor_rate <= 1:
            raise ValueError("distractor_rate must be in [0, 1]")


def vocab_tokens(n):
    width = len(str(n - 1))
    return [f"w{i:0{width}d}" for i in range(n)]


def contains_pattern(tokens, pattern, max_gap):
    """Pattern tokens in order with at most ``max_gap`` tokens between neighbours."""
    m = len(pattern)

    def match(pos, j):
        if j == m:
            return True
        hi = len(tokens) if j == 0 else min(len(tokens), pos + max_gap + 1)
        for q in range(pos, hi):
            if tokens[q] == pattern[j] and match(q + 1, j + 1):
                return True
        return False

    return match(0, 0)


class SynthError(RuntimeError):
    pass


@dataclass
class SynthData:
    train: list
    dev: list
    test: list
    table: EmbeddingTable
    pattern: tuple
    config: SynthConfig = field(repr=False, default=None)


def _positive(rng, vocab, cfg, pattern):
    n = int(rng.integers(cfg.min_len, cfg.max_len + 1))
    gaps = rng.integers(0, cfg.max_gap + 1, size=len(pattern) - 1)
    span = len(pattern) + int(gaps.sum())
    start = int(rng.integers(0, n - span + 1))
    toks = list(rng.choice(vocab, size=n))
    pos = start
    for j, p in enumerate(pattern):
        toks[pos] = p
        if j < len(gaps):
            pos += int(gaps[j]) + 1
    return toks


def _negative(rng, vocab, cfg, pattern):
    for _ in range(cfg.max_retries):
        n = int(rng.integers(cfg.min_len, cfg.max_len + 1))
        toks = list(rng.choice(vocab, size=n))
        if len(pattern) > 1 and rng.random() < cfg.distractor_rate:
            # every pattern token present, at random positions
            pos = rng.choice(n, size=len(pattern), replace=False)
            for p, q in zip(pattern, pos):
                toks[q] = p
        if not contains_pattern(toks, pattern, cfg.max_gap):
            return toks
    raise SynthError("negative rejection sampling exceeded its retry budget")


def _split(rng, vocab, cfg, pattern, size):
    n_pos = size // 2 + (size % 2) * int(rng.integers(0, 2))
    docs = [LabeledDoc(_positive(rng, vocab, cfg, pattern), 1) for _ in range(n_pos)]
    docs += [LabeledDoc(_negative(rng, vocab, cfg, pattern), -1) for _ in range(size - n_pos)]
    order = rng.permutation(size)
    return [docs[i] for i in order]


def synth_generate(config):
    rng = np.random.default_rng(config.seed)
    vocab = vocab_tokens(config.vocab_size)
    vecs = rng.normal(size=(config.vocab_size, config.dim))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    table = EmbeddingTable(config.dim, {t: vecs[i].copy() for i, t in enumerate(vocab)})
    if config.pattern:
        pattern = tuple(config.pattern)
        unknown = [p for p in pattern if p not in table]
        if unknown:
            raise ValueError(f"pattern tokens not in vocabulary: {unknown}")
    else:
        pattern = tuple(rng.choice(vocab, size=config.pattern_length, replace=False))
    pattern = tuple(str(p) for p in pattern)
    vocab_arr = np.array(vocab)
    splits = [[LabeledDoc([str(t) for t in d.tokens], d.label) for d in
               _split(rng, vocab_arr, config, pattern, size)]
              for size in (config.n_train, config.n_dev, config.n_test)]
    return SynthData(*splits, table, pattern, config)


def write_synth(data, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    for name, docs in (("train", data.train), ("dev", data.dev), ("test", data.test)):
        save_dataset(docs, os.path.join(out_dir, f"{name}.tsv"))
    save_embeddings(data.table, os.path.join(out_dir, "embeddings.txt"))
    with open(os.path.join(out_dir, "pattern.txt"), "w", encoding="utf-8") as fh:
        fh.write(" ".join(data.pattern) + "\n")
