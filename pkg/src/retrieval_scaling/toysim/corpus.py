"""Synthetic topical corpora and weakly supervised query/passage pairs."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import InputError

ANNOTATION_METHODS = ("ict", "noisy_ict", "external")
TOPIC_FRACTION = 0.8
MIN_DOC_LEN = 8
TOKENS_PER_TOPIC_MIN = 16


@dataclass(frozen=True, eq=False)
class Corpus:
    documents: tuple
    vocab_size: int
    topic_count: int
    seed: int
    topics: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.documents)

    def __eq__(self, other):
        if not isinstance(other, Corpus):
            return NotImplemented
        return (
            (self.vocab_size, self.topic_count, self.seed, len(self))
            == (other.vocab_size, other.topic_count, other.seed, len(other))
            and all(np.array_equal(a, b) for a, b in zip(self.documents, other.documents))
        )

    __hash__ = None


@dataclass(frozen=True)
class TrainingPair:
    """A (query, positive passage) pair.

    ``positive_tokens`` overrides the corpus text of the positive passage,
    which is how ICT with span removal hands the model a passage copy that
    no longer contains the query.
    """

    query_tokens: tuple
    positive_doc_index: int
    annotation_method: str = "ict"
    positive_tokens: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "query_tokens", tuple(int(t) for t in self.query_tokens))
        if self.positive_tokens is not None:
            object.__setattr__(self, "positive_tokens",
                               tuple(int(t) for t in self.positive_tokens))
        if not self.query_tokens:
            raise InputError("query must be non-empty")
        if self.annotation_method not in ANNOTATION_METHODS:
            raise InputError(f"unknown annotation method {self.annotation_method!r}")

    def passage_tokens(self, corpus: Corpus):
        if self.positive_tokens is not None:
            return self.positive_tokens
        return corpus.documents[self.positive_doc_index]


def _topic_token_weights(block: int) -> np.ndarray:
    # Zipf-like within a topic block: a few frequent tokens, a long tail
    w = 1.0 / np.arange(1, block + 1)
    return w / w.sum()


def generate_corpus(vocab_size: int, topic_count: int, n_docs: int,
                    doc_len_range=(16, 64), seed: int = 0) -> Corpus:
    """Draw ``n_docs`` documents, each from one latent topic.

    Topic ``t`` owns the token block ``[t*block, (t+1)*block)`` with
    ``block = vocab_size // topic_count``. Each token comes from the topic's
    block with probability 0.8 (Zipf-weighted inside the block, with a
    per-topic shuffle of ranks) and uniformly from the vocabulary otherwise.
    """
    lo, hi = (int(v) for v in doc_len_range)
    if topic_count < 1 or vocab_size < topic_count * TOKENS_PER_TOPIC_MIN:
        raise InputError(
            f"vocab_size={vocab_size} must be at least {TOKENS_PER_TOPIC_MIN} x "
            f"topic_count={topic_count}"
        )
    if n_docs < 100:
        raise InputError(f"n_docs must be at least 100, got {n_docs}")
    if not (MIN_DOC_LEN <= lo <= hi):
        raise InputError(f"invalid doc_len_range {doc_len_range}; need {MIN_DOC_LEN} <= low <= high")

    rng = np.random.default_rng(seed)
    block = vocab_size // topic_count
    weights = _topic_token_weights(block)
    rank_perm = np.stack([rng.permutation(block) for _ in range(topic_count)])

    topics = rng.integers(topic_count, size=n_docs)
    lengths = rng.integers(lo, hi + 1, size=n_docs)
    docs = []
    for t, length in zip(topics, lengths):
        in_topic = rng.random(length) < TOPIC_FRACTION
        topical = t * block + rank_perm[t][rng.choice(block, size=length, p=weights)]
        uniform = rng.integers(vocab_size, size=length)
        docs.append(np.where(in_topic, topical, uniform).astype(np.int64))
    return Corpus(documents=tuple(docs), vocab_size=vocab_size, topic_count=topic_count,
                  seed=seed, topics=topics)


def ict_pairs(corpus: Corpus, n_pairs: int, span_len: int, remove_span: bool = True,
              seed: int = 0, pool=None) -> list:
    """Inverse-cloze pairs: a contiguous span of a document becomes its query.

    Documents are drawn without replacement from ``pool`` (default: the whole
    corpus) in a seeded order, so for a fixed seed the pairs for a smaller
    ``n_pairs`` are a prefix of those for a larger one.
    """
    pool = np.arange(len(corpus)) if pool is None else np.asarray(pool, dtype=np.int64)
    if n_pairs < 1 or n_pairs > pool.shape[0]:
        raise InputError(f"n_pairs={n_pairs} must be between 1 and the {pool.shape[0]} available documents")
    if span_len < 2:
        raise InputError(f"span_len must be at least 2, got {span_len}")
    shortest = min(len(corpus.documents[i]) for i in pool)
    if span_len > shortest - 1:
        raise InputError(f"span_len={span_len} must be below the shortest document length {shortest}")

    rng = np.random.default_rng(seed)
    order = pool[rng.permutation(pool.shape[0])]
    # one uniform draw per document in the full order keeps prefixes stable
    u = rng.random(pool.shape[0])
    pairs = []
    for doc_index, ui in zip(order[:n_pairs], u[:n_pairs]):
        doc = corpus.documents[doc_index]
        offset = int(ui * (len(doc) - span_len + 1))
        pairs.append(span_pair(doc, int(doc_index), offset, span_len, remove_span))
    return pairs


def span_pair(doc, doc_index, offset, span_len, remove_span=True):
    """ICT pair whose query is ``doc[offset:offset + span_len]``."""
    doc = np.asarray(doc, dtype=np.int64)
    query = doc[offset:offset + span_len]
    positive = None
    if remove_span:
        positive = np.concatenate([doc[:offset], doc[offset + span_len:]])
    return TrainingPair(query_tokens=tuple(query.tolist()), positive_doc_index=doc_index,
                        annotation_method="ict",
                        positive_tokens=None if positive is None else tuple(positive.tolist()))


def corrupt_labels(pairs, noise_rate: float, corpus: Corpus, seed: int = 0) -> list:
    """Point each pair at a random other document with probability ``noise_rate``.

    Corrupted pairs lose any passage override, since the new positive is an
    unrelated corpus document, and are relabelled ``noisy_ict``.
    """
    if not 0.0 <= noise_rate <= 1.0:
        raise InputError(f"noise_rate must lie in [0, 1], got {noise_rate}")
    pairs = list(pairs)
    n_docs = len(corpus)
    if n_docs < 2 and noise_rate > 0:
        raise InputError("corruption needs at least two documents")
    rng = np.random.default_rng(seed)
    flips = rng.random(len(pairs)) < noise_rate
    draws = rng.integers(n_docs - 1, size=len(pairs))
    out = []
    for pair, flip, r in zip(pairs, flips, draws):
        if not flip:
            out.append(pair)
            continue
        new = int(r) + (int(r) >= pair.positive_doc_index)
        out.append(TrainingPair(query_tokens=pair.query_tokens, positive_doc_index=new,
                                annotation_method="noisy_ict"))
    return out


def load_external_pairs(lines, corpus: Optional[Corpus] = None) -> list:
    """Parse JSON lines ``{"query_tokens": [...], "positive_doc_index": k}``."""
    pairs = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            pair = TrainingPair(query_tokens=obj["query_tokens"],
                                positive_doc_index=int(obj["positive_doc_index"]),
                                annotation_method="external")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputError(f"line {lineno}: invalid external pair ({exc})") from exc
        if corpus is not None:
            if not 0 <= pair.positive_doc_index < len(corpus):
                raise InputError(f"line {lineno}: positive_doc_index out of range")
            if max(pair.query_tokens) >= corpus.vocab_size or min(pair.query_tokens) < 0:
                raise InputError(f"line {lineno}: token id outside the vocabulary")
        pairs.append(pair)
    return pairs
