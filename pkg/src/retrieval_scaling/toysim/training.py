"""Contrastive training and evaluation of the toy dual encoder."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DivergenceError, InputError
from ..metrics import contrastive_entropies, judgments_from_rank, map_at_k, ndcg_at_k, recall_at_k
from .corpus import Corpus
from .encoder import Encoder, backward, encode_features, featurize, forward


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings.

    The defaults are desk-scale: 2,000 steps, batch 64, 8 sampled negatives.
    ``eval_negatives`` is the number of sampled negatives used when scoring
    the test set; it is capped at corpus size - 1.

    Updates are plain gradient descent with a fixed learning rate. With
    ``max_grad_norm`` set, a step whose global gradient norm exceeds it is
    scaled down to that norm; without it, encoders with hidden layers tend to
    saturate or diverge at learning rates that suit the projection-only one.
    ``max_grad_norm=None`` gives unclipped descent.
    """

    steps: int = 2000
    batch_size: int = 64
    negatives_per_query: int = 8
    learning_rate: float = 1.0
    eval_every: int = 100
    seed: int = 0
    eval_negatives: int = 256
    eval_seed: int = 0
    max_grad_norm: Optional[float] = 1.0

    def __post_init__(self):
        for name in ("steps", "batch_size", "negatives_per_query", "eval_every", "eval_negatives"):
            if int(getattr(self, name)) < 1:
                raise InputError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if not (self.learning_rate >= 0 and math.isfinite(self.learning_rate)):
            raise InputError(f"learning_rate must be finite and non-negative, got {self.learning_rate}")
        if self.seed < 0 or self.eval_seed < 0:
            raise InputError("seeds must be unsigned")
        if self.max_grad_norm is not None and not self.max_grad_norm > 0:
            raise InputError(f"max_grad_norm must be positive, got {self.max_grad_norm}")


def corpus_features(corpus: Corpus, feature_dim: int) -> np.ndarray:
    return featurize(corpus.documents, feature_dim)


class _PairFeatures:
    """Feature rows and bookkeeping for a list of pairs."""

    def __init__(self, pairs, corpus, feature_dim, doc_features=None):
        if doc_features is None:
            doc_features = corpus_features(corpus, feature_dim)
        self.pos_doc = np.array([p.positive_doc_index for p in pairs], dtype=np.int64)
        if np.any(self.pos_doc < 0) or np.any(self.pos_doc >= len(corpus)):
            raise InputError("positive_doc_index outside the corpus")
        self.query = featurize([p.query_tokens for p in pairs], feature_dim)
        self.passage = doc_features[self.pos_doc].copy()
        override = [i for i, p in enumerate(pairs) if p.positive_tokens is not None]
        if override:
            self.passage[override] = featurize([pairs[i].positive_tokens for i in override],
                                               feature_dim)
        ids = {}
        self.key_id = np.array(
            [ids.setdefault((p.positive_doc_index, p.positive_tokens), len(ids)) for p in pairs],
            dtype=np.int64,
        )


def _unique_positives(key_id, pos_doc):
    """Deduplicate positives by (doc, passage text); return (rows, target column, column doc)."""
    _, rows, target = np.unique(key_id, return_index=True, return_inverse=True)
    return rows, target.reshape(-1), pos_doc[rows]


def _loss_and_grad(params, Xq, Xp_unique, target, col_doc, pos_doc, Xn):
    """Softmax cross-entropy over in-batch positives and sampled negatives.

    Other pairs' positives act as negatives; columns holding the same
    document as a query's own positive (other than its target) are masked.
    """
    B, m = Xn.shape[0], Xn.shape[1]
    U = Xp_unique.shape[0]
    F = Xq.shape[1]
    X = np.vstack([Xq, Xp_unique, Xn.reshape(B * m, F)])
    with np.errstate(over="ignore", invalid="ignore"):
        return _loss_and_grad_inner(params, X, B, U, m, target, col_doc, pos_doc)


def _loss_and_grad_inner(params, X, B, U, m, target, col_doc, pos_doc):
    # a diverging run overflows here; train() turns the non-finite loss into an error
    emb, acts = forward(params, X)
    Q, P, N = emb[:B], emb[B:B + U], emb[B + U:].reshape(B, m, -1)

    s_batch = Q @ P.T
    s_neg = np.einsum("be,bme->bm", Q, N)
    rows = np.arange(B)
    mask = col_doc[None, :] == pos_doc[:, None]
    mask[rows, target] = False
    s_batch = np.where(mask, -np.inf, s_batch)

    logits = np.hstack([s_batch, s_neg])
    shift = logits.max(axis=1, keepdims=True)
    expl = np.exp(logits - shift)
    z = expl.sum(axis=1, keepdims=True)
    losses = (np.log(z[:, 0]) + shift[:, 0]) - s_batch[rows, target]
    loss = float(losses.mean())

    g = expl / z
    g[rows, target] -= 1.0
    g /= B
    g_batch, g_neg = g[:, :U], g[:, U:]
    dQ = g_batch @ P + np.einsum("bm,bme->be", g_neg, N)
    dP = g_batch.T @ Q
    dN = g_neg[:, :, None] * Q[:, None, :]
    grad_emb = np.vstack([dQ, dP, dN.reshape(B * m, -1)])
    return loss, backward(params, acts, grad_emb)


def contrastive_loss_and_grad(encoder: Encoder, batch, negatives, corpus: Corpus):
    """Batch-mean contrastive ranking loss and its gradient for every parameter.

    ``negatives[i]`` lists sampled negative document indices for ``batch[i]``;
    all rows must have the same length. In-batch positives of the other
    pairs are appended to each query's candidate set.
    """
    batch = list(batch)
    if not batch:
        raise InputError("batch must be non-empty")
    if len(negatives) != len(batch):
        raise InputError("one negative list per pair is required")
    neg = np.asarray([list(n) for n in negatives], dtype=np.int64)
    if neg.ndim != 2 or neg.shape[1] < 1:
        raise InputError("every pair needs at least one negative, equal counts per pair")
    F = encoder.feature_dim
    feats = _PairFeatures(batch, corpus, F)
    rows, target, col_doc = _unique_positives(feats.key_id, feats.pos_doc)
    Xn = featurize([corpus.documents[j] for j in neg.ravel()], F).reshape(neg.shape[0], neg.shape[1], F)
    return _loss_and_grad(encoder.params, feats.query, feats.passage[rows], target, col_doc,
                          feats.pos_doc, Xn)


def _sample_negatives(rng, pos_doc, n_docs, m):
    """Uniform negatives without replacement per row, never the row's positive."""
    draws = rng.integers(n_docs - 1, size=(pos_doc.shape[0], m))
    draws += draws >= pos_doc[:, None]
    if m > 1:
        while True:
            srt = np.sort(draws, axis=1)
            dup_rows = np.nonzero((srt[:, 1:] == srt[:, :-1]).any(axis=1))[0]
            if dup_rows.size == 0:
                break
            for r in dup_rows:
                fresh = rng.choice(n_docs - 1, size=m, replace=False)
                draws[r] = fresh + (fresh >= pos_doc[r])
    return draws


def eval_negatives(n_queries, pos_doc, n_docs, n_negatives, seed):
    """Evaluation negatives, fixed per (seed, query index)."""
    out = np.empty((n_queries, n_negatives), dtype=np.int64)
    for i in range(n_queries):
        rng = np.random.default_rng([seed, i])
        draw = rng.choice(n_docs - 1, size=n_negatives, replace=False)
        out[i] = draw + (draw >= pos_doc[i])
    return out


class EvalSet:
    """Precomputed features and negatives for repeated test-set evaluation."""

    def __init__(self, test_pairs, corpus, feature_dim, n_negatives, seed, doc_features=None):
        test_pairs = list(test_pairs)
        if not test_pairs:
            raise InputError("test_pairs must be non-empty")
        if not 1 <= n_negatives <= len(corpus) - 1:
            raise InputError(
                f"n_negatives={n_negatives} must be between 1 and corpus size - 1 = {len(corpus) - 1}"
            )
        if doc_features is None:
            doc_features = corpus_features(corpus, feature_dim)
        self.doc_features = doc_features
        self.pairs = _PairFeatures(test_pairs, corpus, feature_dim, doc_features)
        self.negatives = eval_negatives(len(test_pairs), self.pairs.pos_doc, len(corpus),
                                        n_negatives, seed)

    def scores(self, encoder):
        doc_emb = encode_features(encoder, self.doc_features)
        q = encode_features(encoder, self.pairs.query)
        p = encode_features(encoder, self.pairs.passage)
        pos = np.einsum("be,be->b", q, p)
        neg = np.einsum("be,bme->bm", q, doc_emb[self.negatives])
        return pos, neg, q, doc_emb

    def entropy(self, encoder) -> float:
        pos, neg, _, _ = self.scores(encoder)
        values = contrastive_entropies(pos, neg)
        return math.fsum(values) / values.shape[0]


def evaluate_entropy(encoder: Encoder, test_pairs, corpus: Corpus, n_negatives: int = 256,
                     seed: int = 0) -> float:
    """Mean contrastive entropy of the positives against sampled corpus negatives."""
    return EvalSet(test_pairs, corpus, encoder.feature_dim, n_negatives, seed).entropy(encoder)


def evaluate_ranking(encoder: Encoder, test_pairs, corpus: Corpus, ks=(10,),
                     recall_k: int = 1000, subcorpus_size=None, seed: int = 0) -> dict:
    """Mean NDCG@k, MAP@k and Recall@recall_k ranking a (sub)corpus for every test query.

    Each query's own positive is scored with its pair passage text. The
    subcorpus, when requested, is a seeded uniform sample that always keeps
    the test positives.
    """
    test_pairs = list(test_pairs)
    F = encoder.feature_dim
    feats = _PairFeatures(test_pairs, corpus, F)
    candidates = np.arange(len(corpus))
    if subcorpus_size is not None and subcorpus_size < len(corpus):
        rng = np.random.default_rng(seed)
        keep = set(rng.choice(len(corpus), size=subcorpus_size, replace=False).tolist())
        keep.update(feats.pos_doc.tolist())
        candidates = np.array(sorted(keep), dtype=np.int64)
    doc_emb = encode_features(encoder, featurize([corpus.documents[i] for i in candidates], F))
    q = encode_features(encoder, feats.query)
    p = encode_features(encoder, feats.passage)
    scores = q @ doc_emb.T
    col = np.searchsorted(candidates, feats.pos_doc)
    scores[np.arange(len(test_pairs)), col] = np.einsum("be,be->b", q, p)

    depth = max(max(ks), recall_k)
    sums = {f"ndcg@{k}": 0.0 for k in ks}
    sums.update({f"map@{k}": 0.0 for k in ks})
    sums[f"recall@{recall_k}"] = 0.0
    for i in range(len(test_pairs)):
        s = scores[i]
        pos_id = candidates[col[i]]
        rank = int(np.count_nonzero(s > s[col[i]])
                   + np.count_nonzero((s == s[col[i]]) & (candidates < pos_id)))
        judg = judgments_from_rank(rank, depth)
        for k in ks:
            sums[f"ndcg@{k}"] += ndcg_at_k(judg, k)
            sums[f"map@{k}"] += map_at_k(judg, k)
        sums[f"recall@{recall_k}"] += recall_at_k(judg, recall_k)
    return {name: value / len(test_pairs) for name, value in sums.items()}


def train(encoder: Encoder, pairs, corpus: Corpus, config: TrainConfig, test_pairs,
          eval_set: EvalSet = None, doc_features=None, return_best_encoder: bool = False):
    """Minibatch gradient descent with a fixed learning rate.

    Evaluates at step 0, every ``eval_every`` steps and after the last step.
    Returns ``(encoder, best_eval_entropy, trace)`` where the encoder is the
    final one (the best-scoring checkpoint with ``return_best_encoder``) and
    ``best_eval_entropy`` is the lowest test entropy seen. The input encoder
    is not modified.
    """
    pairs = list(pairs)
    if not pairs:
        raise InputError("pairs must be non-empty")
    F = encoder.feature_dim
    if doc_features is None:
        doc_features = corpus_features(corpus, F)
    if eval_set is None:
        n_neg = min(config.eval_negatives, len(corpus) - 1)
        eval_set = EvalSet(test_pairs, corpus, F, n_neg, config.eval_seed, doc_features)
    train_feats = _PairFeatures(pairs, corpus, F, doc_features)
    n_docs = len(corpus)
    m = config.negatives_per_query
    if m > n_docs - 1:
        raise InputError(f"negatives_per_query={m} exceeds corpus size - 1")

    rng = np.random.default_rng(config.seed)
    enc = encoder.copy()
    params = enc.params
    trace = [(0, eval_set.entropy(enc))]
    best_enc = enc.copy() if return_best_encoder else None
    for step in range(1, config.steps + 1):
        idx = rng.integers(len(pairs), size=config.batch_size)
        pos_doc = train_feats.pos_doc[idx]
        neg = _sample_negatives(rng, pos_doc, n_docs, m)
        rows, target, col_doc = _unique_positives(train_feats.key_id[idx], pos_doc)
        loss, grads = _loss_and_grad(params, train_feats.query[idx],
                                     train_feats.passage[idx[rows]], target, col_doc, pos_doc,
                                     doc_features[neg])
        if not math.isfinite(loss):
            raise DivergenceError(f"non-finite training loss at step {step}", step=step)
        if config.learning_rate:
            lr = config.learning_rate
            if config.max_grad_norm is not None:
                norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads))
                if norm > config.max_grad_norm:
                    lr *= config.max_grad_norm / norm
            for p, g in zip(params, grads):
                p -= lr * g
        if step % config.eval_every == 0 or step == config.steps:
            value = eval_set.entropy(enc)
            if return_best_encoder and value < min(v for _, v in trace):
                best_enc = enc.copy()
            trace.append((step, value))
    best = min(value for _, value in trace)
    return (best_enc if return_best_encoder else enc), best, trace
