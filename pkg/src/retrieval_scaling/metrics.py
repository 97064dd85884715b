"""Contrastive entropy, top-k ranking metrics and metric correlation.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import InputError

__all__ = [
    "EvalSample",
    "RankedJudgments",
    "CorrelationReport",
    "inner_product_score",
    "contrastive_entropy",
    "contrastive_entropies",
    "mean_contrastive_entropy",
    "rank_order",
    "judgments_from_scores",
    "judgments_from_rank",
    "ndcg_at_k",
    "map_at_k",
    "recall_at_k",
    "correlate",
]

# fraction of the metric range a single step must exceed to be reported
CRITICAL_JUMP_FRACTION = 0.25


@dataclass(frozen=True)
class EvalSample:
    """Score of the annotated positive and of the sampled negatives for one query."""

    positive_score: float
    negative_scores: tuple = field(default_factory=tuple)

    def __post_init__(self):
        negs = tuple(float(s) for s in self.negative_scores)
        object.__setattr__(self, "negative_scores", negs)
        object.__setattr__(self, "positive_score", float(self.positive_score))
        if not negs:
            raise InputError("EvalSample needs at least one negative score")
        if not math.isfinite(self.positive_score) or not all(map(math.isfinite, negs)):
            raise InputError("EvalSample scores must be finite")


@dataclass(frozen=True)
class RankedJudgments:
    """Binary relevance labels in ranked order.

    ``total_relevant`` counts relevant items in the whole collection, which
    can exceed the number of ones in the (possibly truncated) list.
    """

    relevance: tuple
    total_relevant: int

    def __post_init__(self):
        rel = tuple(int(r) for r in self.relevance)
        if any(r not in (0, 1) for r in rel):
            raise InputError("relevance labels must be 0 or 1")
        object.__setattr__(self, "relevance", rel)
        if self.total_relevant < sum(rel):
            raise InputError(
                f"total_relevant={self.total_relevant} is below the {sum(rel)} "
                "relevant items present in the list"
            )


@dataclass(frozen=True)
class CorrelationReport:
    pearson: float
    spearman: float
    n_points: int
    critical_entropy_hint: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "pearson": self.pearson,
            "spearman": self.spearman,
            "n_points": self.n_points,
            "critical_entropy_hint": self.critical_entropy_hint,
        }


def inner_product_score(query_vec, doc_vec) -> float:
    q = np.asarray(query_vec, dtype=float)
    d = np.asarray(doc_vec, dtype=float)
    if q.ndim != 1 or d.ndim != 1:
        raise InputError("score vectors must be one-dimensional")
    if q.shape[0] != d.shape[0]:
        raise InputError(
            f"dimension mismatch: query has length {q.shape[0]}, document has length {d.shape[0]}"
        )
    if q.shape[0] == 0:
        raise InputError("score vectors must be non-empty")
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(d))):
        raise InputError("score vectors must be finite")
    return float(q @ d)


def _entropy_from_scores(positive: float, negatives: np.ndarray) -> float:
    shift = max(positive, float(negatives.max()))
    log_norm = math.log(math.exp(positive - shift) + float(np.exp(negatives - shift).sum()))
    return max(0.0, log_norm - (positive - shift))


def contrastive_entropy(sample: EvalSample) -> float:
    """Negative log softmax probability of the positive among positive + negatives.

    Natural log; the exponentials are computed after subtracting the largest
    score so magnitudes around 1e4 stay finite.
    """
    if not isinstance(sample, EvalSample):
        raise InputError("contrastive_entropy expects an EvalSample")
    return _entropy_from_scores(sample.positive_score, np.asarray(sample.negative_scores))


def contrastive_entropies(positive_scores, negative_scores) -> np.ndarray:
    """Vectorised contrastive entropy.

    ``positive_scores`` has shape (n,), ``negative_scores`` shape (n, m).
    """
    pos = np.asarray(positive_scores, dtype=float)
    neg = np.asarray(negative_scores, dtype=float)
    if neg.ndim != 2 or pos.ndim != 1 or neg.shape[0] != pos.shape[0]:
        raise InputError("expected positives of shape (n,) and negatives of shape (n, m)")
    if neg.shape[1] == 0:
        raise InputError("at least one negative score is required per query")
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(neg))):
        raise InputError("scores must be finite")
    shift = np.maximum(pos, neg.max(axis=1))
    log_norm = np.log(np.exp(pos - shift) + np.exp(neg - shift[:, None]).sum(axis=1))
    return np.maximum(0.0, log_norm - (pos - shift))


def mean_contrastive_entropy(samples: Sequence[EvalSample]) -> float:
    if len(samples) == 0:
        raise InputError("mean_contrastive_entropy needs at least one sample")
    return float(math.fsum(contrastive_entropy(s) for s in samples) / len(samples))


def rank_order(scores, doc_ids=None) -> np.ndarray:
    """Indices sorting by score descending, ties by document id ascending."""
    scores = np.asarray(scores, dtype=float)
    if doc_ids is None:
        doc_ids = np.arange(scores.shape[0])
    # lexsort sorts by the last key first
    return np.lexsort((np.asarray(doc_ids), -scores))


def judgments_from_scores(scores, relevant_ids, doc_ids=None, depth=None) -> RankedJudgments:
    """Rank a candidate list and mark which positions hold relevant documents."""
    scores = np.asarray(scores, dtype=float)
    if doc_ids is None:
        doc_ids = np.arange(scores.shape[0])
    doc_ids = np.asarray(doc_ids)
    order = rank_order(scores, doc_ids)
    if depth is not None:
        order = order[:depth]
    relevant = set(relevant_ids)
    rel = tuple(int(d in relevant) for d in doc_ids[order].tolist())
    return RankedJudgments(relevance=rel, total_relevant=len(relevant))


def judgments_from_rank(rank: int, depth: int) -> RankedJudgments:
    """Judgments for a query whose single relevant item sits at 0-based ``rank``."""
    rel = [0] * depth
    if rank < depth:
        rel[rank] = 1
    return RankedJudgments(relevance=tuple(rel), total_relevant=1)


def _check_k(judgments: RankedJudgments, k: int) -> None:
    if int(k) != k or k < 1:
        raise InputError(f"k must be a positive integer, got {k}")
    if judgments.total_relevant == 0:
        raise InputError("metric undefined for a query with no relevant documents")


def ndcg_at_k(judgments: RankedJudgments, k: int) -> float:
    _check_k(judgments, k)
    top = judgments.relevance[:k]
    dcg = sum(1.0 / math.log2(rank + 2) for rank, r in enumerate(top) if r)
    ideal = sum(1.0 / math.log2(rank + 2) for rank in range(min(k, judgments.total_relevant)))
    return dcg / ideal


def map_at_k(judgments: RankedJudgments, k: int) -> float:
    _check_k(judgments, k)
    hits = 0
    precision_sum = 0.0
    for rank, r in enumerate(judgments.relevance[:k], start=1):
        if r:
            hits += 1
            precision_sum += hits / rank
    return precision_sum / min(k, judgments.total_relevant)


def recall_at_k(judgments: RankedJudgments, k: int) -> float:
    _check_k(judgments, k)
    return sum(judgments.relevance[:k]) / judgments.total_relevant


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    r = float((xc @ yc) / math.sqrt(float(xc @ xc) * float(yc @ yc)))
    return min(1.0, max(-1.0, r))


def correlate(entropies, metric_values) -> CorrelationReport:
    """Pearson and Spearman correlation between paired entropy/metric values.

    Also reports the entropy where the metric changes most between
    neighbouring points (sorted by entropy), if that single step covers more
    than a quarter of the metric's range. The hint is the midpoint of the two
    entropies bracketing the step.
    """
    x = np.asarray(entropies, dtype=float)
    y = np.asarray(metric_values, dtype=float)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise InputError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.shape[0] < 2:
        raise InputError("correlate needs at least two points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InputError("correlate needs finite values")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise InputError("correlate needs non-constant inputs (zero variance)")

    pearson = _pearson(x, y)
    spearman = _pearson(rankdata(x), rankdata(y))

    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    steps = np.abs(np.diff(ys))
    hint = None
    if steps.size:
        i = int(np.argmax(steps))
        if steps[i] > CRITICAL_JUMP_FRACTION * np.ptp(y):
            hint = float((xs[i] + xs[i + 1]) / 2)
    return CorrelationReport(pearson=pearson, spearman=spearman, n_points=int(x.shape[0]),
                             critical_entropy_hint=hint)
