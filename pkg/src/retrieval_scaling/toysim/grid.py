"""Grid experiments over encoder architecture, data size and seed."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from ..errors import ComputationError, InputError
from .corpus import ANNOTATION_METHODS, corrupt_labels, generate_corpus, ict_pairs
from .encoder import init_encoder, param_count
from .training import EvalSet, TrainConfig, corpus_features, evaluate_ranking, train

RUN_RECORD_HEADER = ("model_size", "data_size", "annotation_method", "seed", "contrastive_entropy")


@dataclass(frozen=True)
class RunRecord:
    model_size: int
    data_size: int
    annotation_method: str
    seed: int
    contrastive_entropy: float
    # diagnostics, not part of the CSV
    hidden_widths: tuple = field(default=(), compare=False)
    ranking: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        if self.model_size < 1 or self.data_size < 1:
            raise InputError("model_size and data_size must be at least 1")
        if not self.contrastive_entropy >= 0:
            raise InputError(f"entropy must be non-negative, got {self.contrastive_entropy}")
        if self.annotation_method not in ANNOTATION_METHODS:
            raise InputError(f"unknown annotation method {self.annotation_method!r}")


@dataclass(frozen=True)
class CorpusConfig:
    vocab_size: int = 1024
    topic_count: int = 64
    n_docs: int = 6000
    doc_len_range: tuple = (16, 64)
    seed: int = 7
    n_test: int = 1000
    span_len: int = 8
    remove_span: bool = True
    feature_dim: int = 128
    embedding_dim: int = 16
    eval_subcorpus: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "doc_len_range", tuple(int(v) for v in self.doc_len_range))
        if self.n_test < 1 or self.n_test >= self.n_docs:
            raise InputError(f"n_test must lie in [1, n_docs), got {self.n_test}")


@dataclass(frozen=True)
class AnnotationConfig:
    """``method`` is ``ict`` or ``external``; external pairs are given in ``pairs``."""

    method: str = "ict"
    noise_rate: float = 0.0
    pairs: Optional[tuple] = None

    def __post_init__(self):
        if self.method not in ("ict", "external"):
            raise InputError(f"annotation method must be 'ict' or 'external', got {self.method!r}")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise InputError(f"noise_rate must lie in [0, 1], got {self.noise_rate}")
        if self.method == "external" and not self.pairs:
            raise InputError("external annotation needs a non-empty pair list")


class GridError(ComputationError):
    """A grid cell failed. ``records`` holds every cell that did complete."""

    def __init__(self, message, cell=None, records=None):
        super().__init__(message)
        self.cell = cell
        self.records = records or []


def derive_seed(master: int, *coords: int) -> int:
    """Independent 32-bit seed for a cell, from the master seed and cell coordinates."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(c) for c in coords))
    return int(ss.generate_state(1)[0])


# stream identifiers for derive_seed
_PAIRS, _NOISE, _INIT, _TRAIN, _SPLIT = range(5)


def arch_key(hidden_widths) -> tuple:
    widths = tuple(int(w) for w in hidden_widths)
    return (len(widths), *widths)


class Simulation:
    """Shared corpus, held-out test pairs and evaluation negatives for a grid."""

    def __init__(self, corpus_config: CorpusConfig, train_config: TrainConfig):
        cc = corpus_config
        self.corpus_config = cc
        self.train_config = train_config
        self.corpus = generate_corpus(cc.vocab_size, cc.topic_count, cc.n_docs, cc.doc_len_range,
                                      cc.seed)
        rng = np.random.default_rng(derive_seed(cc.seed, _SPLIT))
        perm = rng.permutation(len(self.corpus))
        self.test_pool = np.sort(perm[:cc.n_test])
        self.train_pool = np.sort(perm[cc.n_test:])
        self.test_pairs = ict_pairs(self.corpus, cc.n_test, cc.span_len, cc.remove_span,
                                    seed=derive_seed(cc.seed, _PAIRS), pool=self.test_pool)
        self.doc_features = corpus_features(self.corpus, cc.feature_dim)
        n_neg = min(train_config.eval_negatives, len(self.corpus) - 1)
        self.eval_set = EvalSet(self.test_pairs, self.corpus, cc.feature_dim, n_neg,
                                train_config.eval_seed, self.doc_features)

    def training_pairs(self, n_pairs: int, seed: int, annotation: AnnotationConfig) -> list:
        """The first ``n_pairs`` of the seed's pair order, so sizes nest as prefixes."""
        cc = self.corpus_config
        if annotation.method == "external":
            pool = list(annotation.pairs)
            if n_pairs > len(pool):
                raise InputError(f"data size {n_pairs} exceeds the {len(pool)} external pairs")
            return pool[:n_pairs]
        if n_pairs > len(self.train_pool):
            raise InputError(f"data size {n_pairs} exceeds the {len(self.train_pool)} training documents")
        full = ict_pairs(self.corpus, len(self.train_pool), cc.span_len, cc.remove_span,
                         seed=derive_seed(seed, _PAIRS), pool=self.train_pool)
        if annotation.noise_rate > 0:
            full = corrupt_labels(full, annotation.noise_rate, self.corpus,
                                  seed=derive_seed(seed, _NOISE))
        return full[:n_pairs]

    def run_cell(self, hidden_widths, data_size: int, seed: int, annotation: AnnotationConfig,
                 ranking: bool = False):
        """Train and evaluate one cell; returns (RunRecord, best-checkpoint encoder).

        Ranking metrics, when requested, are computed on the same checkpoint
        that produced the recorded entropy.
        """
        cc = self.corpus_config
        key = arch_key(hidden_widths)
        pairs = self.training_pairs(data_size, seed, annotation)
        encoder = init_encoder(cc.feature_dim, hidden_widths, cc.embedding_dim,
                               seed=derive_seed(seed, _INIT, *key))
        config = _with_seed(self.train_config, derive_seed(seed, _TRAIN, data_size, *key))
        trained, best, _ = train(encoder, pairs, self.corpus, config, self.test_pairs,
                                 eval_set=self.eval_set, doc_features=self.doc_features,
                                 return_best_encoder=True)
        if annotation.method == "external":
            method = "external"
        else:
            method = "noisy_ict" if annotation.noise_rate > 0 else "ict"
        metrics = None
        if ranking:
            metrics = evaluate_ranking(trained, self.test_pairs, self.corpus,
                                       subcorpus_size=cc.eval_subcorpus,
                                       seed=derive_seed(cc.seed, _SPLIT, 1))
        record = RunRecord(model_size=param_count(encoder), data_size=len(pairs),
                           annotation_method=method, seed=int(seed), contrastive_entropy=best,
                           hidden_widths=tuple(int(w) for w in hidden_widths), ranking=metrics)
        return record, trained


def _with_seed(config: TrainConfig, seed: int) -> TrainConfig:
    values = {f.name: getattr(config, f.name) for f in fields(config)}
    values["seed"] = seed
    return TrainConfig(**values)


def sort_records(records) -> list:
    return sorted(records, key=lambda r: (r.model_size, arch_key(r.hidden_widths), r.data_size,
                                          r.seed, r.annotation_method))


def run_grid(corpus_config: CorpusConfig, architectures, data_sizes, seeds,
             train_config: TrainConfig = TrainConfig(),
             annotation: AnnotationConfig = AnnotationConfig(),
             ranking: bool = False, simulation: Optional[Simulation] = None) -> list:
    """Train one encoder per (architecture, data size, seed) cell.

    All cells share the corpus, the held-out test pairs and the evaluation
    negatives. Records come back sorted by (model size, data size, seed).
    If any cell fails, the others still run and a :class:`GridError`
    carrying the completed records is raised at the end.
    """
    architectures = [tuple(a) for a in architectures]
    data_sizes = [int(d) for d in data_sizes]
    seeds = [int(s) for s in seeds]
    if not architectures or not data_sizes or not seeds:
        raise InputError("architectures, data_sizes and seeds must be non-empty")
    if any(d < 1 for d in data_sizes) or any(s < 0 for s in seeds):
        raise InputError("data sizes must be positive and seeds unsigned")
    sim = simulation or Simulation(corpus_config, train_config)

    records, failures = [], []
    for arch in architectures:
        for d in sorted(set(data_sizes)):
            for s in sorted(set(seeds)):
                try:
                    records.append(sim.run_cell(arch, d, s, annotation, ranking=ranking)[0])
                except (ComputationError, InputError) as exc:
                    failures.append(((list(arch), d, s), exc))
    records = sort_records(records)
    if failures:
        cell, exc = failures[0]
        raise GridError(f"{len(failures)} grid cell(s) failed; first: architecture={cell[0]}, "
                        f"data_size={cell[1]}, seed={cell[2]}: {exc}", cell=cell, records=records)
    return records


def format_float(x: float) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(x))


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RUN_RECORD_HEADER)
    for r in records:
        writer.writerow([r.model_size, r.data_size, r.annotation_method, r.seed,
                         format_float(r.contrastive_entropy)])
    return buf.getvalue()


def records_from_csv(text: str) -> list:
    reader = csv.reader(io.StringIO(text))
    try:
        header = tuple(next(reader))
    except StopIteration:
        raise InputError("empty run-record CSV") from None
    if header != RUN_RECORD_HEADER:
        raise InputError(f"unexpected run-record header {header}; expected {RUN_RECORD_HEADER}")
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(RUN_RECORD_HEADER):
            raise InputError(f"line {lineno}: expected {len(RUN_RECORD_HEADER)} fields, got {len(row)}")
        try:
            entropy = float(row[4])
            if not math.isfinite(entropy):
                raise ValueError("non-finite entropy")
            records.append(RunRecord(model_size=int(row[0]), data_size=int(row[1]),
                                     annotation_method=row[2], seed=int(row[3]),
                                     contrastive_entropy=entropy))
        except ValueError as exc:
            raise InputError(f"line {lineno}: {exc}") from exc
    return records


def mean_by(records, key) -> dict:
    """Mean entropy over records grouped by ``key(record)``."""
    groups = {}
    for r in records:
        groups.setdefault(key(r), []).append(r.contrastive_entropy)
    return {k: math.fsum(v) / len(v) for k, v in sorted(groups.items())}
