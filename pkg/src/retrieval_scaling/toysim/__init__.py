"""Desk-scale dense retrieval simulator producing (model size, data size, loss) records."""

from .corpus import (
    Corpus,
    TrainingPair,
    corrupt_labels,
    generate_corpus,
    ict_pairs,
    load_external_pairs,
    span_pair,
)
from .encoder import Encoder, encode, featurize, init_encoder, param_count
from .grid import (
    AnnotationConfig,
    CorpusConfig,
    GridError,
    RunRecord,
    Simulation,
    records_from_csv,
    records_to_csv,
    run_grid,
)
from .training import (
    TrainConfig,
    contrastive_loss_and_grad,
    evaluate_entropy,
    evaluate_ranking,
    train,
)

__all__ = [
    "AnnotationConfig",
    "Corpus",
    "CorpusConfig",
    "Encoder",
    "GridError",
    "RunRecord",
    "Simulation",
    "TrainConfig",
    "TrainingPair",
    "contrastive_loss_and_grad",
    "corrupt_labels",
    "encode",
    "evaluate_entropy",
    "evaluate_ranking",
    "featurize",
    "generate_corpus",
    "ict_pairs",
    "init_encoder",
    "load_external_pairs",
    "param_count",
    "records_from_csv",
    "records_to_csv",
    "run_grid",
    "span_pair",
    "train",
]
