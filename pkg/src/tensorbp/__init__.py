"""Semi-supervised article classification: CP tensor embeddings, k-NN graphs, linearized belief propagation."""

__version__ = "0.1.0"

from .corpus import (
    Article,
    Corpus,
    PreprocessConfig,
    Vocabulary,
    build_vocabulary,
    downsample_balance,
    load_corpus,
    preprocess,
    preprocess_corpus,
)
from .cpd import CpConfig, FactorMatrices, cp_als, mttkrp, reconstruction_residual
from .evaluation import (
    MetricReport,
    SplitSpec,
    make_label_mask,
    score,
    subsample_sensitivity,
)
from .fabp import (
    BeliefState,
    FabpConfig,
    choose_homophily,
    classify,
    compute_coefficients,
    propagate,
)
from .graph import GraphConfig, KnnGraph, degrees, knn_graph, l2_distance
from .pipeline import PipelineSettings, run_pipeline
from .tensor import SparseTensor, TensorConfig, build_cooccurrence_tensor, build_tfidf

__all__ = [
    "Article",
    "BeliefState",
    "Corpus",
    "CpConfig",
    "FabpConfig",
    "FactorMatrices",
    "GraphConfig",
    "KnnGraph",
    "MetricReport",
    "PipelineSettings",
    "PreprocessConfig",
    "SparseTensor",
    "SplitSpec",
    "TensorConfig",
    "Vocabulary",
    "build_cooccurrence_tensor",
    "build_tfidf",
    "build_vocabulary",
    "choose_homophily",
    "classify",
    "compute_coefficients",
    "cp_als",
    "degrees",
    "downsample_balance",
    "knn_graph",
    "l2_distance",
    "load_corpus",
    "make_label_mask",
    "mttkrp",
    "preprocess",
    "preprocess_corpus",
    "propagate",
    "reconstruction_residual",
    "run_pipeline",
    "score",
    "subsample_sensitivity",
]
