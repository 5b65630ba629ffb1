"""One pipeline for both embedding arms: embed -> k-NN graph -> propagate -> score."""

from __future__ import annotations

import contextlib
import time
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, Vocabulary
from .cpd import CpConfig, FactorMatrices, cp_als
from .evaluation import MetricReport, SplitSpec, make_label_mask, score, truth_vector
from .fabp import BeliefState, FabpConfig, classify, propagate
from .graph import GraphConfig, KnnGraph, knn_graph
from .tensor import TensorConfig, build_cooccurrence_tensor, build_tfidf

CP = "cp"
TFIDF = "tfidf"
EMBEDDINGS = (CP, TFIDF)


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the original error."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage} stage failed: {cause}")
        self.stage = stage
        self.cause = cause


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def stage_seeds(root_seed: int) -> dict[str, int]:
    """Fan one root seed out into independent per-stage seeds."""
    children = np.random.SeedSequence(int(root_seed)).spawn(3)
    names = ("cp", "mask", "balance")
    return {n: int(c.generate_state(1, dtype=np.uint32)[0]) for n, c in zip(names, children)}


@dataclass(frozen=True)
class PipelineSettings:
    tensor: TensorConfig = field(default_factory=TensorConfig)
    cp: CpConfig = field(default_factory=CpConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    fabp: FabpConfig = field(default_factory=FabpConfig)
    embedding: str = CP

    def __post_init__(self):
        if self.embedding not in EMBEDDINGS:
            raise ValueError(f"embedding must be one of {EMBEDDINGS}, got {self.embedding!r}")


@dataclass
class Embedding:
    points: np.ndarray
    factors: FactorMatrices | None = None
    history: list[float] | None = None
    nnz: int = 0


@dataclass
class PipelineResult:
    embedding: Embedding
    graph: KnnGraph
    state: BeliefState
    predictions: np.ndarray
    ties: int
    labels: np.ndarray
    held_out: np.ndarray
    report: MetricReport | None
    timings_ms: dict[str, float]


def embed(corpus: Corpus, vocab: Vocabulary, settings: PipelineSettings) -> Embedding:
    if settings.embedding == TFIDF:
        with stage("tensor"):
            tfidf = build_tfidf(corpus, vocab)
        return Embedding(points=tfidf.toarray(), nnz=tfidf.nnz)
    with stage("tensor"):
        tensor = build_cooccurrence_tensor(corpus, vocab, settings.tensor)
    with stage("decompose"):
        factors, history = cp_als(tensor, settings.cp)
    return Embedding(points=factors.C, factors=factors, history=history, nnz=tensor.nnz)


def infer(points, labels, graph_config: GraphConfig, fabp_config: FabpConfig):
    with stage("graph"):
        graph = knn_graph(points, graph_config)
    with stage("propagate"):
        state = propagate(graph, labels, fabp_config)
        predictions, ties = classify(state)
    return graph, state, predictions, ties


def run_pipeline(
    corpus: Corpus,
    vocab: Vocabulary,
    settings: PipelineSettings,
    split: SplitSpec | None = None,
    labels=None,
    embedding: Embedding | None = None,
) -> PipelineResult:
    """Run every stage after preprocessing.

    Either ``split`` (labels revealed at random from ground truth) or an
    explicit ``labels`` vector in ``{-1, 0, 1}`` must be given. With explicit
    labels, held-out articles are the zero entries, scored where ground
    truth is known. A precomputed ``embedding`` skips the embed stages.
    """
    timings = {}
    t0 = time.perf_counter()
    if embedding is None:
        embedding = embed(corpus, vocab, settings)
    timings["embed"] = (time.perf_counter() - t0) * 1e3

    with stage("split"):
        if split is not None:
            labels, held_out = make_label_mask(corpus, split)
        elif labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            held_out = np.flatnonzero(labels == 0)
        else:
            raise ValueError("need a split spec or an explicit label vector")

    t1 = time.perf_counter()
    graph, state, predictions, ties = infer(embedding.points, labels, settings.graph, settings.fabp)
    timings["graph_propagate"] = (time.perf_counter() - t1) * 1e3

    report = None
    with stage("score"):
        known = np.array([lab in ("real", "fake") for lab in corpus.labels])
        scored = held_out[known[held_out]] if held_out.size else held_out
        if scored.size:
            truth = np.zeros(len(corpus), dtype=np.int64)
            truth[known] = truth_vector(corpus.subset(np.flatnonzero(known)))
            report = score(predictions, truth, scored)
    timings["total"] = (time.perf_counter() - t0) * 1e3
    return PipelineResult(embedding, graph, state, predictions, ties, labels, held_out, report, timings)
