"""tf-idf comparison arm: the same graph/propagation/scoring path fed with tf-idf rows."""

from __future__ import annotations

from dataclasses import replace

from .corpus import Corpus, Vocabulary
from .evaluation import MetricReport, SplitSpec
from .fabp import FabpConfig
from .graph import GraphConfig
from .pipeline import TFIDF, PipelineSettings, run_pipeline


def run_tfidf_pipeline(
    corpus: Corpus,
    vocab: Vocabulary,
    graph_config: GraphConfig,
    fabp_config: FabpConfig,
    split: SplitSpec,
) -> MetricReport:
    settings = PipelineSettings(graph=graph_config, fabp=fabp_config, embedding=TFIDF)
    return run_pipeline(corpus, vocab, settings, split=split).report


def tfidf_settings(settings: PipelineSettings) -> PipelineSettings:
    return replace(settings, embedding=TFIDF)
