"""sidrec: Semantic-ID generative recommendation.

Learn discrete item codes from content embeddings via residual vector
quantization, compose unimodal or fused token sequences, train a small
encoder-decoder generator over user histories, and evaluate next-item
generation with trie-constrained beam search — including a text-as-vision
route that renders item descriptions to images before encoding.
"""

__version__ = "0.1.0"

from . import corpus, embedstore, fusion, metrics, renderkit, rvq, seq2seq, synthetic
from .config import ExperimentConfig
from .pipeline import Pipeline, emit_report, run_experiment, run_resolution_harness

__all__ = [
    "ExperimentConfig",
    "Pipeline",
    "corpus",
    "embedstore",
    "emit_report",
    "fusion",
    "metrics",
    "renderkit",
    "run_experiment",
    "run_resolution_harness",
    "rvq",
    "seq2seq",
    "synthetic",
]
