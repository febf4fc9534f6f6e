"""Chunked transformer classifier and its masking/introspection surface."""

from .base import (
    ATTENTION,
    GRADIENTS,
    PREDICT,
    BlackBoxHarness,
    ClassifierOutput,
    Harness,
    Introspection,
    TinyTransformerHarness,
    stub_harness,
)
from .chunking import ChunkedInput, MaskMode, MaskSpec, chunk_document, keep_only, remove
from .metrics import F1Breakdown, f1_breakdown, macro_f1
from .model import AttentionTrace, ModelConfig, TinyTransformer
from .tokenizer import PAD_TOKEN, UNK_TOKEN, Vocabulary, build_vocabulary
from .training import (
    EvalReport,
    TrainConfig,
    class_index,
    evaluate_classifier,
    fit_classifier,
    load_harness,
    save_harness,
)

__all__ = [
    "ATTENTION",
    "GRADIENTS",
    "PREDICT",
    "AttentionTrace",
    "BlackBoxHarness",
    "ChunkedInput",
    "ClassifierOutput",
    "EvalReport",
    "F1Breakdown",
    "Harness",
    "Introspection",
    "MaskMode",
    "MaskSpec",
    "ModelConfig",
    "PAD_TOKEN",
    "TinyTransformer",
    "TinyTransformerHarness",
    "TrainConfig",
    "UNK_TOKEN",
    "Vocabulary",
    "build_vocabulary",
    "chunk_document",
    "class_index",
    "evaluate_classifier",
    "f1_breakdown",
    "fit_classifier",
    "keep_only",
    "load_harness",
    "macro_f1",
    "remove",
    "save_harness",
    "stub_harness",
]
