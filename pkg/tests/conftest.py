"""Shared fixtures: a planted-cue corpus and a classifier trained on it.

Training runs once per session; every module that needs a competent model
(attribution sanity, extraction, faithfulness, acceptance) reuses it.
"""

from __future__ import annotations

from dataclasses import dataclass

import pytest

from inteval.corpus import (
    CorpusSplit,
    FixtureCorpus,
    FixtureSpec,
    balance_corpus,
    make_fixture_corpus,
)
from inteval.corpus.documents import CaseDocument
from inteval.harness import (
    EvalReport,
    TinyTransformerHarness,
    TrainConfig,
    fit_classifier,
)

FIXTURE_SEED = 7
TRAIN_CONFIG = TrainConfig(epochs=40, lr=5e-3, d_model=48, d_ff=96, seed=0)


@dataclass(frozen=True)
class TrainedSetup:
    corpus: FixtureCorpus
    docs: dict[str, CaseDocument]
    split: CorpusSplit
    cfg: TrainConfig
    harness: TinyTransformerHarness
    report: EvalReport


@pytest.fixture(scope="session")
def planted_corpus() -> FixtureCorpus:
    return make_fixture_corpus(FixtureSpec(n_documents=150), seed=FIXTURE_SEED)


@pytest.fixture(scope="session")
def planted_split(planted_corpus: FixtureCorpus) -> CorpusSplit:
    return balance_corpus(planted_corpus.labeled(), seed=FIXTURE_SEED)


@pytest.fixture(scope="session")
def trained(
    planted_corpus: FixtureCorpus, planted_split: CorpusSplit
) -> TrainedSetup:
    docs = planted_corpus.by_id()
    harness, report = fit_classifier(
        docs, planted_corpus.labels, planted_split, TRAIN_CONFIG
    )
    return TrainedSetup(
        corpus=planted_corpus,
        docs=docs,
        split=planted_split,
        cfg=TRAIN_CONFIG,
        harness=harness,
        report=report,
    )
