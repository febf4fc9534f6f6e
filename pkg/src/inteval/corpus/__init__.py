"""Corpus construction: documents, labeling filters, balancing, fixtures."""

from .balance import CorpusSplit, balance_corpus, primary_article
from .documents import (
    ArticleOutcome,
    CaseDocument,
    ExclusionReason,
    Label,
    LabelValue,
    ingest,
    load_documents,
    save_documents,
)
from .filters import (
    ClauseAnalysis,
    FilterRule,
    RuleEffect,
    analyze_conclusion,
    default_rules,
    label_all,
    label_case,
    load_rules,
)
from .fixtures import FixtureCorpus, FixtureSpec, fixture_label, make_fixture_corpus

__all__ = [
    "ArticleOutcome",
    "CaseDocument",
    "ClauseAnalysis",
    "CorpusSplit",
    "ExclusionReason",
    "FilterRule",
    "FixtureCorpus",
    "FixtureSpec",
    "Label",
    "LabelValue",
    "RuleEffect",
    "analyze_conclusion",
    "balance_corpus",
    "default_rules",
    "fixture_label",
    "ingest",
    "label_all",
    "label_case",
    "load_documents",
    "load_rules",
    "make_fixture_corpus",
    "primary_article",
    "save_documents",
]
