"""Synthetic desk-scale corpora with planted rationale cues.

Positive documents contain one contiguous cue phrase drawn from a reserved
vocabulary; negatives never contain any cue token. The gold label is a pure
function of the planted span, which makes these corpora exact oracles for
extraction and faithfulness experiments: the cue offsets ship with the
corpus.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date

import numpy as np

from ..errors import CorpusError
from ..rationales import Span
from .documents import ArticleOutcome, CaseDocument, Label, LabelValue


@dataclass(frozen=True)
class FixtureSpec:
    """Recipe for a planted-cue corpus.

    ``doc_length`` bounds are inclusive. ``cue_tokens`` is the exact phrase
    planted into every positive document; fillers are drawn uniformly from a
    disjoint vocabulary of ``filler_vocab`` words.
    """

    n_documents: int = 100
    doc_length: tuple[int, int] = (160, 260)
    filler_vocab: int = 80
    cue_tokens: tuple[str, ...] = (
        "unlawful",
        "detention",
        "without",
        "judicial",
        "review",
        "breached",
        "applicant",
        "rights",
    )
    positive_fraction: float = 0.5
    articles: tuple[str, ...] = ("6", "8")
    years: tuple[int, int] = (2015, 2022)

    def __post_init__(self) -> None:
        lo, hi = self.doc_length
        if lo > hi or lo < 1:
            raise CorpusError(f"bad document length range {self.doc_length}")
        if len(self.cue_tokens) > lo:
            raise CorpusError(
                f"cue of {len(self.cue_tokens)} tokens cannot fit in "
                f"documents of minimum length {lo}"
            )
        if not 0.0 <= self.positive_fraction <= 1.0:
            raise CorpusError("positive_fraction must be in [0, 1]")


@dataclass
class FixtureCorpus:
    documents: list[CaseDocument]
    labels: dict[str, Label]
    cues: dict[str, Span] = field(default_factory=dict)

    def labeled(self) -> list[tuple[CaseDocument, Label]]:
        return [(d, self.labels[d.case_id]) for d in self.documents]

    def by_id(self) -> dict[str, CaseDocument]:
        return {d.case_id: d for d in self.documents}

    def positives(self) -> list[CaseDocument]:
        return [
            d
            for d in self.documents
            if self.labels[d.case_id].value is LabelValue.VIOLATION
        ]


def _filler_words(n: int) -> list[str]:
    return [f"w{i:03d}" for i in range(n)]


def fixture_label(tokens: list[str], cue_tokens: tuple[str, ...]) -> LabelValue:
    """The corpus label function: violation iff the cue phrase occurs intact."""
    cue = list(cue_tokens)
    k = len(cue)
    for i in range(len(tokens) - k + 1):
        if tokens[i : i + k] == cue:
            return LabelValue.VIOLATION
    return LabelValue.NO_VIOLATION


def make_fixture_corpus(spec: FixtureSpec, seed: int) -> FixtureCorpus:
    """Deterministically generate a planted-cue corpus.

    The same (spec, seed) pair always produces identical documents, labels,
    and cue offsets.
    """
    rng = np.random.default_rng(seed)
    fillers = np.array(_filler_words(spec.filler_vocab))
    cue = list(spec.cue_tokens)
    k = len(cue)
    n_pos = int(round(spec.n_documents * spec.positive_fraction))

    documents: list[CaseDocument] = []
    labels: dict[str, Label] = {}
    cues: dict[str, Span] = {}
    lo, hi = spec.doc_length
    for i in range(spec.n_documents):
        case_id = f"fx-{i:04d}"
        length = int(rng.integers(lo, hi + 1))
        tokens = list(fillers[rng.integers(0, len(fillers), size=length)])
        positive = i < n_pos
        article = spec.articles[int(rng.integers(0, len(spec.articles)))]
        year = int(rng.integers(spec.years[0], spec.years[1] + 1))
        month = int(rng.integers(1, 13))
        day = int(rng.integers(1, 29))
        if positive:
            offset = int(rng.integers(0, length - k + 1))
            tokens[offset : offset + k] = cue
            cues[case_id] = Span(offset, offset + k)
            conclusion = f"Violation of Article {article}"
            outcome = ArticleOutcome.VIOLATED
            labels[case_id] = Label(LabelValue.VIOLATION)
        else:
            conclusion = f"No violation of Article {article}"
            outcome = ArticleOutcome.NOT_VIOLATED
            labels[case_id] = Label(LabelValue.NO_VIOLATION)
        documents.append(
            CaseDocument(
                case_id=case_id,
                facts_text=tokens,
                conclusion_text=conclusion,
                articles={article: outcome},
                decision_date=date(year, month, day),
                language="en",
            )
        )
    for doc in documents:
        computed = fixture_label(doc.facts_text, spec.cue_tokens)
        if computed is not labels[doc.case_id].value:
            raise CorpusError(
                f"{doc.case_id}: planted label inconsistent with label function "
                "(a cue collision in filler text should be impossible with a "
                "disjoint cue vocabulary)"
            )
    return FixtureCorpus(documents=documents, labels=labels, cues=cues)
