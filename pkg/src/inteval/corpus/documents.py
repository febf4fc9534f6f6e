"""Case document records, labels, and line-delimited persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Iterable

from ..errors import CorpusError


class ArticleOutcome(str, Enum):
    VIOLATED = "violated"
    NOT_VIOLATED = "not_violated"
    NOT_EXAMINED = "not_examined"


class LabelValue(str, Enum):
    NO_VIOLATION = "no_violation"
    VIOLATION = "violation"
    EXCLUDED = "excluded"


class ExclusionReason(str, Enum):
    INADMISSIBLE = "inadmissible"
    STRUCK_OUT = "struck_out"
    LACK_OF_JURISDICTION = "lack_of_jurisdiction"
    PRELIMINARY_OBJECTION_ALLOWED = "preliminary_objection_allowed"
    SAME_ARTICLE_CONFLICT = "same_article_conflict"
    NON_ENGLISH = "non_english"
    CORRUPT_METADATA = "corrupt_metadata"


@dataclass(frozen=True)
class Label:
    value: LabelValue
    exclusion_reason: ExclusionReason | None = None

    def __post_init__(self) -> None:
        excluded = self.value is LabelValue.EXCLUDED
        if excluded != (self.exclusion_reason is not None):
            raise CorpusError(
                "exclusion_reason must be present exactly when the label is EXCLUDED"
            )


@dataclass
class CaseDocument:
    """One decision: tokenized facts, the conclusion used only for labeling,
    and per-article outcomes.

    ``facts_text`` is a token sequence; the conclusion never appears in it.
    ``articles`` maps article identifiers (digit strings) to their outcome.
    """

    case_id: str
    facts_text: list[str]
    conclusion_text: str
    articles: dict[str, ArticleOutcome] = field(default_factory=dict)
    decision_date: date = date(2000, 1, 1)
    language: str = "en"

    def __post_init__(self) -> None:
        for article in self.articles:
            if not str(article).isdigit():
                raise CorpusError(
                    f"{self.case_id}: unknown article identifier {article!r}"
                )

    @property
    def n_tokens(self) -> int:
        return len(self.facts_text)

    def to_record(self, label: Label | None = None) -> dict:
        rec = {
            "case_id": self.case_id,
            "facts_text": self.facts_text,
            "conclusion_text": self.conclusion_text,
            "articles": {a: o.value for a, o in self.articles.items()},
            "decision_date": self.decision_date.isoformat(),
            "language": self.language,
        }
        if label is not None:
            rec["label"] = label.value.value
            if label.exclusion_reason is not None:
                rec["exclusion_reason"] = label.exclusion_reason.value
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "CaseDocument":
        return cls(
            case_id=rec["case_id"],
            facts_text=list(rec["facts_text"]),
            conclusion_text=rec["conclusion_text"],
            articles={
                a: ArticleOutcome(o) for a, o in rec.get("articles", {}).items()
            },
            decision_date=date.fromisoformat(rec["decision_date"]),
            language=rec.get("language", "en"),
        )


def record_label(rec: dict) -> Label | None:
    if "label" not in rec:
        return None
    reason = rec.get("exclusion_reason")
    return Label(
        value=LabelValue(rec["label"]),
        exclusion_reason=ExclusionReason(reason) if reason else None,
    )


def save_documents(
    path: str | Path, docs: Iterable[tuple[CaseDocument, Label | None]]
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for doc, label in docs:
            fh.write(json.dumps(doc.to_record(label), sort_keys=True) + "\n")


def load_documents(path: str | Path) -> list[tuple[CaseDocument, Label | None]]:
    out: list[tuple[CaseDocument, Label | None]] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append((CaseDocument.from_record(rec), record_label(rec)))
    return out


def ingest(records: Iterable[dict]) -> tuple[list[CaseDocument], list[tuple[str, Label]]]:
    """Screen raw records before labeling.

    Non-English documents and records with corrupt metadata (missing or empty
    required fields, unparseable dates) are dropped here with an EXCLUDED
    label recording why; everything else becomes a CaseDocument.
    """
    kept: list[CaseDocument] = []
    dropped: list[tuple[str, Label]] = []
    for rec in records:
        case_id = str(rec.get("case_id", "")) or "<missing-id>"
        try:
            doc = CaseDocument.from_record(rec)
            if not doc.facts_text or not doc.conclusion_text:
                raise CorpusError("empty facts or conclusion")
        except (CorpusError, KeyError, ValueError, TypeError):
            dropped.append(
                (case_id, Label(LabelValue.EXCLUDED, ExclusionReason.CORRUPT_METADATA))
            )
            continue
        if doc.language.lower() != "en":
            dropped.append(
                (doc.case_id, Label(LabelValue.EXCLUDED, ExclusionReason.NON_ENGLISH))
            )
            continue
        kept.append(doc)
    return kept, dropped
