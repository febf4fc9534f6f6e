"""Conclusion-phrase filter engine that assigns violation labels to cases.

The court's conclusion field is a semicolon-separated list of clauses
("Violation of Article 6; Non-pecuniary damage - financial award"). Each
clause is matched against an ordered rule inventory; clause effects then
resolve to a case label. Positive triggers are the violation phrase, award
phrases, and the finding-of-violation phrase. Exclusions cover inadmissible,
struck-out, no-jurisdiction, and allowed-preliminary-objection cases plus
same-article contradictions. Two ignore effects neutralize clauses before
anything else fires: a rejected government strike-out request is discarded
entirely, and "not necessary to examine" removes only the named article from
consideration.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import CorpusError
from .documents import CaseDocument, ExclusionReason, Label, LabelValue


class RuleEffect(str, Enum):
    POSITIVE = "positive"
    EXCLUDE = "exclude"
    IGNORE_ARTICLE = "ignore_article"
    IGNORE_PHRASE = "ignore_phrase"


@dataclass(frozen=True)
class FilterRule:
    phrase: str
    effect: RuleEffect
    priority: int
    exclusion_reason: ExclusionReason | None = None

    def __post_init__(self) -> None:
        if not self.phrase:
            raise CorpusError("filter rule with empty phrase")
        if (self.effect is RuleEffect.EXCLUDE) != (self.exclusion_reason is not None):
            raise CorpusError(
                f"rule {self.phrase!r}: exclusion_reason required exactly for exclude rules"
            )

    def matches(self, clause: str) -> bool:
        return self.phrase.lower() in clause.lower()


_ARTICLE_RE = re.compile(r"articles?\s+(\d+)", re.IGNORECASE)


def _validate_rules(rules: Sequence[FilterRule]) -> list[FilterRule]:
    priorities = [r.priority for r in rules]
    if len(set(priorities)) != len(priorities):
        raise CorpusError("filter rule priorities must be unique")
    return sorted(rules, key=lambda r: r.priority)


def _clause_articles(clause: str) -> set[str]:
    return {m.group(1) for m in _ARTICLE_RE.finditer(clause)}


@dataclass(frozen=True)
class ClauseAnalysis:
    """Outcome of rule matching for one conclusion clause."""

    clause: str
    rule: FilterRule | None
    articles: frozenset[str]


def analyze_conclusion(
    conclusion: str, rules: Sequence[FilterRule]
) -> list[ClauseAnalysis]:
    """Match every semicolon-separated clause against the rule inventory."""
    ordered = _validate_rules(rules)
    analyses: list[ClauseAnalysis] = []
    for raw in conclusion.split(";"):
        clause = raw.strip()
        if not clause:
            continue
        matched = next((r for r in ordered if r.matches(clause)), None)
        analyses.append(
            ClauseAnalysis(
                clause=clause,
                rule=matched,
                articles=frozenset(_clause_articles(clause)),
            )
        )
    return analyses


def label_case(doc: CaseDocument, rules: Sequence[FilterRule]) -> Label:
    """Assign the violation label for one case from its conclusion text.

    Resolution: a clause matching an exclude rule excludes the case; an
    article claimed both violated and not violated excludes it as
    contradictory; otherwise any surviving positive clause makes it a
    violation, and the default is no violation. The "no violation" phrase is
    an ignore rule rather than a counter-trigger, so it both suppresses the
    bare "violation" substring and feeds the contradiction check.
    """
    if not doc.conclusion_text or not doc.conclusion_text.strip():
        raise CorpusError(f"{doc.case_id}: missing conclusion text")
    analyses = analyze_conclusion(doc.conclusion_text, rules)

    violated: set[str] = set()
    not_violated: set[str] = set()
    exclusion: ExclusionReason | None = None
    any_positive = False
    for a in analyses:
        if a.rule is None:
            continue
        if a.rule.effect is RuleEffect.EXCLUDE and exclusion is None:
            exclusion = a.rule.exclusion_reason
        elif a.rule.effect is RuleEffect.POSITIVE:
            any_positive = True
            violated |= a.articles
        elif a.rule.effect is RuleEffect.IGNORE_PHRASE:
            if "no violation" in a.clause.lower():
                not_violated |= a.articles
        # IGNORE_ARTICLE clauses drop the named article from consideration
        # entirely; they contribute to neither side.

    if exclusion is not None:
        return Label(LabelValue.EXCLUDED, exclusion)
    if violated & not_violated:
        return Label(LabelValue.EXCLUDED, ExclusionReason.SAME_ARTICLE_CONFLICT)
    if any_positive:
        return Label(LabelValue.VIOLATION)
    return Label(LabelValue.NO_VIOLATION)


def _rule_from_record(rec: dict) -> FilterRule:
    reason = rec.get("exclusion_reason")
    return FilterRule(
        phrase=rec["phrase"],
        effect=RuleEffect(rec["effect"]),
        priority=int(rec["priority"]),
        exclusion_reason=ExclusionReason(reason) if reason else None,
    )


def load_rules(path: str | Path) -> list[FilterRule]:
    with Path(path).open("r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return _validate_rules([_rule_from_record(r) for r in payload["rules"]])


def default_rules() -> list[FilterRule]:
    """The shipped rule inventory."""
    path = resources.files("inteval.data").joinpath("filter_rules.json")
    with path.open("r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return _validate_rules([_rule_from_record(r) for r in payload["rules"]])


def label_all(
    docs: Iterable[CaseDocument], rules: Sequence[FilterRule] | None = None
) -> list[tuple[CaseDocument, Label]]:
    rules = list(rules) if rules is not None else default_rules()
    return [(doc, label_case(doc, rules)) for doc in docs]
