"""Rationale spans, rationale sets, and the archive format shared by extractors.

A rationale is a contiguous token span over a document. Extraction techniques
(mask optimization, ensemble selection, expert annotation) all emit the same
RationaleSet shape so downstream metrics, judging, and annotation code never
care where spans came from.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import SelectionError


class Technique(str, Enum):
    """Provenance of a rationale set."""

    MARC = "marc"
    ISR = "isr"
    EXPERT = "expert_a"


@dataclass(frozen=True, order=True)
class Span:
    """Half-open token interval [start, end) in global document coordinates."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.end <= self.start:
            raise SelectionError(f"invalid span [{self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start

    def overlaps(self, other: "Span") -> bool:
        return self.start < other.end and other.start < self.end

    def tokens(self) -> range:
        return range(self.start, self.end)


def merge_overlapping(spans: Iterable[Span]) -> list[Span]:
    """Union of spans as a sorted list of disjoint spans.

    Adjacent spans (end == start) are merged as well, since their token sets
    form one uninterrupted run.
    """
    ordered = sorted(spans)
    merged: list[Span] = []
    for span in ordered:
        if merged and span.start <= merged[-1].end:
            if span.end > merged[-1].end:
                merged[-1] = Span(merged[-1].start, span.end)
        else:
            merged.append(span)
    return merged


def spans_token_count(spans: Sequence[Span]) -> int:
    return sum(s.length for s in merge_overlapping(spans))


def spans_to_indices(spans: Sequence[Span]) -> set[int]:
    out: set[int] = set()
    for s in spans:
        out.update(s.tokens())
    return out


@dataclass
class RationaleSet:
    """Extracted rationales for one document.

    ``spans`` are pairwise disjoint and sorted. ``chosen_method`` and
    ``selection_divergence`` are populated by the ensemble selector; the mask
    optimizer and expert imports leave them None.
    """

    case_id: str
    technique: Technique
    spans: list[Span] = field(default_factory=list)
    chosen_method: str | None = None
    selection_divergence: float | None = None

    def __post_init__(self) -> None:
        ordered = sorted(self.spans)
        for a, b in zip(ordered, ordered[1:]):
            if a.overlaps(b):
                raise SelectionError(
                    f"overlapping rationale spans in {self.case_id}: {a} and {b}"
                )
        self.spans = ordered

    @property
    def token_count(self) -> int:
        return sum(s.length for s in self.spans)

    def to_record(self) -> dict:
        return {
            "case_id": self.case_id,
            "technique": self.technique.value,
            "spans": [[s.start, s.end] for s in self.spans],
            "chosen_method": self.chosen_method,
            "selection_divergence": self.selection_divergence,
        }

    @classmethod
    def from_record(cls, record: dict) -> "RationaleSet":
        return cls(
            case_id=record["case_id"],
            technique=Technique(record["technique"]),
            spans=[Span(int(s), int(e)) for s, e in record["spans"]],
            chosen_method=record.get("chosen_method"),
            selection_divergence=record.get("selection_divergence"),
        )


def save_rationales(path: str | Path, sets: Iterable[RationaleSet]) -> None:
    """Write rationale sets as line-delimited records, one per (case, technique)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rs in sets:
            fh.write(json.dumps(rs.to_record(), sort_keys=True) + "\n")


def load_rationales(path: str | Path) -> dict[tuple[str, Technique], RationaleSet]:
    """Load an archive keyed by (case_id, technique)."""
    out: dict[tuple[str, Technique], RationaleSet] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rs = RationaleSet.from_record(json.loads(line))
            out[(rs.case_id, rs.technique)] = rs
    return out
