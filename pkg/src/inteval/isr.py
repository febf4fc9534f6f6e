"""Instance-specific rationale extraction over contiguous windows.

Candidates are stride-1 windows per length, scored by the sum of their
token scores; windows above their length's mean survive, and overlapping
survivors merge into one span carrying the average of the merged scores.
Each (scoring method, length) shortlist is then evaluated as a unit: the
document is masked to (or stripped of) the shortlist's spans and the
divergence between the masked and original predictions decides the winner.

The divergence direction is configurable because keeping or removing the
candidate are both defensible readings: SUFFICIENCY keeps only the spans
and prefers the smallest divergence; COMPREHENSIVENESS removes them and
prefers the largest.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .attribution import AttributionMethod, TokenScores
from .errors import SelectionError
from .harness.base import Harness
from .harness.chunking import ChunkedInput, keep_only, remove
from .rationales import RationaleSet, Span, Technique

logger = logging.getLogger(__name__)

MIN_RATIONALE_LENGTH = 5
BUDGET_FRACTION = 0.025


class SelectionMode(str, Enum):
    SUFFICIENCY = "sufficiency"
    COMPREHENSIVENESS = "comprehensiveness"


@dataclass(frozen=True)
class CandidateRationale:
    """A merged run of above-average windows of one generating length."""

    span: Span
    window_length: int
    score: float
    method: AttributionMethod

    def __post_init__(self) -> None:
        if self.window_length < 1:
            raise SelectionError("window length must be positive")
        if self.span.length < self.window_length:
            raise SelectionError("merged span cannot be shorter than its windows")


@dataclass(frozen=True)
class Configuration:
    """One jointly-evaluated shortlist: every survivor for (method, length)."""

    method: AttributionMethod
    window_length: int
    spans: tuple[Span, ...]

    @property
    def total_length(self) -> int:
        return sum(s.length for s in self.spans)

    def token_indices(self) -> list[int]:
        return [i for s in self.spans for i in s.tokens()]

    def sort_key(self) -> tuple:
        return (self.total_length, tuple((s.start, s.end) for s in self.spans))


def rationale_budget(
    n_tokens: int,
    fraction: float = BUDGET_FRACTION,
    floor: int = MIN_RATIONALE_LENGTH,
) -> int:
    """Maximum window length: a fixed fraction of the document, floored so
    the minimum-length rule stays satisfiable on short documents."""
    if n_tokens < 1:
        raise SelectionError("document has no tokens")
    return max(floor, math.ceil(fraction * n_tokens))


def jsd(p: Sequence[float], q: Sequence[float]) -> float:
    """Jensen-Shannon divergence with base-2 logs; symmetric, in [0, 1]."""
    p_arr = np.asarray(p, dtype=np.float64)
    q_arr = np.asarray(q, dtype=np.float64)
    for name, arr in (("p", p_arr), ("q", q_arr)):
        if arr.ndim != 1 or arr.size < 2:
            raise SelectionError(f"{name} must be a probability vector")
        if (arr < 0).any() or abs(arr.sum() - 1.0) > 1e-6:
            raise SelectionError(f"{name} is not a probability distribution")
    if p_arr.size != q_arr.size:
        raise SelectionError("distributions differ in length")
    m = 0.5 * (p_arr + q_arr)

    def kl(a: np.ndarray) -> float:
        nz = a > 0
        return float((a[nz] * np.log2(a[nz] / m[nz])).sum())

    return max(0.0, 0.5 * kl(p_arr) + 0.5 * kl(q_arr))


def generate_candidates(scores: TokenScores, l: int) -> list[CandidateRationale]:
    """Shortlist merged above-average windows of length ``l``.

    Returns an empty list when ``l`` exceeds the document or when no window
    strictly beats the mean (an all-equal score vector, for instance).
    """
    if l < 1:
        raise SelectionError(f"window length must be >= 1, got {l}")
    values = scores.scores
    n = values.size
    if l > n:
        return []
    window_sums = np.convolve(values, np.ones(l), mode="valid")
    mean = window_sums.mean()
    starts = np.flatnonzero(window_sums > mean)
    if starts.size == 0:
        return []

    merged: list[CandidateRationale] = []
    run_start = int(starts[0])
    run_end = run_start + l
    run_scores = [float(window_sums[starts[0]])]
    for s in starts[1:]:
        s = int(s)
        if s < run_end:  # shares at least one token with the current run
            run_end = max(run_end, s + l)
            run_scores.append(float(window_sums[s]))
        else:
            merged.append(
                CandidateRationale(
                    span=Span(run_start, run_end),
                    window_length=l,
                    score=float(np.mean(run_scores)),
                    method=scores.method,
                )
            )
            run_start, run_end, run_scores = s, s + l, [float(window_sums[s])]
    merged.append(
        CandidateRationale(
            span=Span(run_start, run_end),
            window_length=l,
            score=float(np.mean(run_scores)),
            method=scores.method,
        )
    )
    return merged


def enumerate_configurations(
    all_scores: Mapping[AttributionMethod, TokenScores],
    n_tokens: int,
) -> list[Configuration]:
    """All non-empty (method, length) shortlists, in canonical order."""
    budget = rationale_budget(n_tokens)
    configs: list[Configuration] = []
    for method in sorted(all_scores, key=lambda m: m.value):
        scores = all_scores[method]
        if scores.n_tokens != n_tokens:
            raise SelectionError(
                f"{method.value} scores cover {scores.n_tokens} tokens, "
                f"document has {n_tokens}"
            )
        for l in range(MIN_RATIONALE_LENGTH, budget + 1):
            candidates = generate_candidates(scores, l)
            if candidates:
                configs.append(
                    Configuration(
                        method=method,
                        window_length=l,
                        spans=tuple(c.span for c in candidates),
                    )
                )
    return configs


def _fallback_configurations(
    all_scores: Mapping[AttributionMethod, TokenScores], n_tokens: int
) -> list[Configuration]:
    """One best fixed-length window per method when every shortlist is empty."""
    l = min(MIN_RATIONALE_LENGTH, n_tokens)
    configs = []
    for method in sorted(all_scores, key=lambda m: m.value):
        values = all_scores[method].scores
        sums = np.convolve(values, np.ones(l), mode="valid")
        start = int(np.argmax(sums))
        configs.append(
            Configuration(
                method=method, window_length=l, spans=(Span(start, start + l),)
            )
        )
    return configs


def select_rationales(
    harness: Harness,
    chunked: ChunkedInput,
    all_scores: Mapping[AttributionMethod, TokenScores],
    mode: SelectionMode = SelectionMode.SUFFICIENCY,
    batch_size: int | None = None,
) -> RationaleSet:
    """Pick the (method, length) shortlist whose masked prediction diverges
    best from the original, per the configured mode.

    Ties on divergence break toward the smaller total rationale length and
    then lexicographic span order, so selection is deterministic.
    """
    if not all_scores:
        raise SelectionError("no attribution scores supplied")
    n = chunked.n_tokens
    configs = enumerate_configurations(all_scores, n)
    if not configs:
        logger.warning(
            "%s: no window beat its length mean; falling back to best fixed-length windows",
            chunked.case_id,
        )
        configs = _fallback_configurations(all_scores, n)

    original = harness.predict(chunked).probs
    if mode is SelectionMode.SUFFICIENCY:
        masks = [keep_only(c.token_indices()) for c in configs]
    else:
        masks = [remove(c.token_indices()) for c in configs]
    outputs = harness.predict_many(chunked, masks, batch_size=batch_size)
    divergences = [jsd(original, out.probs) for out in outputs]

    sign = 1.0 if mode is SelectionMode.SUFFICIENCY else -1.0
    ranked = sorted(
        zip(configs, divergences),
        key=lambda pair: (sign * pair[1],) + pair[0].sort_key(),
    )
    best, best_jsd = ranked[0]
    return RationaleSet(
        case_id=chunked.case_id,
        technique=Technique.ISR,
        spans=tuple(best.spans),
        chosen_method=best.method.value,
        selection_divergence=best_jsd,
    )
