"""Behavioral faithfulness metrics for extracted rationales.

Sufficiency asks whether the rationale alone preserves the classifier's
confidence in its own prediction; comprehensiveness asks whether removing
the rationale destroys it. Both are normalized against the all-masked
baseline so that 0 means "no better than an empty document" and 1 means
"as good as the full document" (sufficiency) or "accounts for the entire
confidence gap" (comprehensiveness).

All masking is hard pad-substitution, the same mechanism the extractors
use, so metric semantics and extraction semantics cannot drift apart. The
module is deliberately ignorant of tokenization: callers hand in already
chunked inputs keyed by case id.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus.documents import Label
from .errors import EvaluationError
from .harness.base import Harness
from .harness.chunking import ChunkedInput, keep_only, remove
from .harness.metrics import f1_breakdown
from .harness.training import class_index
from .rationales import RationaleSet, Span

RANDOM_CONTROL = "random"


@dataclass(frozen=True)
class DocumentMetrics:
    """One evaluated (document, technique) pair.

    ``degenerate_baseline`` marks documents where the all-masked input is at
    least as convincing as the full one (Suff0 = 1): normalization is
    undefined there, so ``norm_suff``/``norm_comp`` carry the raw values and
    the flag. ``clamped`` names the normalized scores that left [0, 1] and
    were pulled back.
    """

    case_id: str
    technique: str
    p_full: float
    p_keep: float
    p_remove: float
    p_empty: float
    suff: float
    suff0: float
    norm_suff: float
    comp: float
    comp0: float
    norm_comp: float
    degenerate_baseline: bool
    clamped: tuple[str, ...]

    def to_record(self) -> dict:
        return {
            "case_id": self.case_id,
            "technique": self.technique,
            "p_full": self.p_full,
            "p_keep": self.p_keep,
            "p_remove": self.p_remove,
            "p_empty": self.p_empty,
            "suff": self.suff,
            "suff0": self.suff0,
            "norm_suff": self.norm_suff,
            "comp": self.comp,
            "comp0": self.comp0,
            "norm_comp": self.norm_comp,
            "degenerate_baseline": self.degenerate_baseline,
            "clamped": list(self.clamped),
        }


@dataclass
class MetricReport:
    """Per-document rows plus per-technique aggregates and the run config."""

    rows: list[DocumentMetrics]
    aggregates: dict[str, dict]
    config: dict = field(default_factory=dict)

    def technique_rows(self, technique: str) -> list[DocumentMetrics]:
        return [r for r in self.rows if r.technique == technique]

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_record() for r in self.rows],
            "aggregates": self.aggregates,
            "config": self.config,
        }


def _check_probability(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise EvaluationError(f"{name} = {value} is not a probability")
    return value


def sufficiency(p_full: float, p_keep: float) -> float:
    """Suff = 1 - max(0, p(y_hat | x) - p(y_hat | R))."""
    p_full = _check_probability("p_full", p_full)
    p_keep = _check_probability("p_keep", p_keep)
    return 1.0 - max(0.0, p_full - p_keep)


def comprehensiveness(p_full: float, p_remove: float) -> float:
    """Comp = max(0, p(y_hat | x) - p(y_hat | x without R))."""
    p_full = _check_probability("p_full", p_full)
    p_remove = _check_probability("p_remove", p_remove)
    return max(0.0, p_full - p_remove)


def normalized_scores(
    p_full: float, p_keep: float, p_remove: float, p_empty: float
) -> dict:
    """All six scores from the four probabilities of the prediction y_hat.

    Comp0 is computed as 1 - Suff0 literally, so the identity holds exactly
    on every document rather than up to rounding.
    """
    suff = sufficiency(p_full, p_keep)
    comp = comprehensiveness(p_full, p_remove)
    suff0 = sufficiency(p_full, _check_probability("p_empty", p_empty))
    comp0 = 1.0 - suff0

    clamped: list[str] = []
    degenerate = suff0 >= 1.0
    if degenerate:
        norm_suff, norm_comp = suff, comp
    else:
        norm_suff = (suff - suff0) / (1.0 - suff0)
        if not 0.0 <= norm_suff <= 1.0:
            clamped.append("norm_suff")
            norm_suff = min(1.0, max(0.0, norm_suff))
        norm_comp = comp / comp0
        if not 0.0 <= norm_comp <= 1.0:
            clamped.append("norm_comp")
            norm_comp = min(1.0, max(0.0, norm_comp))
    return {
        "suff": suff,
        "suff0": suff0,
        "norm_suff": norm_suff,
        "comp": comp,
        "comp0": comp0,
        "norm_comp": norm_comp,
        "degenerate_baseline": degenerate,
        "clamped": tuple(clamped),
    }


def _span_indices(spans: Sequence[Span], n_tokens: int) -> list[int]:
    indices = [i for s in spans for i in s.tokens()]
    if indices and (min(indices) < 0 or max(indices) >= n_tokens):
        raise EvaluationError(
            f"rationale spans reach token {max(indices)} in a "
            f"{n_tokens}-token document"
        )
    return indices


def _evaluate_spans(
    harness: Harness,
    chunked: ChunkedInput,
    spans: Sequence[Span],
    technique: str,
) -> tuple[DocumentMetrics, int, int]:
    """One document's metrics plus the predicted classes under both masks."""
    indices = _span_indices(spans, chunked.n_tokens)
    full = harness.predict(chunked)
    y_hat = full.predicted
    masks = [keep_only(indices), remove(indices), keep_only([])]
    keep_out, remove_out, empty_out = harness.predict_many(chunked, masks)
    p_full = float(full.probs[y_hat])
    scores = normalized_scores(
        p_full,
        float(keep_out.probs[y_hat]),
        float(remove_out.probs[y_hat]),
        float(empty_out.probs[y_hat]),
    )
    metrics = DocumentMetrics(
        case_id=chunked.case_id,
        technique=technique,
        p_full=p_full,
        p_keep=float(keep_out.probs[y_hat]),
        p_remove=float(remove_out.probs[y_hat]),
        p_empty=float(empty_out.probs[y_hat]),
        **scores,
    )
    return metrics, keep_out.predicted, remove_out.predicted


def document_metrics(
    harness: Harness,
    chunked: ChunkedInput,
    spans: Sequence[Span],
    technique: str,
) -> DocumentMetrics:
    """Evaluate one rationale set against one document.

    The prediction y_hat is fixed from the unmasked forward pass; the three
    masked passes (keep-only, removed, all-masked) run as one batch.
    """
    metrics, _, _ = _evaluate_spans(harness, chunked, spans, technique)
    return metrics


def budget_matched_spans(
    spans: Sequence[Span], n_tokens: int, rng: np.random.Generator
) -> list[Span]:
    """Disjoint spans with the same length multiset, placed uniformly.

    The gap composition before, between, and after the spans is drawn
    uniformly (stars and bars), and the length multiset is shuffled, so every
    non-overlapping arrangement of the budget is equally likely.
    """
    lengths = [s.length for s in spans]
    total = sum(lengths)
    if total > n_tokens:
        raise EvaluationError(
            f"budget of {total} tokens cannot fit in a {n_tokens}-token document"
        )
    if not lengths:
        return []
    lengths = [lengths[i] for i in rng.permutation(len(lengths))]
    free = n_tokens - total
    k = len(lengths)
    if free > 0:
        # k sorted draws from free+k slots give the cumulative gap before
        # each span (stars and bars), uniform over all arrangements
        cuts = np.sort(rng.choice(free + k, size=k, replace=False))
        prefix = [int(c) - i for i, c in enumerate(cuts)]
        gaps = [prefix[0]] + [prefix[i] - prefix[i - 1] for i in range(1, k)]
    else:
        gaps = [0] * k
    placed: list[Span] = []
    cursor = 0
    for gap, length in zip(gaps, lengths):
        cursor += gap
        placed.append(Span(cursor, cursor + length))
        cursor += length
    return placed


def _case_rng(seed: int, case_id: str) -> np.random.Generator:
    digest = hashlib.sha256(case_id.encode("utf-8")).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "big")])


def evaluate_technique(
    harness: Harness,
    chunked_by_id: Mapping[str, ChunkedInput],
    archive: Mapping[str, RationaleSet],
    labels: Mapping[str, Label] | None = None,
    seed: int = 0,
    include_control: bool = True,
) -> MetricReport:
    """Score one technique's archive over a document set, with its control.

    Every requested document must be covered by the archive; the control row
    re-places each document's span-length multiset uniformly at random, so
    technique and control always spend identical token budgets. When gold
    ``labels`` are supplied, per-technique macro-F1 under keep-only and
    removed inputs is added to the aggregates.
    """
    missing = sorted(cid for cid in chunked_by_id if cid not in archive)
    if missing:
        raise EvaluationError(f"archive missing rationales for: {missing[:5]}")

    rows: list[DocumentMetrics] = []
    predictions: dict[str, dict[str, list[int]]] = {}
    golds: list[int] = []
    techniques: set[str] = set()
    for cid in sorted(chunked_by_id):
        chunked = chunked_by_id[cid]
        rationales = archive[cid]
        technique = rationales.technique.value
        techniques.add(technique)
        groups = [(technique, list(rationales.spans))]
        if include_control:
            rng = _case_rng(seed, cid)
            control = budget_matched_spans(rationales.spans, chunked.n_tokens, rng)
            groups.append((RANDOM_CONTROL, control))
        if labels is not None:
            golds.append(class_index(labels[cid]))
        for name, spans in groups:
            row, pred_keep, pred_remove = _evaluate_spans(harness, chunked, spans, name)
            rows.append(row)
            if labels is not None:
                per = predictions.setdefault(name, {"keep": [], "remove": []})
                per["keep"].append(pred_keep)
                per["remove"].append(pred_remove)

    if include_control:
        techniques.add(RANDOM_CONTROL)
    aggregates = {}
    for name in sorted(techniques):
        tech_rows = [r for r in rows if r.technique == name]
        summary = {
            "n": len(tech_rows),
            "mean_norm_suff": float(np.mean([r.norm_suff for r in tech_rows])),
            "mean_norm_comp": float(np.mean([r.norm_comp for r in tech_rows])),
            "clamp_events": sum(len(r.clamped) for r in tech_rows),
            "degenerate_baselines": sum(r.degenerate_baseline for r in tech_rows),
        }
        if labels is not None:
            summary["f1_suff"] = f1_breakdown(golds, predictions[name]["keep"]).macro
            summary["f1_comp"] = f1_breakdown(golds, predictions[name]["remove"]).macro
        aggregates[name] = summary
    return MetricReport(
        rows=rows,
        aggregates=aggregates,
        config={"seed": seed, "include_control": include_control},
    )


def f1_metrics(
    harness: Harness,
    chunked_by_id: Mapping[str, ChunkedInput],
    archive: Mapping[str, RationaleSet],
    labels: Mapping[str, Label],
) -> tuple[float, float, int]:
    """(F1-Suff, F1-Comp, excluded) against gold labels.

    Documents without archived rationales are excluded and counted rather
    than failing the whole run.
    """
    golds: list[int] = []
    keep_preds: list[int] = []
    remove_preds: list[int] = []
    excluded = 0
    for cid in sorted(chunked_by_id):
        if cid not in archive:
            excluded += 1
            continue
        chunked = chunked_by_id[cid]
        indices = _span_indices(archive[cid].spans, chunked.n_tokens)
        keep_out, remove_out = harness.predict_many(
            chunked, [keep_only(indices), remove(indices)]
        )
        golds.append(class_index(labels[cid]))
        keep_preds.append(keep_out.predicted)
        remove_preds.append(remove_out.predicted)
    if not golds:
        raise EvaluationError("no documents left to score after exclusions")
    return (
        f1_breakdown(golds, keep_preds).macro,
        f1_breakdown(golds, remove_preds).macro,
        excluded,
    )


@dataclass(frozen=True)
class MonotonicityReport:
    """Outcome of the superset probe: keeping more should not hurt."""

    total: int
    violations: int
    max_drop: float

    @property
    def violation_rate(self) -> float:
        return self.violations / self.total if self.total else 0.0


def monotonicity_probe(
    harness: Harness,
    chunked: ChunkedInput,
    samples: int = 100,
    epsilon: float = 0.02,
    seed: int = 0,
) -> MonotonicityReport:
    """Sample (R, R + extra) keep-sets and count NormSuff decreases > epsilon.

    The model is not guaranteed monotone, so violations are counted and
    surfaced, never hidden; callers decide what rate is acceptable.
    """
    if samples < 1:
        raise EvaluationError("samples must be positive")
    n = chunked.n_tokens
    if n < 2:
        raise EvaluationError("document too short for a superset probe")
    rng = np.random.default_rng(seed)
    full = harness.predict(chunked)
    y_hat = full.predicted
    p_full = float(full.probs[y_hat])
    p_empty = float(harness.predict(chunked, keep_only([])).probs[y_hat])

    pairs = []
    masks = []
    for _ in range(samples):
        base_size = int(rng.integers(1, n))
        base = rng.choice(n, size=base_size, replace=False)
        rest = np.setdiff1d(np.arange(n), base)
        extra = rng.choice(rest, size=int(rng.integers(1, rest.size + 1)), replace=False)
        pairs.append((base, np.concatenate([base, extra])))
        masks.append(keep_only(base.tolist()))
        masks.append(keep_only(np.concatenate([base, extra]).tolist()))
    outputs = harness.predict_many(chunked, masks)

    violations = 0
    max_drop = 0.0
    for i in range(samples):
        p_base = float(outputs[2 * i].probs[y_hat])
        p_super = float(outputs[2 * i + 1].probs[y_hat])
        ns_base = normalized_scores(p_full, p_base, p_full, p_empty)["norm_suff"]
        ns_super = normalized_scores(p_full, p_super, p_full, p_empty)["norm_suff"]
        drop = ns_base - ns_super
        max_drop = max(max_drop, drop)
        if drop > epsilon:
            violations += 1
    return MonotonicityReport(total=samples, violations=violations, max_drop=max_drop)


def save_report(report: MetricReport, directory: str | Path) -> None:
    """Write the rows as a TSV table plus a JSON metadata sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    columns = [
        "case_id", "technique", "p_full", "p_keep", "p_remove", "p_empty",
        "suff", "suff0", "norm_suff", "comp", "comp0", "norm_comp",
        "degenerate_baseline", "clamped",
    ]
    lines = ["\t".join(columns)]
    for row in report.rows:
        rec = row.to_record()
        rec["clamped"] = ",".join(rec["clamped"])
        lines.append("\t".join(str(rec[c]) for c in columns))
    (directory / "metrics.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    sidecar = {"aggregates": report.aggregates, "config": report.config}
    (directory / "metadata.json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_report(directory: str | Path) -> MetricReport:
    """Rebuild a MetricReport from save_report output."""
    directory = Path(directory)
    tsv = (directory / "metrics.tsv").read_text(encoding="utf-8").splitlines()
    sidecar = json.loads((directory / "metadata.json").read_text(encoding="utf-8"))
    header = tsv[0].split("\t")
    rows = []
    for line in tsv[1:]:
        rec = dict(zip(header, line.split("\t")))
        rows.append(
            DocumentMetrics(
                case_id=rec["case_id"],
                technique=rec["technique"],
                p_full=float(rec["p_full"]),
                p_keep=float(rec["p_keep"]),
                p_remove=float(rec["p_remove"]),
                p_empty=float(rec["p_empty"]),
                suff=float(rec["suff"]),
                suff0=float(rec["suff0"]),
                norm_suff=float(rec["norm_suff"]),
                comp=float(rec["comp"]),
                comp0=float(rec["comp0"]),
                norm_comp=float(rec["norm_comp"]),
                degenerate_baseline=rec["degenerate_baseline"] == "True",
                clamped=tuple(c for c in rec["clamped"].split(",") if c),
            )
        )
    return MetricReport(
        rows=rows, aggregates=sidecar["aggregates"], config=sidecar["config"]
    )
