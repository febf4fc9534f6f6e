"""Chance-corrected agreement statistics for categorical judgment vectors.

Implements Cohen's kappa with the conventional marginal-product chance model,
percentile-bootstrap confidence intervals, and loaders for the panel judgment
records shipped with the package (two criteria, two prompting regimes, four
raters per record).
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Hashable, Sequence

import numpy as np

from .errors import AgreementError

RATERS = ("expert_b", "saullm", "mistral", "llama")
CRITERIA = ("support", "sufficiency")
SHOT_MODES = ("single", "few")


@dataclass(frozen=True)
class JudgmentRecord:
    """One judged (case, rationale-source) pair with all four raters' labels."""

    case_id: str
    article: int
    source: str
    labels: dict[str, str] = field(default_factory=dict)

    def label(self, rater: str) -> str:
        try:
            return self.labels[rater]
        except KeyError:
            raise AgreementError(f"unknown rater {rater!r}") from None


@dataclass(frozen=True)
class KappaResult:
    """Cohen's kappa together with its ingredients.

    ``value`` is None when the statistic is undefined (expected agreement of
    exactly 1, which makes the correction term degenerate).
    """

    value: float | None
    observed: float
    expected: float
    n: int

    @property
    def defined(self) -> bool:
        return self.value is not None


@dataclass(frozen=True)
class BootstrapInterval:
    """Percentile bootstrap interval for kappa.

    Resamples where kappa is undefined are dropped from the percentile
    computation and tallied in ``n_undefined``. When every resample is
    undefined the bounds are None.
    """

    point: float | None
    lower: float | None
    upper: float | None
    n_resamples: int
    n_undefined: int
    confidence: float


def cohen_kappa(a: Sequence[Hashable], b: Sequence[Hashable]) -> KappaResult:
    """Cohen's kappa between two equal-length label sequences.

    Chance agreement uses the product of the two raters' marginal label
    distributions. Labels may be any hashable values; the two sequences are
    compared by equality only.
    """
    if len(a) != len(b):
        raise AgreementError(f"length mismatch: {len(a)} vs {len(b)}")
    n = len(a)
    if n == 0:
        raise AgreementError("cannot compute agreement on empty vectors")
    observed = sum(1 for x, y in zip(a, b) if x == y) / n
    counts_a = Counter(a)
    counts_b = Counter(b)
    expected = sum(
        (counts_a[c] / n) * (counts_b[c] / n) for c in set(counts_a) | set(counts_b)
    )
    if expected >= 1.0 - 1e-12:
        return KappaResult(value=None, observed=observed, expected=1.0, n=n)
    value = (observed - expected) / (1.0 - expected)
    return KappaResult(value=value, observed=observed, expected=expected, n=n)


def bootstrap_kappa_interval(
    a: Sequence[Hashable],
    b: Sequence[Hashable],
    n_resamples: int = 10_000,
    confidence: float = 0.95,
    seed: int = 0,
) -> BootstrapInterval:
    """Percentile bootstrap CI for Cohen's kappa.

    Instances (paired labels) are resampled with replacement. Degenerate
    resamples, where the chance-agreement term hits 1 and kappa is undefined,
    are skipped and counted rather than imputed.
    """
    if not 0.0 < confidence < 1.0:
        raise AgreementError(f"confidence must be in (0, 1), got {confidence}")
    if n_resamples < 1:
        raise AgreementError("n_resamples must be positive")
    point = cohen_kappa(a, b)
    a_arr = np.asarray(a, dtype=object)
    b_arr = np.asarray(b, dtype=object)
    rng = np.random.default_rng(seed)
    n = len(a_arr)
    values: list[float] = []
    n_undefined = 0
    for _ in range(n_resamples):
        idx = rng.integers(0, n, size=n)
        res = cohen_kappa(a_arr[idx].tolist(), b_arr[idx].tolist())
        if res.defined:
            values.append(res.value)
        else:
            n_undefined += 1
    if not values:
        return BootstrapInterval(
            point=point.value,
            lower=None,
            upper=None,
            n_resamples=n_resamples,
            n_undefined=n_undefined,
            confidence=confidence,
        )
    tail = (1.0 - confidence) / 2.0 * 100.0
    lower, upper = np.percentile(values, [tail, 100.0 - tail])
    return BootstrapInterval(
        point=point.value,
        lower=float(lower),
        upper=float(upper),
        n_resamples=n_resamples,
        n_undefined=n_undefined,
        confidence=confidence,
    )


def load_judgments(criterion: str, shots: str) -> list[JudgmentRecord]:
    """Load the shipped judgment records for one criterion and prompting regime.

    ``criterion`` is "support" or "sufficiency"; ``shots`` is "single" or
    "few". Records come back in file order: rationale source blocks (masking,
    selection, expert-curated) each covering the ten cases.
    """
    if criterion not in CRITERIA:
        raise AgreementError(f"unknown criterion {criterion!r}")
    if shots not in SHOT_MODES:
        raise AgreementError(f"unknown shot mode {shots!r}")
    name = f"{criterion}_{shots}.csv"
    path = resources.files("inteval.data.judgments").joinpath(name)
    records: list[JudgmentRecord] = []
    with path.open("r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(
                JudgmentRecord(
                    case_id=row["case_id"],
                    article=int(row["article"]),
                    source=row["source"],
                    labels={r: row[r] for r in RATERS},
                )
            )
    if len(records) != 30:
        raise AgreementError(f"expected 30 records in {name}, found {len(records)}")
    return records


def rater_vector(records: Sequence[JudgmentRecord], rater: str) -> list[str]:
    """Extract one rater's labels across records, preserving record order."""
    return [rec.label(rater) for rec in records]


def pairwise_kappa(
    records: Sequence[JudgmentRecord],
    raters: Sequence[str] = RATERS,
) -> dict[tuple[str, str], KappaResult]:
    """Cohen's kappa for every unordered rater pair over the same records."""
    out: dict[tuple[str, str], KappaResult] = {}
    for i, r1 in enumerate(raters):
        for r2 in raters[i + 1 :]:
            out[(r1, r2)] = cohen_kappa(
                rater_vector(records, r1), rater_vector(records, r2)
            )
    return out


def agreement_summary(
    n_resamples: int = 10_000, seed: int = 0, with_ci: bool = False
) -> dict[str, dict[tuple[str, str], KappaResult | tuple[KappaResult, BootstrapInterval]]]:
    """Pairwise agreement for all four criterion/regime judgment sets.

    Keys are "<criterion>_<shots>". With ``with_ci`` each entry is a
    (KappaResult, BootstrapInterval) pair, otherwise just the KappaResult.
    """
    out: dict[str, dict] = {}
    for criterion in CRITERIA:
        for shots in SHOT_MODES:
            records = load_judgments(criterion, shots)
            pairs = pairwise_kappa(records)
            if with_ci:
                enriched = {}
                for key, res in pairs.items():
                    ci = bootstrap_kappa_interval(
                        rater_vector(records, key[0]),
                        rater_vector(records, key[1]),
                        n_resamples=n_resamples,
                        seed=seed,
                    )
                    enriched[key] = (res, ci)
                out[f"{criterion}_{shots}"] = enriched
            else:
                out[f"{criterion}_{shots}"] = pairs
    return out
