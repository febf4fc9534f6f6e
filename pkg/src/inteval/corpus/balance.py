"""Class balancing by stratified majority downsampling, plus split bookkeeping."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CorpusError
from .documents import CaseDocument, Label, LabelValue


@dataclass
class CorpusSplit:
    """Disjoint train/dev/test case-id lists with distribution bookkeeping."""

    train: list[str]
    dev: list[str]
    test: list[str]
    article_counts: dict[str, int] = field(default_factory=dict)
    year_counts: dict[int, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        parts = [set(self.train), set(self.dev), set(self.test)]
        total = sum(len(p) for p in parts)
        if len(parts[0] | parts[1] | parts[2]) != total:
            raise CorpusError("train/dev/test splits are not disjoint")

    @property
    def all_ids(self) -> list[str]:
        return list(self.train) + list(self.dev) + list(self.test)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "train": self.train,
            "dev": self.dev,
            "test": self.test,
            "article_counts": self.article_counts,
            "year_counts": {str(y): c for y, c in self.year_counts.items()},
            "warnings": self.warnings,
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CorpusSplit":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            train=payload["train"],
            dev=payload["dev"],
            test=payload["test"],
            article_counts=payload.get("article_counts", {}),
            year_counts={int(y): c for y, c in payload.get("year_counts", {}).items()},
            warnings=payload.get("warnings", []),
        )


def primary_article(doc: CaseDocument) -> str:
    """Representative article for stratification: the lowest-numbered one."""
    if not doc.articles:
        return "none"
    return min(doc.articles, key=int)


def _largest_remainder(targets: dict, total: int, caps: dict) -> dict:
    """Integer allocation proportional to targets, bounded by per-key caps."""
    shares = {k: targets[k] * total for k in targets}
    alloc = {k: min(int(np.floor(v)), caps[k]) for k, v in shares.items()}
    remaining = total - sum(alloc.values())
    order = sorted(
        targets,
        key=lambda k: (-(shares[k] - np.floor(shares[k])), k),
    )
    while remaining > 0:
        progressed = False
        for k in order:
            if remaining == 0:
                break
            if alloc[k] < caps[k]:
                alloc[k] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            raise CorpusError("allocation infeasible: caps below requested total")
    return alloc


def balance_corpus(
    labeled: list[tuple[CaseDocument, Label]],
    seed: int,
    tolerance_pp: float = 2.0,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> CorpusSplit:
    """Downsample the majority class to the minority size and split.

    The sampler is stratified on (article, decision year) of the majority
    class, targeting the class's own stratum proportions; marginal article
    and year distributions are checked against ``tolerance_pp`` percentage
    points and violations are recorded as warnings, with the closest feasible
    allocation kept. Splitting is per-class so each split stays balanced.
    Everything is deterministic given the seed.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"split ratios must sum to 1, got {ratios}")
    for _, label in labeled:
        if label.value is LabelValue.EXCLUDED:
            raise CorpusError("excluded documents must be removed before balancing")

    pos = [d for d, l in labeled if l.value is LabelValue.VIOLATION]
    neg = [d for d, l in labeled if l.value is LabelValue.NO_VIOLATION]
    if not pos or not neg:
        raise CorpusError(
            f"both classes required: {len(pos)} positive, {len(neg)} negative"
        )

    rng = np.random.default_rng(seed)
    warnings: list[str] = []

    if len(pos) == len(neg):
        minority, sampled_majority = pos, neg
    else:
        minority, majority = (pos, neg) if len(pos) < len(neg) else (neg, pos)
        m = len(minority)
        strata: dict[tuple[str, int], list[CaseDocument]] = {}
        for doc in majority:
            strata.setdefault(
                (primary_article(doc), doc.decision_date.year), []
            ).append(doc)
        n_major = len(majority)
        targets = {k: len(v) / n_major for k, v in strata.items()}
        caps = {k: len(v) for k, v in strata.items()}
        alloc = _largest_remainder(targets, m, caps)

        sampled_majority = []
        for key in sorted(strata):
            docs = sorted(strata[key], key=lambda d: d.case_id)
            take = alloc[key]
            idx = rng.permutation(len(docs))[:take]
            sampled_majority.extend(docs[i] for i in sorted(idx))

        for axis, keyfn in (("article", lambda k: k[0]), ("year", lambda k: k[1])):
            want = Counter()
            got = Counter()
            for k, v in strata.items():
                want[keyfn(k)] += len(v) / n_major
            for k, a in alloc.items():
                got[keyfn(k)] += a / m
            for stratum in want:
                drift = abs(want[stratum] - got.get(stratum, 0.0)) * 100.0
                if drift > tolerance_pp + 1e-9:
                    warnings.append(
                        f"{axis} stratum {stratum}: distribution drift "
                        f"{drift:.2f}pp exceeds tolerance {tolerance_pp}pp; "
                        "closest feasible allocation kept"
                    )

    balanced = {
        LabelValue.VIOLATION: minority if minority is pos else sampled_majority,
        LabelValue.NO_VIOLATION: minority if minority is neg else sampled_majority,
    }
    if len(balanced[LabelValue.VIOLATION]) != len(balanced[LabelValue.NO_VIOLATION]):
        raise CorpusError("internal error: classes unbalanced after downsampling")

    splits: dict[str, list[str]] = {"train": [], "dev": [], "test": []}
    for _, docs in sorted(balanced.items(), key=lambda kv: kv[0].value):
        ids = sorted(d.case_id for d in docs)
        order = rng.permutation(len(ids))
        shuffled = [ids[i] for i in order]
        n = len(shuffled)
        n_train = int(round(ratios[0] * n))
        n_dev = int(round(ratios[1] * n))
        splits["train"].extend(shuffled[:n_train])
        splits["dev"].extend(shuffled[n_train : n_train + n_dev])
        splits["test"].extend(shuffled[n_train + n_dev :])

    kept = balanced[LabelValue.VIOLATION] + balanced[LabelValue.NO_VIOLATION]
    article_counts = Counter(primary_article(d) for d in kept)
    year_counts = Counter(d.decision_date.year for d in kept)
    return CorpusSplit(
        train=splits["train"],
        dev=splits["dev"],
        test=splits["test"],
        article_counts=dict(article_counts),
        year_counts=dict(year_counts),
        warnings=warnings,
    )
