"""Small classification metrics, written out so behavior is inspectable."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import HarnessError


@dataclass(frozen=True)
class F1Breakdown:
    per_class: tuple[float, ...]
    macro: float
    accuracy: float
    n: int


def f1_breakdown(
    y_true: list[int], y_pred: list[int], n_classes: int = 2
) -> F1Breakdown:
    """Per-class F1 with macro average; empty classes score zero."""
    if len(y_true) != len(y_pred):
        raise HarnessError("label/prediction length mismatch")
    if not y_true:
        raise HarnessError("cannot score an empty evaluation set")
    scores = []
    for c in range(n_classes):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    acc = sum(1 for t, p in zip(y_true, y_pred) if t == p) / len(y_true)
    return F1Breakdown(
        per_class=tuple(scores),
        macro=sum(scores) / n_classes,
        accuracy=acc,
        n=len(y_true),
    )


def macro_f1(y_true: list[int], y_pred: list[int], n_classes: int = 2) -> float:
    return f1_breakdown(y_true, y_pred, n_classes).macro
