"""Per-token importance scoring: the seven methods the extractor ensembles.

Each method explains the model's own predicted class for one document and
returns one finite score per token. Gradient and attention methods require
the corresponding harness capabilities; the random and surrogate methods
need prediction only, so they run against black-box backends too.

Aggregation knobs the underlying papers leave open are fixed here and
documented: attention summaries average the heads and query positions of
the final self-attention layer, and token scores for multi-chunk documents
are concatenated in document order via the chunk/token map.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import AttributionError, CapabilityError
from .harness.base import ATTENTION, GRADIENTS, PREDICT, Harness
from .harness.chunking import ChunkedInput, remove


class AttributionMethod(str, Enum):
    RANDOM = "random"
    ATTENTION = "attention"
    SCALED_ATTENTION = "scaled_attention"
    INTEGRATED_GRADIENTS = "integrated_gradients"
    INPUT_X_GRAD = "input_x_grad"
    DEEPLIFT = "deeplift"
    LIME = "lime"


GRADIENT_METHODS = frozenset(
    {
        AttributionMethod.SCALED_ATTENTION,
        AttributionMethod.INTEGRATED_GRADIENTS,
        AttributionMethod.INPUT_X_GRAD,
        AttributionMethod.DEEPLIFT,
    }
)

_REQUIREMENTS: dict[AttributionMethod, frozenset[str]] = {
    AttributionMethod.RANDOM: frozenset(),
    AttributionMethod.ATTENTION: frozenset({ATTENTION}),
    AttributionMethod.SCALED_ATTENTION: frozenset({ATTENTION, GRADIENTS}),
    AttributionMethod.INTEGRATED_GRADIENTS: frozenset({GRADIENTS}),
    AttributionMethod.INPUT_X_GRAD: frozenset({GRADIENTS}),
    AttributionMethod.DEEPLIFT: frozenset({GRADIENTS}),
    AttributionMethod.LIME: frozenset({PREDICT}),
}


@dataclass(frozen=True)
class AttributionConfig:
    """Shared knobs; method-specific fields are ignored by other methods."""

    seed: int = 0
    target: int | None = None
    ig_steps: int = 20
    lime_samples: int = 500
    lime_keep_prob: float = 0.5
    lime_kernel_width: float = 0.25
    lime_ridge: float = 1.0

    def __post_init__(self) -> None:
        if self.ig_steps < 1:
            raise AttributionError("ig_steps must be at least 1")
        if self.lime_samples < 10:
            raise AttributionError("lime_samples must be at least 10")
        if not 0 < self.lime_keep_prob < 1:
            raise AttributionError("lime_keep_prob must lie strictly in (0, 1)")
        if self.lime_kernel_width <= 0 or self.lime_ridge <= 0:
            raise AttributionError("kernel width and ridge strength must be positive")


@dataclass(frozen=True)
class TokenScores:
    """One importance score per document token, explaining class ``target``."""

    case_id: str
    method: AttributionMethod
    scores: np.ndarray
    target: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.scores, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise AttributionError("scores must be a non-empty vector")
        if not np.isfinite(arr).all():
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise AttributionError(
                f"non-finite score from {self.method.value} at token {bad}"
            )
        object.__setattr__(self, "scores", arr)

    @property
    def n_tokens(self) -> int:
        return int(self.scores.size)

    def to_record(self) -> dict:
        return {
            "case_id": self.case_id,
            "method": self.method.value,
            "target": self.target,
            "scores": [float(s) for s in self.scores],
        }

    @classmethod
    def from_record(cls, record: dict) -> "TokenScores":
        return cls(
            case_id=record["case_id"],
            method=AttributionMethod(record["method"]),
            scores=np.asarray(record["scores"], dtype=np.float64),
            target=int(record["target"]),
        )


def _check_capabilities(harness: Harness, method: AttributionMethod) -> None:
    missing = _REQUIREMENTS[method] - harness.capabilities()
    if missing:
        raise CapabilityError(
            f"{method.value} needs {sorted(missing)} but the harness offers "
            f"{sorted(harness.capabilities())}"
        )


def _resolve_target(
    harness: Harness, chunked: ChunkedInput, config: AttributionConfig
) -> int:
    if config.target is not None:
        return config.target
    return harness.predict(chunked).predicted


def _random_scores(chunked: ChunkedInput, seed: int) -> np.ndarray:
    """Hash-keyed uniforms: one draw per (seed, token id, occurrence rank).

    Keying on token identity rather than position makes the scores follow
    the tokens when a document is reordered.
    """
    ids = chunked.dechunk()
    seen: Counter[int] = Counter()
    out = np.empty(len(ids), dtype=np.float64)
    for i, tid in enumerate(ids):
        occ = seen[tid]
        seen[tid] += 1
        digest = hashlib.sha256(f"{seed}|{tid}|{occ}".encode()).digest()
        out[i] = int.from_bytes(digest[:8], "big") / 2**64
    return out


def _received_summary(chunked: ChunkedInput, tensor: np.ndarray) -> np.ndarray:
    """Aggregate (chunks, heads, query, key) attention-space values per token."""
    summary = tensor.mean(axis=(1, 2))  # (chunks, len): received axis keyed
    flat = summary.reshape(-1)
    return flat[np.asarray(chunked.flat_positions())]


def _integrated_gradients(
    harness: Harness, chunked: ChunkedInput, target: int, steps: int
) -> np.ndarray:
    intro = harness.introspect(chunked, target)
    x = intro.embeddings
    alphas = np.arange(1, steps + 1, dtype=np.float64) / steps
    stack = np.stack([a * x for a in alphas])
    grads, _ = harness.embedding_gradients(chunked, target, stack)
    avg = grads.mean(axis=0)
    return (x * avg).sum(axis=1)


def _lime_scores(
    harness: Harness, chunked: ChunkedInput, target: int, config: AttributionConfig
) -> np.ndarray:
    n = chunked.n_tokens
    rng = np.random.default_rng(config.seed)
    z = (rng.random((config.lime_samples, n)) < config.lime_keep_prob).astype(
        np.float64
    )
    masks = [remove(np.flatnonzero(row == 0.0)) for row in z]
    outputs = harness.predict_many(chunked, masks)
    y = np.asarray([out.probs[target] for out in outputs], dtype=np.float64)

    kept = z.sum(axis=1)
    with np.errstate(invalid="ignore"):
        cosine = np.where(kept > 0, np.sqrt(kept / n), 0.0)
    distance = 1.0 - cosine
    weights = np.exp(-((distance / config.lime_kernel_width) ** 2))

    design = np.hstack([np.ones((config.lime_samples, 1)), z])
    wx = design * weights[:, None]
    gram = design.T @ wx
    penalty = np.eye(n + 1) * config.lime_ridge
    penalty[0, 0] = 0.0  # intercept stays unpenalized
    coef = np.linalg.solve(gram + penalty, design.T @ (weights * y))
    return coef[1:]


def attribute(
    harness: Harness,
    chunked: ChunkedInput,
    method: AttributionMethod,
    config: AttributionConfig | None = None,
) -> TokenScores:
    """Score every token of one document under the given method."""
    config = config or AttributionConfig()
    _check_capabilities(harness, method)
    target = _resolve_target(harness, chunked, config)

    if method is AttributionMethod.RANDOM:
        scores = _random_scores(chunked, config.seed)
    elif method is AttributionMethod.ATTENTION:
        scores = harness.introspect(chunked, target).token_attention
    elif method is AttributionMethod.SCALED_ATTENTION:
        intro = harness.introspect(chunked, target)
        scores = _received_summary(chunked, intro.attn_probs * intro.attn_grads)
    elif method is AttributionMethod.INTEGRATED_GRADIENTS:
        scores = _integrated_gradients(harness, chunked, target, config.ig_steps)
    elif method is AttributionMethod.INPUT_X_GRAD:
        intro = harness.introspect(chunked, target)
        scores = (intro.embeddings * intro.embedding_grads).sum(axis=1)
    elif method is AttributionMethod.DEEPLIFT:
        grads, emb, base = harness.baseline_rescale_gradients(chunked, target)
        scores = ((emb - base) * grads).sum(axis=1)
    elif method is AttributionMethod.LIME:
        scores = _lime_scores(harness, chunked, target, config)
    else:  # pragma: no cover - enum is closed
        raise AttributionError(f"unknown method {method!r}")

    return TokenScores(
        case_id=chunked.case_id or "<unnamed>",
        method=method,
        scores=scores,
        target=target,
    )


def attribute_all(
    harness: Harness,
    chunked: ChunkedInput,
    methods: tuple[AttributionMethod, ...] = tuple(AttributionMethod),
    config: AttributionConfig | None = None,
) -> dict[AttributionMethod, TokenScores]:
    """Run several methods on one document with a shared resolved target."""
    config = config or AttributionConfig()
    if config.target is None:
        config = replace(config, target=_resolve_target(harness, chunked, config))
    return {m: attribute(harness, chunked, m, config) for m in methods}


def save_scores(scores: list[TokenScores], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for s in scores:
            fh.write(json.dumps(s.to_record()) + "\n")


def load_scores(path: str | Path) -> dict[tuple[str, AttributionMethod], TokenScores]:
    out: dict[tuple[str, AttributionMethod], TokenScores] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            s = TokenScores.from_record(json.loads(line))
            out[(s.case_id, s.method)] = s
    return out
