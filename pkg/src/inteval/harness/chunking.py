"""Splitting token sequences into fixed-width chunks and mask bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from ..errors import HarnessError, IntevalError
from ..corpus.documents import CaseDocument
from .tokenizer import Vocabulary


@dataclass
class ChunkedInput:
    """A document as equal-width chunks of token ids.

    Only the final chunk may contain padding. ``token_map[i]`` gives the
    (chunk, offset) position of global token i; padding positions never
    appear in the map.
    """

    case_id: str
    chunks: list[list[int]]
    token_map: list[tuple[int, int]]
    pad_id: int
    max_chunk_len: int

    def __post_init__(self) -> None:
        if not self.chunks:
            raise HarnessError(f"{self.case_id}: no chunks")
        for chunk in self.chunks:
            if len(chunk) > self.max_chunk_len:
                raise HarnessError(f"{self.case_id}: chunk exceeds width limit")

    @property
    def n_tokens(self) -> int:
        return len(self.token_map)

    @property
    def n_chunks(self) -> int:
        return len(self.chunks)

    def ids_array(self) -> np.ndarray:
        """(n_chunks, max_chunk_len) int array, final chunk padded."""
        arr = np.full((self.n_chunks, self.max_chunk_len), self.pad_id, dtype=np.int64)
        for c, chunk in enumerate(self.chunks):
            arr[c, : len(chunk)] = chunk
        return arr

    def flat_positions(self) -> np.ndarray:
        """(n_tokens,) indices into the flattened (chunks*width) layout."""
        return np.array(
            [c * self.max_chunk_len + o for c, o in self.token_map], dtype=np.int64
        )

    def dechunk(self) -> list[int]:
        """Recover the original token-id sequence."""
        flat = self.ids_array().reshape(-1)
        return [int(flat[p]) for p in self.flat_positions()]


class MaskMode(str, Enum):
    KEEP_ONLY = "keep_only"
    REMOVE = "remove"


@dataclass
class MaskSpec:
    """Which tokens to keep or remove, as an index set (hard) or per-token
    weights in [0, 1] (soft)."""

    mode: MaskMode
    selection: frozenset[int] | np.ndarray

    def __post_init__(self) -> None:
        if isinstance(self.selection, (set, frozenset, list, tuple)) and not isinstance(
            self.selection, np.ndarray
        ):
            self.selection = frozenset(int(i) for i in self.selection)
        elif isinstance(self.selection, np.ndarray):
            weights = np.asarray(self.selection, dtype=np.float64)
            if weights.ndim != 1:
                raise IntevalError("soft mask weights must be one-dimensional")
            if np.any(weights < 0) or np.any(weights > 1):
                raise IntevalError("soft mask weights must lie in [0, 1]")
            self.selection = weights
        else:
            raise IntevalError(f"unsupported mask selection {type(self.selection)!r}")

    @property
    def is_soft(self) -> bool:
        return isinstance(self.selection, np.ndarray)

    def validate_for(self, chunked: ChunkedInput) -> None:
        n = chunked.n_tokens
        if self.is_soft:
            if len(self.selection) != n:
                raise IntevalError(
                    f"soft mask length {len(self.selection)} != token count {n}"
                )
        else:
            for i in self.selection:
                if not 0 <= i < n:
                    raise IntevalError(f"mask index {i} out of range [0, {n})")

    def kept_weights(self, n_tokens: int) -> np.ndarray:
        """Per-token keep weight in [0,1] under this mask."""
        if self.is_soft:
            lam = np.asarray(self.selection, dtype=np.float64)
            return lam if self.mode is MaskMode.KEEP_ONLY else 1.0 - lam
        member = np.zeros(n_tokens, dtype=np.float64)
        idx = sorted(self.selection)
        if idx:
            member[np.asarray(idx, dtype=np.int64)] = 1.0
        return member if self.mode is MaskMode.KEEP_ONLY else 1.0 - member


def keep_only(indices) -> MaskSpec:
    return MaskSpec(MaskMode.KEEP_ONLY, frozenset(int(i) for i in indices))


def remove(indices) -> MaskSpec:
    return MaskSpec(MaskMode.REMOVE, frozenset(int(i) for i in indices))


def chunk_document(
    doc: CaseDocument | Sequence[str],
    vocab: Vocabulary,
    max_chunk_len: int = 512,
    case_id: str | None = None,
) -> ChunkedInput:
    """Encode and split a document into chunks of at most ``max_chunk_len``."""
    if max_chunk_len < 16:
        raise HarnessError(f"max_chunk_len must be >= 16, got {max_chunk_len}")
    if isinstance(doc, CaseDocument):
        tokens = doc.facts_text
        case_id = doc.case_id
    else:
        tokens = list(doc)
        case_id = case_id or "<anonymous>"
    if not tokens:
        raise HarnessError(f"{case_id}: empty document")
    ids = vocab.encode(tokens)
    chunks: list[list[int]] = []
    token_map: list[tuple[int, int]] = []
    for start in range(0, len(ids), max_chunk_len):
        chunk = ids[start : start + max_chunk_len]
        c = len(chunks)
        token_map.extend((c, o) for o in range(len(chunk)))
        chunks.append(chunk)
    return ChunkedInput(
        case_id=case_id,
        chunks=chunks,
        token_map=token_map,
        pad_id=vocab.pad_id,
        max_chunk_len=max_chunk_len,
    )
