"""Whitespace-token vocabulary with reserved pad and unknown symbols."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import HarnessError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


@dataclass
class Vocabulary:
    """Token/id mapping. Id 0 is the pad (uninformative) token, id 1 unknown."""

    tokens: list[str]
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise HarnessError("vocabulary must start with the pad and unk symbols")
        if len(set(self.tokens)) != len(self.tokens):
            raise HarnessError("duplicate tokens in vocabulary")
        self._index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    def encode(self, tokens: Sequence[str]) -> list[int]:
        unk = self.unk_id
        return [self._index.get(t, unk) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps({"tokens": self.tokens}, indent=0), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(tokens=payload["tokens"])


def build_vocabulary(token_sequences: Iterable[Sequence[str]]) -> Vocabulary:
    """Deterministic vocabulary over all observed tokens (sorted order)."""
    seen: set[str] = set()
    for seq in token_sequences:
        seen.update(seq)
    seen.discard(PAD_TOKEN)
    seen.discard(UNK_TOKEN)
    return Vocabulary(tokens=[PAD_TOKEN, UNK_TOKEN] + sorted(seen))
