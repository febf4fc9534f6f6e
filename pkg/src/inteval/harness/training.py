"""Training loop and checkpoint persistence for the chunked classifier."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..corpus.balance import CorpusSplit, primary_article
from ..corpus.documents import CaseDocument, Label, LabelValue
from ..errors import HarnessError
from .base import TinyTransformerHarness
from .chunking import ChunkedInput, chunk_document
from .metrics import F1Breakdown, f1_breakdown
from .model import ModelConfig, TinyTransformer
from .tokenizer import Vocabulary, build_vocabulary

CLASS_INDEX = {LabelValue.NO_VIOLATION: 0, LabelValue.VIOLATION: 1}


@dataclass(frozen=True)
class TrainConfig:
    """Optimization and architecture settings for fitting the classifier."""

    d_model: int = 32
    n_heads: int = 2
    n_layers: int = 1
    d_ff: int = 64
    max_chunk_len: int = 64
    dtype: str = "float32"
    epochs: int = 30
    batch_size: int = 16
    lr: float = 3e-3
    seed: int = 0

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(
            vocab_size=vocab_size,
            d_model=self.d_model,
            n_heads=self.n_heads,
            n_layers=self.n_layers,
            d_ff=self.d_ff,
            max_chunk_len=self.max_chunk_len,
            dtype=self.dtype,
            seed=self.seed,
        )


@dataclass
class EvalReport:
    """Held-out quality: overall and per-article macro F1."""

    overall: F1Breakdown
    per_article: dict[str, F1Breakdown]
    losses: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        def enc(b: F1Breakdown) -> dict:
            return {
                "per_class": list(b.per_class),
                "macro": b.macro,
                "accuracy": b.accuracy,
                "n": b.n,
            }

        return {
            "overall": enc(self.overall),
            "per_article": {a: enc(b) for a, b in self.per_article.items()},
            "final_loss": self.losses[-1] if self.losses else None,
        }


def class_index(label: Label | LabelValue | int) -> int:
    value = label.value if isinstance(label, Label) else label
    if isinstance(value, int):
        if value not in (0, 1):
            raise HarnessError(f"class index {value} out of range")
        return value
    if value not in CLASS_INDEX:
        raise HarnessError(f"label {value} is not trainable")
    return CLASS_INDEX[value]


def _batches(
    items: list[tuple[ChunkedInput, int]], batch_size: int, rng: np.random.Generator
) -> list[tuple[torch.Tensor, torch.Tensor]]:
    """Group by chunk count so each batch stacks into one rectangular tensor."""
    by_width: dict[int, list[tuple[ChunkedInput, int]]] = {}
    for item in items:
        by_width.setdefault(item[0].n_chunks, []).append(item)
    batches = []
    for width in sorted(by_width):
        group = by_width[width]
        order = rng.permutation(len(group))
        for lo in range(0, len(group), batch_size):
            part = [group[i] for i in order[lo : lo + batch_size]]
            ids = torch.stack([torch.from_numpy(c.ids_array()) for c, _ in part])
            ys = torch.tensor([y for _, y in part], dtype=torch.long)
            batches.append((ids, ys))
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def fit_classifier(
    documents: dict[str, CaseDocument],
    labels: dict[str, Label],
    split: CorpusSplit,
    cfg: TrainConfig | None = None,
) -> tuple[TinyTransformerHarness, EvalReport]:
    """Train on the split's train ids and report held-out test quality."""
    cfg = cfg or TrainConfig()
    if not split.train:
        raise HarnessError("empty training split")
    missing = [cid for cid in split.train + split.test if cid not in documents]
    if missing:
        raise HarnessError(f"split references unknown documents: {missing[:3]}")

    vocab = build_vocabulary(
        [documents[cid].facts_text for cid in split.train]
    )
    model_cfg = cfg.model_config(len(vocab))
    torch.manual_seed(cfg.seed)
    model = TinyTransformer(model_cfg)
    harness = TinyTransformerHarness(model, vocab)

    train_items = [
        (
            chunk_document(documents[cid], vocab, cfg.max_chunk_len),
            class_index(labels[cid]),
        )
        for cid in split.train
    ]
    rng = np.random.default_rng(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    loss_fn = torch.nn.CrossEntropyLoss()
    losses: list[float] = []
    model.train()
    for _ in range(cfg.epochs):
        epoch_loss = 0.0
        n = 0
        for ids, ys in _batches(train_items, cfg.batch_size, rng):
            opt.zero_grad()
            logits = model.forward_ids(ids)
            loss = loss_fn(logits, ys)
            if not torch.isfinite(loss):
                raise HarnessError("training diverged: non-finite loss")
            loss.backward()
            opt.step()
            epoch_loss += loss.detach().item() * len(ys)
            n += len(ys)
        losses.append(epoch_loss / n)
    model.eval()

    report = evaluate_classifier(harness, documents, labels, split.test)
    report.losses = losses
    return harness, report


def evaluate_classifier(
    harness: TinyTransformerHarness,
    documents: dict[str, CaseDocument],
    labels: dict[str, Label],
    case_ids: list[str],
) -> EvalReport:
    if not case_ids:
        raise HarnessError("empty evaluation set")
    y_true: list[int] = []
    y_pred: list[int] = []
    articles: list[str] = []
    for cid in case_ids:
        doc = documents[cid]
        chunked = chunk_document(doc, harness.vocab, harness.model.cfg.max_chunk_len)
        out = harness.predict(chunked)
        y_true.append(class_index(labels[cid]))
        y_pred.append(out.predicted)
        articles.append(primary_article(doc))
    per_article: dict[str, F1Breakdown] = {}
    for art in sorted(set(articles)):
        idx = [i for i, a in enumerate(articles) if a == art]
        per_article[art] = f1_breakdown(
            [y_true[i] for i in idx], [y_pred[i] for i in idx]
        )
    return EvalReport(overall=f1_breakdown(y_true, y_pred), per_article=per_article)


def save_harness(harness: TinyTransformerHarness, directory: str | Path) -> Path:
    """Write weights, architecture config, and vocabulary side by side."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(harness.model.state_dict(), directory / "model.pt")
    (directory / "config.json").write_text(
        json.dumps(harness.model.cfg.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    harness.vocab.save(directory / "vocab.json")
    return directory


def load_harness(directory: str | Path) -> TinyTransformerHarness:
    directory = Path(directory)
    for name in ("model.pt", "config.json", "vocab.json"):
        if not (directory / name).exists():
            raise HarnessError(f"checkpoint is missing {name}")
    cfg = ModelConfig(**json.loads((directory / "config.json").read_text("utf-8")))
    vocab = Vocabulary.load(directory / "vocab.json")
    model = TinyTransformer(cfg)
    state = torch.load(directory / "model.pt", weights_only=True)
    model.load_state_dict(state)
    model.eval()
    return TinyTransformerHarness(model, vocab)
