"""Classifier harness: predictions under masks plus gradient/attention access.

The harness contract is what every extractor and metric consumes. Hard masks
substitute the pad token for excluded positions; soft masks scale token
embeddings. A black-box wrapper exposes prediction only, so capability
errors are testable, and a constant-output stub provides exact zero
gradients.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
import torch

from ..errors import CapabilityError, HarnessError, IntevalError
from .chunking import ChunkedInput, MaskMode, MaskSpec
from .model import AttentionTrace, ModelConfig, TinyTransformer
from .tokenizer import Vocabulary

PREDICT = "predict"
GRADIENTS = "gradients"
ATTENTION = "attention"


@dataclass(frozen=True)
class ClassifierOutput:
    """A probability pair with the argmax decision (ties go to class 0)."""

    probs: tuple[float, float]
    predicted: int
    chunk_attn: np.ndarray | None = None
    token_attn: np.ndarray | None = None

    def __post_init__(self) -> None:
        total = sum(self.probs)
        if abs(total - 1.0) > 1e-6 or min(self.probs) < 0:
            raise HarnessError(f"probabilities {self.probs} do not form a distribution")


def _decide(probs: np.ndarray) -> int:
    # Ties break toward class 0 (the no-violation side).
    return int(probs[1] > probs[0])


@dataclass
class Introspection:
    """Attention and gradient views for one document and one target logit.

    ``token_attention`` is the per-token received-attention summary over the
    final encoder layer, normalized to sum 1 across the document's real
    tokens. The raw per-chunk attention tensors (chunks, heads, len, len)
    and their gradients support attention-times-gradient attribution;
    ``embedding_grads`` holds d(target logit)/d(token embedding).
    """

    target: int
    token_attention: np.ndarray
    embedding_grads: np.ndarray
    embeddings: np.ndarray
    attn_probs: np.ndarray
    attn_grads: np.ndarray
    chunk_attention: np.ndarray
    chunk_attn_probs: np.ndarray
    chunk_attn_grads: np.ndarray


class Harness(ABC):
    """Anything that can classify chunked documents under masks."""

    @abstractmethod
    def capabilities(self) -> frozenset[str]: ...

    @abstractmethod
    def predict(
        self,
        chunked: ChunkedInput,
        mask: MaskSpec | None = None,
        include_attention: bool = False,
    ) -> ClassifierOutput: ...

    @abstractmethod
    def predict_many(
        self,
        chunked: ChunkedInput,
        masks: list[MaskSpec],
        batch_size: int | None = None,
    ) -> list[ClassifierOutput]: ...

    def introspect(self, chunked: ChunkedInput, target: int) -> Introspection:
        raise CapabilityError(
            f"{type(self).__name__} exposes no attention or gradient access"
        )

    def embedding_gradients(
        self,
        chunked: ChunkedInput,
        target: int,
        embeddings: np.ndarray | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        raise CapabilityError(f"{type(self).__name__} exposes no gradient access")

    def baseline_rescale_gradients(
        self, chunked: ChunkedInput, target: int
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise CapabilityError(f"{type(self).__name__} exposes no gradient access")

    def soft_forward(
        self,
        chunked: ChunkedInput,
        token_weights: torch.Tensor,
        noise: torch.Tensor | None = None,
    ) -> torch.Tensor:
        raise CapabilityError(f"{type(self).__name__} exposes no soft-mask access")

    @property
    def embedding_dim(self) -> int:
        raise CapabilityError(f"{type(self).__name__} exposes no embedding access")


class TinyTransformerHarness(Harness):
    """Reference backend: the trainable chunked transformer."""

    def __init__(self, model: TinyTransformer, vocab: Vocabulary) -> None:
        if model.cfg.vocab_size != len(vocab):
            raise HarnessError("model/vocabulary size mismatch")
        self.model = model
        self.vocab = vocab
        self.model.eval()

    # -- plumbing ---------------------------------------------------------

    def capabilities(self) -> frozenset[str]:
        return frozenset({PREDICT, GRADIENTS, ATTENTION})

    @property
    def embedding_dim(self) -> int:
        return self.model.cfg.d_model

    def _dtype(self) -> torch.dtype:
        return self.model.cfg.torch_dtype()

    def _ids(self, chunked: ChunkedInput) -> torch.Tensor:
        if chunked.pad_id != self.vocab.pad_id:
            raise HarnessError("chunked input pad id does not match vocabulary")
        return torch.from_numpy(chunked.ids_array())

    def _masked_ids(self, chunked: ChunkedInput, mask: MaskSpec) -> torch.Tensor:
        mask.validate_for(chunked)
        ids = self._ids(chunked).reshape(-1)
        kept = mask.kept_weights(chunked.n_tokens)
        if not np.all((kept == 0.0) | (kept == 1.0)):
            raise IntevalError("hard masking requires binary keep weights")
        drop = np.asarray(
            [p for p, w in zip(chunked.flat_positions(), kept) if w == 0.0],
            dtype=np.int64,
        )
        if drop.size:
            ids[torch.from_numpy(drop)] = self.vocab.pad_id
        return ids.reshape(chunked.n_chunks, chunked.max_chunk_len)

    def _real_positions(self, chunked: ChunkedInput) -> torch.Tensor:
        return torch.from_numpy(chunked.flat_positions())

    def _probs(self, logits: torch.Tensor) -> np.ndarray:
        return torch.softmax(logits.detach().double(), dim=-1).cpu().numpy()

    # -- prediction -------------------------------------------------------

    def predict(
        self,
        chunked: ChunkedInput,
        mask: MaskSpec | None = None,
        include_attention: bool = False,
    ) -> ClassifierOutput:
        trace = AttentionTrace() if include_attention else None
        with torch.no_grad():
            if mask is not None and mask.is_soft:
                mask.validate_for(chunked)
                weights = torch.as_tensor(
                    mask.kept_weights(chunked.n_tokens), dtype=self._dtype()
                )
                logits = self.soft_forward(chunked, weights)
                if include_attention:
                    # rerun cheaply for the trace; soft path skips tracing
                    logits = self._traced_soft(chunked, weights, trace)
            else:
                ids = (
                    self._ids(chunked)
                    if mask is None
                    else self._masked_ids(chunked, mask)
                )
                logits = self.model.forward_ids(ids.unsqueeze(0), trace=trace)
        probs = self._probs(logits)[0]
        chunk_attn = token_attn = None
        if include_attention and trace is not None:
            token_attn = self._token_attention(chunked, trace)
            chunk_attn = self._chunk_attention(trace)
        return ClassifierOutput(
            probs=(float(probs[0]), float(probs[1])),
            predicted=_decide(probs),
            chunk_attn=chunk_attn,
            token_attn=token_attn,
        )

    def _traced_soft(
        self, chunked: ChunkedInput, weights: torch.Tensor, trace: AttentionTrace
    ) -> torch.Tensor:
        emb = self._soft_embeddings(chunked, weights, None)
        logits, _ = self.model.forward_from_token_embeddings(emb, trace=trace)
        return logits

    def predict_many(
        self,
        chunked: ChunkedInput,
        masks: list[MaskSpec],
        batch_size: int | None = None,
    ) -> list[ClassifierOutput]:
        """Evaluate many hard masks over one document, batched.

        The default batch size is dynamic in the chunk count: wider documents
        get smaller batches so the token budget per batch stays level.
        """
        if batch_size is None:
            batch_size = max(1, 64 // chunked.n_chunks)
        outputs: list[ClassifierOutput] = []
        with torch.no_grad():
            for lo in range(0, len(masks), batch_size):
                group = masks[lo : lo + batch_size]
                ids = torch.stack([self._masked_ids(chunked, m) for m in group])
                logits = self.model.forward_ids(ids)
                for row in self._probs(logits):
                    outputs.append(
                        ClassifierOutput(
                            probs=(float(row[0]), float(row[1])),
                            predicted=_decide(row),
                        )
                    )
        return outputs

    # -- gradients and attention -------------------------------------------

    def _token_attention(
        self, chunked: ChunkedInput, trace: AttentionTrace
    ) -> np.ndarray:
        attn = trace.token[-1]  # (C, H, L, L) since batch==1 flattens over chunks
        summary = attn.detach().mean(dim=(1, 2))  # (C, L) received attention
        flat = summary.reshape(-1).cpu().numpy()
        doc = flat[chunked.flat_positions()]
        total = doc.sum()
        if total <= 0:
            raise HarnessError("attention mass vanished; cannot normalize")
        return doc / total

    def _chunk_attention(self, trace: AttentionTrace) -> np.ndarray:
        chunk = trace.chunk.detach().mean(dim=(0, 1, 2)).cpu().numpy()  # (C,)
        return chunk / chunk.sum()

    def introspect(self, chunked: ChunkedInput, target: int) -> Introspection:
        self._check_target(target)
        ids = self._ids(chunked).unsqueeze(0)
        tok_emb = self.model.embed_ids(ids).detach().requires_grad_(True)
        trace = AttentionTrace(retain_grads=True)
        logits, _ = self.model.forward_from_token_embeddings(tok_emb, trace=trace)
        logits[0, target].backward()

        pos = self._real_positions(chunked)
        emb_flat = tok_emb.detach().reshape(-1, self.model.cfg.d_model)
        grad_flat = tok_emb.grad.reshape(-1, self.model.cfg.d_model)
        attn = trace.token[-1]
        attn_grad = (
            attn.grad if attn.grad is not None else torch.zeros_like(attn)
        )
        chunk_attn = trace.chunk
        chunk_grad = (
            chunk_attn.grad if chunk_attn.grad is not None else torch.zeros_like(chunk_attn)
        )
        return Introspection(
            target=target,
            token_attention=self._token_attention(chunked, trace),
            embedding_grads=grad_flat[pos].cpu().numpy(),
            embeddings=emb_flat[pos].cpu().numpy(),
            attn_probs=attn.detach().cpu().numpy(),
            attn_grads=attn_grad.detach().cpu().numpy(),
            chunk_attention=self._chunk_attention(trace),
            chunk_attn_probs=chunk_attn.detach().cpu().numpy()[0],
            chunk_attn_grads=chunk_grad.detach().cpu().numpy()[0],
        )

    def _check_target(self, target: int) -> None:
        if not 0 <= target < self.model.cfg.n_classes:
            raise HarnessError(f"target class {target} out of range")

    def embedding_gradients(
        self,
        chunked: ChunkedInput,
        target: int,
        embeddings: np.ndarray | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Gradients of the target logit w.r.t. token embeddings.

        ``embeddings`` overrides the real-token embedding vectors, shaped
        (n_tokens, d) or batched (b, n_tokens, d); pad positions keep the pad
        embedding. Returns (grads, logits) with grads matching the input
        batch shape.
        """
        self._check_target(target)
        ids = self._ids(chunked)
        base = self.model.embed_ids(ids.unsqueeze(0)).detach()
        pos = self._real_positions(chunked)
        d = self.model.cfg.d_model
        if embeddings is None:
            batch = base
        else:
            over = torch.as_tensor(np.asarray(embeddings), dtype=self._dtype())
            if over.ndim == 2:
                over = over.unsqueeze(0)
            if over.shape[1] != chunked.n_tokens or over.shape[2] != d:
                raise HarnessError("embedding override shape mismatch")
            b = over.shape[0]
            flat = base.expand(b, -1, -1, -1).reshape(b, -1, d).clone()
            flat[:, pos, :] = over
            batch = flat.reshape(b, chunked.n_chunks, chunked.max_chunk_len, d)
        leaf = batch.clone().requires_grad_(True)
        logits, _ = self.model.forward_from_token_embeddings(leaf)
        logits[:, target].sum().backward()
        grads = leaf.grad.reshape(leaf.shape[0], -1, d)[:, pos, :].cpu().numpy()
        out_logits = logits.detach().cpu().numpy()
        if embeddings is None or np.asarray(embeddings).ndim == 2:
            return grads[0], out_logits[0]
        return grads, out_logits

    def baseline_rescale_gradients(
        self, chunked: ChunkedInput, target: int
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Difference-from-baseline gradients (secant backward, zero baseline).

        Returns (grads, embeddings, baseline_embeddings) over real tokens.
        The baseline zeroes token embeddings while pad positions and
        positional terms stay shared between the two passes.
        """
        self._check_target(target)
        ids = self._ids(chunked).unsqueeze(0)
        base = self.model.embed_ids(ids).detach()
        pos = self._real_positions(chunked)
        d = self.model.cfg.d_model
        baseline = base.reshape(1, -1, d).clone()
        baseline[:, pos, :] = 0.0
        baseline = baseline.reshape_as(base)
        leaf = base.clone().requires_grad_(True)
        logits, _ = self.model.forward_from_token_embeddings(
            leaf, baseline_emb=baseline, rescale=True
        )
        logits[0, target].backward()
        grads = leaf.grad.reshape(-1, d)[pos].cpu().numpy()
        emb = base.reshape(-1, d)[pos].cpu().numpy()
        base_emb = baseline.reshape(-1, d)[pos].cpu().numpy()
        return grads, emb, base_emb

    def _soft_embeddings(
        self,
        chunked: ChunkedInput,
        token_weights: torch.Tensor,
        noise: torch.Tensor | None,
    ) -> torch.Tensor:
        if token_weights.shape != (chunked.n_tokens,):
            raise HarnessError("token weight vector length mismatch")
        ids = self._ids(chunked).unsqueeze(0)
        emb = self.model.embed_ids(ids)
        pos = self._real_positions(chunked)
        cl = chunked.n_chunks * chunked.max_chunk_len
        weights = torch.ones(cl, dtype=self._dtype()).index_put(
            (pos,), token_weights.to(self._dtype())
        )
        scaled = emb * weights.reshape(1, chunked.n_chunks, chunked.max_chunk_len, 1)
        if noise is not None:
            if noise.shape != (chunked.n_tokens, self.model.cfg.d_model):
                raise HarnessError("noise shape mismatch")
            pad = torch.zeros(
                cl, self.model.cfg.d_model, dtype=self._dtype()
            ).index_put((pos,), noise.to(self._dtype()))
            scaled = scaled + pad.reshape(
                1, chunked.n_chunks, chunked.max_chunk_len, -1
            )
        return scaled

    def soft_forward(
        self,
        chunked: ChunkedInput,
        token_weights: torch.Tensor,
        noise: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Differentiable forward under per-token embedding scaling.

        ``token_weights`` is a (n_tokens,) tensor in [0,1] and may carry
        gradients; optional ``noise`` is added to the scaled real-token
        embeddings. Returns (1, n_classes) logits on the autograd graph.
        """
        emb = self._soft_embeddings(chunked, token_weights, noise)
        logits, _ = self.model.forward_from_token_embeddings(emb)
        return logits


class BlackBoxHarness(Harness):
    """Prediction-only view of another harness.

    Methods that need internals raise capability errors instead of silently
    degrading.
    """

    def __init__(self, inner: Harness) -> None:
        self._inner = inner

    def capabilities(self) -> frozenset[str]:
        return frozenset({PREDICT})

    def predict(
        self,
        chunked: ChunkedInput,
        mask: MaskSpec | None = None,
        include_attention: bool = False,
    ) -> ClassifierOutput:
        if include_attention:
            raise CapabilityError("black-box harness has no attention access")
        return self._inner.predict(chunked, mask)

    def predict_many(
        self,
        chunked: ChunkedInput,
        masks: list[MaskSpec],
        batch_size: int | None = None,
    ) -> list[ClassifierOutput]:
        return self._inner.predict_many(chunked, masks, batch_size)


def stub_harness(vocab: Vocabulary, cfg: ModelConfig | None = None) -> TinyTransformerHarness:
    """A constant-output classifier: exact zero logits and zero gradients."""
    cfg = cfg or ModelConfig(vocab_size=len(vocab))
    if cfg.vocab_size != len(vocab):
        raise HarnessError("config vocabulary size mismatch")
    model = TinyTransformer(cfg).zero_head_()
    return TinyTransformerHarness(model, vocab)
