"""A small hierarchical transformer classifier with open introspection.

Documents arrive as fixed-width chunks. Each chunk runs through a shared
self-attention encoder, chunk representations exchange information through
one cross-chunk multi-head attention layer, and the mean-pooled result feeds
a two-way classification head. Attention probabilities are kept reachable
for gradient-based attribution, the forward pass can start from caller-
supplied token embeddings (soft masks, path integrals), and a paired
actual/baseline forward with secant-slope backward through the nonlinearity
supports difference-from-baseline attribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn

from ..errors import HarnessError


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 32
    n_heads: int = 2
    n_layers: int = 1
    d_ff: int = 64
    max_chunk_len: int = 64
    n_classes: int = 2
    dtype: str = "float32"
    seed: int = 0

    def torch_dtype(self) -> torch.dtype:
        return {"float32": torch.float32, "float64": torch.float64}[self.dtype]

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "n_layers": self.n_layers,
            "d_ff": self.d_ff,
            "max_chunk_len": self.max_chunk_len,
            "n_classes": self.n_classes,
            "dtype": self.dtype,
            "seed": self.seed,
        }


def _gelu(x: torch.Tensor) -> torch.Tensor:
    return 0.5 * x * (1.0 + torch.erf(x / math.sqrt(2.0)))


def _gelu_grad(x: torch.Tensor) -> torch.Tensor:
    cdf = 0.5 * (1.0 + torch.erf(x / math.sqrt(2.0)))
    pdf = torch.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return cdf + x * pdf


class _SecantGelu(torch.autograd.Function):
    """GELU whose backward uses the secant slope between input and baseline.

    Where input and baseline coincide the exact derivative substitutes for
    the degenerate secant.
    """

    @staticmethod
    def forward(ctx, x: torch.Tensor, x0: torch.Tensor) -> torch.Tensor:
        ctx.save_for_backward(x, x0)
        return _gelu(x)

    @staticmethod
    def backward(ctx, grad_out: torch.Tensor):
        x, x0 = ctx.saved_tensors
        diff = x - x0
        near = diff.abs() < 1e-6
        safe = torch.where(near, torch.ones_like(diff), diff)
        secant = (_gelu(x) - _gelu(x0)) / safe
        slope = torch.where(near, _gelu_grad(x), secant)
        return grad_out * slope, None


@dataclass
class AttentionTrace:
    """Attention tensors captured during a forward pass.

    ``token`` holds one (B, H, L, L) tensor per encoder layer (queries on the
    third axis, keys on the fourth); ``chunk`` is the (B, H, C, C)
    cross-chunk attention. With ``retain_grads`` the tensors keep their
    gradients after a backward pass.
    """

    retain_grads: bool = False
    token: list[torch.Tensor] = field(default_factory=list)
    chunk: torch.Tensor | None = None


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int) -> None:
        super().__init__()
        if d_model % n_heads:
            raise HarnessError("d_model must be divisible by n_heads")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.out = nn.Linear(d_model, d_model)

    def _attend(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        b, n, d = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)

        def heads(t: torch.Tensor) -> torch.Tensor:
            return t.view(b, n, self.n_heads, self.d_head).transpose(1, 2)

        q, k, v = heads(q), heads(k), heads(v)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        attn = torch.softmax(scores, dim=-1)
        ctx = (attn @ v).transpose(1, 2).reshape(b, n, d)
        return attn, self.out(ctx)

    def forward(
        self,
        x: torch.Tensor,
        baseline: torch.Tensor | None = None,
        trace: AttentionTrace | None = None,
        trace_slot: str = "token",
    ) -> tuple[torch.Tensor, torch.Tensor | None]:
        attn, y = self._attend(x)
        if trace is not None:
            if trace.retain_grads and attn.requires_grad:
                attn.retain_grad()
            if trace_slot == "token":
                trace.token.append(attn)
            else:
                trace.chunk = attn
        y0 = None
        if baseline is not None:
            with torch.no_grad():
                _, y0 = self._attend(baseline)
        return y, y0


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.mha = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.ff1 = nn.Linear(cfg.d_model, cfg.d_ff)
        self.ff2 = nn.Linear(cfg.d_ff, cfg.d_model)
        self.ln2 = nn.LayerNorm(cfg.d_model)

    def forward(
        self,
        x: torch.Tensor,
        baseline: torch.Tensor | None = None,
        rescale: bool = False,
        trace: AttentionTrace | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor | None]:
        a, a0 = self.mha(x, baseline, trace=trace)
        x = self.ln1(x + a)
        x0 = None
        if baseline is not None:
            with torch.no_grad():
                x0 = self.ln1(baseline + a0)
        h = self.ff1(x)
        if baseline is not None:
            with torch.no_grad():
                h0 = self.ff1(x0)
            g = _SecantGelu.apply(h, h0) if rescale else _gelu(h)
            with torch.no_grad():
                g0 = _gelu(h0)
                x0 = self.ln2(x0 + self.ff2(g0))
        else:
            g = _gelu(h)
        x = self.ln2(x + self.ff2(g))
        return x, x0


class TinyTransformer(nn.Module):
    """Chunk encoder + cross-chunk attention + mean-pool classifier."""

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        torch.manual_seed(cfg.seed)
        self.cfg = cfg
        self.token_emb = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.pos_emb = nn.Embedding(cfg.max_chunk_len, cfg.d_model)
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.n_layers))
        self.chunk_mha = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.chunk_ln = nn.LayerNorm(cfg.d_model)
        self.head = nn.Linear(cfg.d_model, cfg.n_classes)
        self.to(cfg.torch_dtype())

    def embed_ids(self, ids: torch.Tensor) -> torch.Tensor:
        """Token embeddings only, positions added later: (B, C, L) -> (B, C, L, D)."""
        return self.token_emb(ids)

    def forward_from_token_embeddings(
        self,
        tok_emb: torch.Tensor,
        baseline_emb: torch.Tensor | None = None,
        rescale: bool = False,
        trace: AttentionTrace | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor | None]:
        """(B, C, L, D) token embeddings -> (B, n_classes) logits.

        With ``baseline_emb`` a detached baseline pass runs in parallel and
        ``rescale`` switches the nonlinearity backward to secant slopes
        against that baseline. Returns (logits, baseline_logits or None).
        """
        if tok_emb.ndim != 4:
            raise HarnessError("expected (batch, chunks, length, dim) embeddings")
        b, c, l, d = tok_emb.shape
        pos = self.pos_emb(torch.arange(l, device=tok_emb.device))
        x = (tok_emb + pos).reshape(b * c, l, d)
        x0 = None
        if baseline_emb is not None:
            x0 = (baseline_emb.detach() + pos).reshape(b * c, l, d)
        for layer in self.layers:
            x, x0 = layer(x, baseline=x0, rescale=rescale, trace=trace)
        chunk_reps = x.mean(dim=1).reshape(b, c, d)
        a, _ = self.chunk_mha(chunk_reps, trace=trace, trace_slot="chunk")
        pooled = self.chunk_ln(chunk_reps + a).mean(dim=1)
        logits = self.head(pooled)
        logits0 = None
        if x0 is not None:
            with torch.no_grad():
                reps0 = x0.mean(dim=1).reshape(b, c, d)
                a0, _ = self.chunk_mha(reps0)
                logits0 = self.head(self.chunk_ln(reps0 + a0).mean(dim=1))
        return logits, logits0

    def forward_ids(
        self, ids: torch.Tensor, trace: AttentionTrace | None = None
    ) -> torch.Tensor:
        logits, _ = self.forward_from_token_embeddings(self.embed_ids(ids), trace=trace)
        return logits

    def zero_head_(self) -> "TinyTransformer":
        """Make the classifier constant: exact zero logits, exact zero gradients."""
        with torch.no_grad():
            self.head.weight.zero_()
            self.head.bias.zero_()
        return self
