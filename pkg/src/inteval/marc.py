"""Mask-optimization rationale extraction.

A soft token mask is parameterized per token by a significance weight and a
neighborhood width: each token spreads its weight over neighbors through a
Gaussian kernel, and a logistic squash maps the summed influence into
[0, 1]. Gradient descent adjusts both parameter vectors to minimize

    -L(masked, y_hat) + L(complement, y_hat) + sparsity + smoothness

where L is the log-likelihood the classifier assigns to its own unmasked
prediction y_hat. Forward passes perturb the mask stochastically (Gaussian
embedding noise, a small fraction of mask values clamped to 0 for the
masked pass and 1 for the complement pass); the regularizers always read
the clean mask. Binarizing the final mask at a threshold yields spans.

The kernel form and the smoothness penalty (sum of squared neighbor
differences) are reconstructions: the roles of the two parameter vectors
are documented upstream, their exact composition is not. Both live behind
single functions so alternatives are one-function swaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import OptimizationError
from .harness.base import Harness
from .harness.chunking import ChunkedInput
from .rationales import RationaleSet, Span, Technique

LOSS_TERMS = ("sufficiency", "comprehensiveness", "sparsity", "smoothness")


@dataclass(frozen=True)
class MarcConfig:
    """Objective weights, initialization, perturbations, and descent knobs.

    The sparsity pressure is a mean over the document, so its per-token
    gradient shrinks with document length; the default step size and step
    count are sized so filler positions actually cross the binarization
    threshold on few-hundred-token documents within the budget.
    """

    alpha_lambda: float = 1.0
    alpha_sigma: float = 1.2
    omega_init: float = 1.2
    sigma_init: float = 2.0
    noise_std: float = 0.3
    flip_fraction: float = 0.05
    steps: int = 600
    lr: float = 3.0
    binarize_threshold: float = 0.5
    sigma_floor: float = 1e-3

    def __post_init__(self) -> None:
        if min(self.alpha_lambda, self.alpha_sigma, self.noise_std) < 0:
            raise OptimizationError("objective weights must be non-negative")
        if not 0 <= self.flip_fraction < 0.5:
            raise OptimizationError("flip fraction must lie in [0, 0.5)")
        if self.steps < 1 or self.lr <= 0:
            raise OptimizationError("steps must be >= 1 and lr positive")
        if self.sigma_init <= 0 or self.sigma_floor <= 0:
            raise OptimizationError("sigma must stay positive")


@dataclass(frozen=True)
class MaskParams:
    """Per-token significance weights and neighborhood widths."""

    omega: np.ndarray
    sigma: np.ndarray

    def __post_init__(self) -> None:
        omega = np.asarray(self.omega, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if omega.shape != sigma.shape or omega.ndim != 1 or omega.size == 0:
            raise OptimizationError("parameter vectors must be equal-length 1-D")
        if (sigma <= 0).any():
            raise OptimizationError("sigma must be positive everywhere")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "sigma", sigma)

    @property
    def n_tokens(self) -> int:
        return int(self.omega.size)


@dataclass
class SoftMask:
    """A continuous mask with its source parameters and optimization trace."""

    lam: np.ndarray
    params: MaskParams
    trace: list[dict[str, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        lam = np.asarray(self.lam, dtype=np.float64)
        if lam.ndim != 1 or lam.size != self.params.n_tokens:
            raise OptimizationError("mask length must match parameter length")
        if (lam < 0).any() or (lam > 1).any():
            raise OptimizationError("mask values must lie in [0, 1]")
        self.lam = lam


def _lambda_tensor(omega: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    """lambda_i = logistic( sum_j omega_j * N(i - j; sigma_j) ).

    Token j spreads a total influence of omega_j over its neighborhood via a
    normalized Gaussian, so the squash input stays O(omega) regardless of
    sigma and the logistic operates in its responsive range at the standard
    initialization. An unnormalized exponential kernel would scale the sum
    by roughly sigma * sqrt(2*pi) and saturate the squash from the start.
    """
    n = omega.shape[0]
    idx = torch.arange(n, dtype=omega.dtype)
    sq = (idx.unsqueeze(1) - idx.unsqueeze(0)) ** 2  # (i, j)
    var = sigma.unsqueeze(0) ** 2
    kernel = torch.exp(-sq / (2.0 * var)) / (
        sigma.unsqueeze(0) * math.sqrt(2.0 * math.pi)
    )
    return torch.sigmoid(kernel @ omega)


def mask_from_params(params: MaskParams) -> SoftMask:
    omega = torch.from_numpy(params.omega)
    sigma = torch.from_numpy(params.sigma)
    lam = _lambda_tensor(omega, sigma).numpy()
    return SoftMask(lam=lam, params=params)


def _loss_terms(
    harness: Harness,
    chunked: ChunkedInput,
    lam: torch.Tensor,
    y_hat: int,
    cfg: MarcConfig,
    generator: torch.Generator,
) -> dict[str, torch.Tensor]:
    """The four objective terms, with perturbed forwards and clean regularizers."""
    n = lam.shape[0]
    d = harness.embedding_dim

    def perturbed(weights: torch.Tensor) -> torch.Tensor:
        noise = None
        if cfg.noise_std > 0:
            noise = (
                torch.randn(n, d, generator=generator, dtype=torch.float64)
                * cfg.noise_std
            )
        logits = harness.soft_forward(chunked, weights, noise=noise)
        return torch.log_softmax(logits, dim=-1)[0, y_hat]

    flips_masked = torch.rand(n, generator=generator) < cfg.flip_fraction
    flips_complement = torch.rand(n, generator=generator) < cfg.flip_fraction
    lam_masked = torch.where(flips_masked, torch.zeros_like(lam), lam)
    lam_complement = torch.where(flips_complement, torch.ones_like(lam), lam)

    sufficiency = -perturbed(lam_masked)
    comprehensiveness = perturbed(1.0 - lam_complement)
    sparsity = cfg.alpha_lambda * lam.mean()
    smoothness = cfg.alpha_sigma * ((lam[:-1] - lam[1:]) ** 2).sum()

    terms = {
        "sufficiency": sufficiency,
        "comprehensiveness": comprehensiveness,
        "sparsity": sparsity,
        "smoothness": smoothness,
    }
    for name, value in terms.items():
        if not torch.isfinite(value):
            raise OptimizationError(f"non-finite {name} term in mask objective")
    return terms


def marc_loss(
    harness: Harness,
    chunked: ChunkedInput,
    mask: SoftMask,
    y_hat: int,
    cfg: MarcConfig | None = None,
    seed: int = 0,
) -> dict[str, float]:
    """Evaluate the objective once for a given mask (no parameter gradients)."""
    cfg = cfg or MarcConfig()
    generator = torch.Generator().manual_seed(seed)
    lam = torch.from_numpy(np.asarray(mask.lam, dtype=np.float64))
    with torch.no_grad():
        terms = _loss_terms(harness, chunked, lam, y_hat, cfg, generator)
    return {name: float(value) for name, value in terms.items()}


def optimize_mask(
    harness: Harness,
    chunked: ChunkedInput,
    cfg: MarcConfig | None = None,
    seed: int = 0,
    target: int | None = None,
) -> SoftMask:
    """Fit the mask parameters by plain gradient descent.

    ``target`` defaults to the classifier's own prediction on the unmasked
    document; passing a gold label instead is an ablation, not the normal
    path. Deterministic for a fixed seed: noise and flips come from one
    seeded generator.
    """
    cfg = cfg or MarcConfig()
    n = chunked.n_tokens
    y_hat = target if target is not None else harness.predict(chunked).predicted

    generator = torch.Generator().manual_seed(seed)
    omega = torch.full((n,), cfg.omega_init, dtype=torch.float64, requires_grad=True)
    sigma = torch.full((n,), cfg.sigma_init, dtype=torch.float64, requires_grad=True)
    optimizer = torch.optim.SGD([omega, sigma], lr=cfg.lr)

    trace: list[dict[str, float]] = []
    for _ in range(cfg.steps):
        optimizer.zero_grad()
        lam = _lambda_tensor(omega, sigma)
        terms = _loss_terms(harness, chunked, lam, y_hat, cfg, generator)
        total = sum(terms.values())
        total.backward()
        optimizer.step()
        with torch.no_grad():
            sigma.clamp_(min=cfg.sigma_floor)
        trace.append({name: v.detach().item() for name, v in terms.items()})

    params = MaskParams(
        omega=omega.detach().numpy().copy(), sigma=sigma.detach().numpy().copy()
    )
    final = mask_from_params(params)
    final.trace = trace
    return final


def binarize(
    mask: SoftMask,
    case_id: str,
    threshold: float | None = None,
    cfg: MarcConfig | None = None,
) -> RationaleSet:
    """Maximal runs of mask values at or above the threshold become spans.

    Single-token runs are kept: the optimizer has no length floor.
    """
    threshold = threshold if threshold is not None else (cfg or MarcConfig()).binarize_threshold
    keep = mask.lam >= threshold
    spans: list[Span] = []
    start: int | None = None
    for i, flag in enumerate(keep):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            spans.append(Span(start, i))
            start = None
    if start is not None:
        spans.append(Span(start, len(keep)))
    return RationaleSet(case_id=case_id, technique=Technique.MARC, spans=spans)


def extract_marc(
    harness: Harness,
    chunked: ChunkedInput,
    cfg: MarcConfig | None = None,
    seed: int = 0,
) -> tuple[RationaleSet, SoftMask]:
    """Optimize and binarize in one call; returns the spans and the mask."""
    cfg = cfg or MarcConfig()
    mask = optimize_mask(harness, chunked, cfg, seed=seed)
    return binarize(mask, chunked.case_id, cfg=cfg), mask
