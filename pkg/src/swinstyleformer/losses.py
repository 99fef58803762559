"""Training objectives for the encoder and the inversion discriminator."""
import math
from dataclasses import dataclass
from typing import Dict, Mapping

import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import ShapeError


class NonFiniteLossError(FloatingPointError):
    def __init__(self, component: str, value: float):
        super().__init__(f"loss component {component!r} is not finite ({value})")
        self.component = component


@dataclass
class LossWeights:
    pixel: float = 1.0
    perceptual: float = 0.8
    identity: float = 0.1
    da: float = 0.1
    adv: float = 1e-4

    def __post_init__(self):
        for k, v in self.as_dict().items():
            if v < 0:
                raise ValueError(f"loss weight {k} must be >= 0, got {v}")

    def as_dict(self) -> Dict[str, float]:
        return {"pixel": self.pixel, "perceptual": self.perceptual, "identity": self.identity,
                "da": self.da, "adv": self.adv}


def _same_shape(x, y):
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")


def pixel_loss(x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    _same_shape(x, x_hat)
    return F.mse_loss(x_hat, x)


class RandomFeatureExtractor(nn.Module):
    """Frozen, seeded random conv stack standing in for a pretrained perceptual net."""

    def __init__(self, channels=(16, 32, 64), seed: int = 1234):
        super().__init__()
        g = torch.Generator().manual_seed(seed)
        layers, c_in = [], 3
        for c in channels:
            conv = nn.Conv2d(c_in, c, 3, stride=2, padding=1)
            fan_in = c_in * 9
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=g) * math.sqrt(2.0 / fan_in))
                conv.bias.zero_()
            layers.append(conv)
            c_in = c
        self.layers = nn.ModuleList(layers)
        self.requires_grad_(False)

    def forward(self, img):
        feats, x = [], img
        for conv in self.layers:
            x = F.leaky_relu(conv(x), 0.2)
            feats.append(x)
        return feats


def _unit_channels(f, eps=1e-10):
    return f / (f.pow(2).sum(dim=1, keepdim=True).sqrt() + eps)


def perceptual_loss(x: torch.Tensor, x_hat: torch.Tensor, extractor) -> torch.Tensor:
    """Mean over layers of the channel-unit-normalized squared feature distance.

    Per layer: each spatial position's channel vector is scaled to unit L2 norm,
    squared differences are summed over channels and averaged over positions and batch.
    """
    _same_shape(x, x_hat)
    fx, fy = extractor(x), extractor(x_hat)
    if len(fx) == 0:
        raise ValueError("feature extractor returned no layers")
    per_layer = [(_unit_channels(a) - _unit_channels(b)).pow(2).sum(dim=1).mean()
                 for a, b in zip(fx, fy)]
    return torch.stack(per_layer).mean()


class RandomIdentityEmbedder(nn.Module):
    """Seeded random projection of a 2x pooled image; cosine in id_loss does the normalizing."""

    def __init__(self, resolution: int = 64, dim: int = 128, seed: int = 4321):
        super().__init__()
        g = torch.Generator().manual_seed(seed)
        n_in = 3 * (resolution // 2) ** 2
        self.register_buffer("weight", torch.randn(dim, n_in, generator=g) / math.sqrt(n_in))

    def forward(self, img):
        x = F.avg_pool2d(img, 2).flatten(1)
        return x @ self.weight.t()


def id_loss(x: torch.Tensor, x_hat: torch.Tensor, embedder) -> torch.Tensor:
    _same_shape(x, x_hat)
    ex, ey = embedder(x), embedder(x_hat)
    nx, ny = ex.norm(dim=1), ey.norm(dim=1)
    if (nx == 0).any() or (ny == 0).any():
        raise ValueError("identity embedder produced a zero embedding")
    cos = (ex * ey).sum(dim=1) / (nx * ny)
    return (1 - cos).mean()


def _kl_rows(logits_p, logits_q):
    log_p = F.log_softmax(logits_p, dim=-1)
    log_q = F.log_softmax(logits_q, dim=-1)
    return (log_p.exp() * (log_p - log_q)).sum(-1)


def _kl_dist(p, q, eps=1e-12):
    return (p * ((p + eps).log() - (q + eps).log())).sum(-1)


def da_loss(codes: torch.Tensor, w_batch: torch.Tensor, strategy: str = "pairwise") -> torch.Tensor:
    """KL between softmax-normalized latent codes and sampled style vectors.

    ``pairwise``: code rows (flattened over batch and style index) are paired
    with ``w_batch`` rows reused cyclically; mean of KL(code || w).
    ``mean``: KL between the batch-averaged softmax distributions.
    """
    if w_batch.shape[0] == 0:
        raise ValueError("da_loss needs at least one sampled style vector")
    if codes.shape[-1] != w_batch.shape[-1]:
        raise ShapeError(f"style_dim mismatch: {codes.shape[-1]} vs {w_batch.shape[-1]}")
    rows = codes.reshape(-1, codes.shape[-1])
    if strategy == "pairwise":
        idx = torch.arange(rows.shape[0], device=rows.device) % w_batch.shape[0]
        return _kl_rows(rows, w_batch[idx]).mean()
    if strategy == "mean":
        p = F.softmax(rows, dim=-1).mean(0)
        q = F.softmax(w_batch, dim=-1).mean(0)
        return _kl_dist(p, q)
    raise ValueError(f"unknown DA pairing strategy {strategy!r}")


def distribution_gap(codes: torch.Tensor, w_batch: torch.Tensor) -> torch.Tensor:
    """Symmetric KL between batch-aggregated softmax distributions of codes and style vectors."""
    rows = codes.reshape(-1, codes.shape[-1])
    if rows.shape[0] == 0 or w_batch.shape[0] == 0:
        raise ValueError("distribution_gap needs nonempty inputs")
    p = F.softmax(rows, dim=-1).mean(0)
    q = F.softmax(w_batch, dim=-1).mean(0)
    return _kl_dist(p, q) + _kl_dist(q, p)


def adv_d_loss(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """Least-squares discriminator objective: real pairs pushed to +1, inversions to -1."""
    return ((d_real - 1) ** 2 + (d_fake + 1) ** 2).mean()


def adv_g_loss(d_fake: torch.Tensor) -> torch.Tensor:
    return ((d_fake - 1) ** 2).mean()


def sr_regularization(codes: torch.Tensor, w_avg: torch.Tensor) -> torch.Tensor:
    """Mean squared distance of every code row to the average style vector."""
    if codes.shape[-1] != w_avg.shape[-1]:
        raise ShapeError(f"style_dim mismatch: {codes.shape[-1]} vs {w_avg.shape[-1]}")
    return (codes - w_avg).pow(2).sum(-1).mean()


def total_loss(components: Mapping[str, torch.Tensor], weights: LossWeights) -> torch.Tensor:
    """Weighted sum; components absent from the mapping (ablated) contribute nothing."""
    w = weights.as_dict()
    unknown = set(components) - set(w)
    if unknown:
        raise KeyError(f"unknown loss components {sorted(unknown)}")
    total = None
    for name, value in components.items():
        v = float(value.detach()) if torch.is_tensor(value) else float(value)
        if not math.isfinite(v):
            raise NonFiniteLossError(name, v)
        term = w[name] * value
        total = term if total is None else total + term
    if total is None:
        return torch.zeros(())
    return total
