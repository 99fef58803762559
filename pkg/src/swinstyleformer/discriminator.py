"""Inversion discriminator: query encoder and momentum encoder scored by cosine similarity."""
import copy
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import ShapeError, check_image_batch


class ConvEncoder(nn.Module):
    """Strided conv stack in the style of a StyleGAN discriminator trunk."""

    def __init__(self, resolution: int = 64, out_dim: int = 256, base_ch: int = 32, max_ch: int = 128):
        super().__init__()
        self.resolution = resolution
        layers, c_in, side, ch = [nn.Conv2d(3, base_ch, 1), nn.LeakyReLU(0.2)], base_ch, resolution, base_ch
        while side > 4:
            ch = min(2 * c_in, max_ch)
            layers += [nn.Conv2d(c_in, ch, 3, stride=2, padding=1), nn.LeakyReLU(0.2)]
            c_in, side = ch, side // 2
        self.trunk = nn.Sequential(*layers)
        self.head = nn.Linear(c_in * side * side, out_dim)

    def forward(self, img):
        check_image_batch(img, self.resolution)
        return self.head(self.trunk(img).flatten(1))


def cosine(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    na, nb = a.norm(dim=1), b.norm(dim=1)
    if (na == 0).any() or (nb == 0).any():
        raise ValueError("zero-norm embedding in cosine score")
    return (a * b).sum(dim=1) / (na * nb)


class InversionDiscriminator(nn.Module):
    """``score(a, b) = cos(m_q(a), m_k(b))``; ``m_k`` is an EMA shadow of ``m_q``."""

    def __init__(self, resolution: int = 64, embed_dim: int = 256, momentum: float = 0.999):
        super().__init__()
        if not 0 <= momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        self.momentum = momentum
        self.query = ConvEncoder(resolution, embed_dim)
        self.key = copy.deepcopy(self.query)
        self.key.requires_grad_(False)

    def encode(self, img: torch.Tensor, which: str = "query") -> torch.Tensor:
        if which == "query":
            return self.query(img)
        if which == "momentum":
            with torch.no_grad():
                return self.key(img)
        raise ValueError(f"which must be 'query' or 'momentum', got {which!r}")

    def score(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        if a.shape[0] != b.shape[0]:
            raise ShapeError(f"batch sizes differ: {a.shape[0]} vs {b.shape[0]}")
        return cosine(self.encode(a, "query"), self.encode(b, "momentum"))

    forward = score

    @torch.no_grad()
    def momentum_update(self):
        m = self.momentum
        for pk, pq in zip(self.key.parameters(), self.query.parameters()):
            pk.mul_(m).add_(pq.detach(), alpha=1 - m)


class PlainDiscriminator(nn.Module):
    """Single-image realness critic used for the generic-discriminator ablation.

    Scores are squashed with tanh so they share the [-1, 1] range of the
    cosine scores and can reuse the same least-squares objectives.
    """

    def __init__(self, resolution: int = 64):
        super().__init__()
        self.net = ConvEncoder(resolution, 1)

    def score(self, a: torch.Tensor, b: torch.Tensor = None) -> torch.Tensor:
        return torch.tanh(self.net(a)).squeeze(1)

    forward = score

    def momentum_update(self):
        pass


def momentum_update(disc: InversionDiscriminator) -> InversionDiscriminator:
    disc.momentum_update()
    return disc


@dataclass
class AugmentConfig:
    enabled: bool = True
    crop: bool = True
    flip: bool = True
    jitter: bool = True
    crop_scale: float = 0.8
    brightness: float = 0.2
    contrast: float = 0.2


def _flip(x, g):
    flips = (torch.rand(x.shape[0], generator=g) < 0.5).to(x.device)
    return torch.where(flips[:, None, None, None], x.flip(-1), x)


def _crop_resize(x, g, min_scale):
    n, _, side, _ = x.shape
    out = []
    for i in range(n):
        s = min_scale + (1 - min_scale) * torch.rand((), generator=g).item()
        c = max(1, int(round(side * s)))
        top = int(torch.randint(0, side - c + 1, (), generator=g))
        left = int(torch.randint(0, side - c + 1, (), generator=g))
        patch = x[i:i + 1, :, top:top + c, left:left + c]
        out.append(F.interpolate(patch, size=(side, side), mode="bilinear", align_corners=False))
    return torch.cat(out)


def _jitter(x, g, brightness, contrast):
    n = x.shape[0]
    b = (torch.rand(n, 1, 1, 1, generator=g) * 2 - 1) * brightness
    c = 1 + (torch.rand(n, 1, 1, 1, generator=g) * 2 - 1) * contrast
    mean = x.mean(dim=(1, 2, 3), keepdim=True)
    return ((x - mean) * c.to(x) + mean + b.to(x)).clamp(-1, 1)


def augment_pair(x: torch.Tensor, x_hat: torch.Tensor, seed: int, cfg: AugmentConfig = None):
    """Unbalanced augmentation: strong pipeline on ``x_hat``, flip-only on ``x``.

    Returns ``(x_aug, x_hat_aug)``; deterministic for a given seed.
    """
    cfg = cfg or AugmentConfig()
    if x.shape != x_hat.shape:
        raise ShapeError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    if not cfg.enabled:
        return x, x_hat
    g_weak = torch.Generator().manual_seed(seed)
    g_strong = torch.Generator().manual_seed(seed + 1)
    weak = _flip(x, g_weak) if cfg.flip else x
    strong = x_hat
    if cfg.crop:
        strong = _crop_resize(strong, g_strong, cfg.crop_scale)
    if cfg.flip:
        strong = _flip(strong, g_strong)
    if cfg.jitter:
        strong = _jitter(strong, g_strong, cfg.brightness, cfg.contrast)
    return weak, strong
