"""Miniature style-based generator used as the frozen inversion target.

Mapping MLP z -> w, a learned 4x4 constant, and two style-modulated conv
blocks per resolution. There are no noise inputs, so synthesis is a pure
function of the W+ codes.
"""
import math
from dataclasses import dataclass
from typing import Dict, List, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import ShapeError


@dataclass
class GeneratorConfig:
    style_dim: int = 512
    base_resolution: int = 4
    output_resolution: int = 64
    channels: Optional[Dict[int, int]] = None
    mapping_depth: int = 8
    channel_base: int = 1024
    channel_max: int = 64

    def __post_init__(self):
        r = self.output_resolution
        if r < self.base_resolution or r & (r - 1):
            raise ValueError(f"output_resolution {r} must be a power of two >= base")
        if self.channels is None:
            self.channels = {res: min(self.channel_max, self.channel_base // res)
                             for res in self.resolutions}
        else:
            self.channels = {int(k): int(v) for k, v in self.channels.items()}

    @property
    def resolutions(self) -> List[int]:
        n = int(math.log2(self.output_resolution // self.base_resolution)) + 1
        return [self.base_resolution * 2 ** i for i in range(n)]

    @property
    def n_styles(self) -> int:
        return 2 * len(self.resolutions)


class MappingNetwork(nn.Module):
    def __init__(self, style_dim: int = 512, depth: int = 8):
        super().__init__()
        layers = []
        for _ in range(depth):
            lin = nn.Linear(style_dim, style_dim)
            # variance-preserving init keeps w at O(1) scale through the stack
            nn.init.kaiming_normal_(lin.weight, a=0.2, nonlinearity="leaky_relu")
            nn.init.zeros_(lin.bias)
            layers += [lin, nn.LeakyReLU(0.2)]
        self.net = nn.Sequential(*layers)

    def forward(self, z):
        return self.net(z)


class StyledConv(nn.Module):
    """Affine style -> per-channel scale/shift on instance-normalized features, then 3x3 conv."""

    def __init__(self, style_dim, in_ch, out_ch):
        super().__init__()
        self.affine = nn.Linear(style_dim, 2 * in_ch)
        nn.init.zeros_(self.affine.bias)
        self.affine.weight.data.mul_(0.25)
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.act = nn.LeakyReLU(0.2)

    def forward(self, x, w):
        scale, shift = self.affine(w).chunk(2, dim=1)
        x = F.instance_norm(x)
        x = x * (1 + scale[:, :, None, None]) + shift[:, :, None, None]
        return self.act(self.conv(x))


class Generator(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        ch = cfg.channels
        res = cfg.resolutions
        self.mapping = MappingNetwork(cfg.style_dim, cfg.mapping_depth)
        self.const = nn.Parameter(torch.randn(1, ch[res[0]], res[0], res[0]))
        self.convs = nn.ModuleList()
        in_ch = ch[res[0]]
        for r in res:
            self.convs.append(StyledConv(cfg.style_dim, in_ch, ch[r]))
            self.convs.append(StyledConv(cfg.style_dim, ch[r], ch[r]))
            in_ch = ch[r]
        self.to_rgb = nn.Conv2d(in_ch, 3, 1)
        self.register_buffer("w_avg", torch.zeros(cfg.style_dim))

    @property
    def n_styles(self) -> int:
        return self.cfg.n_styles

    def sample_w(self, n: int, seed: int = 0) -> torch.Tensor:
        if n < 1:
            raise ValueError("n must be >= 1")
        g = torch.Generator().manual_seed(seed)
        z = torch.randn(n, self.cfg.style_dim, generator=g).to(self.const)
        return self.mapping(z)

    @torch.no_grad()
    def update_w_avg(self, n: int = 4096, seed: int = 12345):
        self.w_avg.copy_(self.sample_w(n, seed).mean(0))

    def synthesize(self, codes: torch.Tensor, return_features: bool = False):
        if codes.dim() == 2:
            codes = codes.unsqueeze(1).expand(-1, self.n_styles, -1)
        if codes.dim() != 3 or codes.shape[1] != self.n_styles or codes.shape[2] != self.cfg.style_dim:
            raise ShapeError(
                f"expected codes [batch, {self.n_styles}, {self.cfg.style_dim}], got {tuple(codes.shape)}")
        x = self.const.expand(codes.shape[0], -1, -1, -1)
        feats = []
        for k, conv in enumerate(self.convs):
            if k and k % 2 == 0:
                x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            x = conv(x, codes[:, k])
            feats.append(x)
        img = torch.tanh(self.to_rgb(x))
        if return_features:
            return img, feats
        return img

    def forward(self, codes):
        return self.synthesize(codes)


def mapping(z: torch.Tensor, gen: Generator) -> torch.Tensor:
    return gen.mapping(z)


def sample_w(n: int, seed: int, gen: Generator) -> torch.Tensor:
    return gen.sample_w(n, seed)


def synthesize(codes: torch.Tensor, gen: Generator) -> torch.Tensor:
    return gen.synthesize(codes)


def style_mix(a: torch.Tensor, b: torch.Tensor, layers) -> torch.Tensor:
    """Rows listed in ``layers`` come from ``b``, all others from ``a``."""
    if a.shape != b.shape:
        raise ShapeError(f"code shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    n = a.shape[-2]
    layers = list(layers)
    bad = [i for i in layers if not 0 <= i < n]
    if bad:
        raise IndexError(f"style layers {bad} out of range 0..{n - 1}")
    mask = torch.zeros(n, 1, dtype=torch.bool, device=a.device)
    if layers:
        mask[layers] = True
    return torch.where(mask, b, a)
