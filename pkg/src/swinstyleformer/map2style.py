"""Per-style towers that turn fused pyramid levels into W+ latent codes."""
import math
from dataclasses import dataclass, field
from typing import List, Optional

import torch
import torch.nn as nn

from .backbone import Mlp, PatchMerging, TransformerBlock
from .core import ShapeError, TokenGrid

MODES = ("lq", "wmsa", "mlp")


def n_styles_for(resolution: int) -> int:
    return 2 * (int(math.log2(resolution)) - 1)


def default_level_groups(n_styles: int, n_levels: int = 4) -> List[List[int]]:
    """Split style indices over pyramid levels, returned finest-level first.

    Coarse generator layers (low style indices) read the coarsest level. The
    remainder of ``n_styles / n_levels`` goes to the middle levels, so 14 styles
    split 3/4/4/3 from coarsest to finest.
    """
    base, rem = divmod(n_styles, n_levels)
    sizes = [base] * n_levels
    middle = list(range(1, n_levels - 1)) or list(range(n_levels))
    for k in range(rem):
        sizes[middle[k % len(middle)]] += 1
    groups, start = [], 0
    for size in sizes:  # coarsest first
        groups.append(list(range(start, start + size)))
        start += size
    return groups[::-1]


@dataclass
class Map2StyleConfig:
    style_dim: int = 512
    n_styles: int = 14
    level_groups: Optional[List[List[int]]] = None
    lq_window: int = 2
    mode: str = "lq"
    mlp_ratio: float = 4.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"map2style mode must be one of {MODES}, got {self.mode!r}")
        if self.level_groups is None:
            self.level_groups = default_level_groups(self.n_styles)
        flat = sorted(s for g in self.level_groups for s in g)
        if flat != list(range(self.n_styles)):
            raise ValueError(
                f"level_groups {self.level_groups} must partition 0..{self.n_styles - 1}")

    def level_of(self, style: int) -> int:
        for lvl, group in enumerate(self.level_groups):
            if style in group:
                return lvl
        raise IndexError(style)


def tower_depths(side: int):
    """(merges down to 16 tokens, linear reductions down to 1 token) for a square grid."""
    if side < 1 or side & (side - 1):
        raise ShapeError(f"tower input side must be a power of two, got {side}")
    n1 = max(0, int(math.log2(side)) - 2)
    n2 = int(math.log2(min(side, 4)))
    return n1, n2


class TokenMlpBlock(nn.Module):
    """Residual token-wise MLP, the all-linear replacement for attention blocks."""

    def __init__(self, dim, ratio=4.0):
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, ratio)

    def forward(self, grid: TokenGrid) -> TokenGrid:
        return grid.with_data(grid.data + self.mlp(self.norm(grid.data)))


class StyleTower(nn.Module):
    """Merge + attention block until 16 tokens remain, then linear reductions to one token."""

    def __init__(self, in_dim: int, side: int, cfg: Map2StyleConfig):
        super().__init__()
        self.side = side
        n1, n2 = tower_depths(side)
        self.merges = nn.ModuleList()
        self.blocks = nn.ModuleList()
        dim, s = in_dim, side
        for _ in range(n1):
            out = min(2 * dim, cfg.style_dim)
            self.merges.append(PatchMerging(dim, out))
            dim, s = out, s // 2
            ws = min(cfg.lq_window, s)
            heads = max(1, dim // 64)
            if cfg.mode == "mlp":
                self.blocks.append(TokenMlpBlock(dim, cfg.mlp_ratio))
            else:
                self.blocks.append(TransformerBlock(dim, heads, ws, shift=0, mlp_ratio=cfg.mlp_ratio,
                                                    learnable_queries=cfg.mode == "lq"))
        self.reductions = nn.ModuleList([PatchMerging(dim, dim, norm=False) for _ in range(n2)])
        self.act = nn.LeakyReLU(0.2)
        self.to_style = nn.Linear(dim, cfg.style_dim)

    def forward(self, grid: TokenGrid) -> torch.Tensor:
        if grid.h != self.side or grid.w != self.side:
            raise ShapeError(f"tower built for side {self.side}, got {grid.h}x{grid.w}")
        for merge, block in zip(self.merges, self.blocks):
            grid = block(merge(grid))
        for red in self.reductions:
            grid = red(grid)
            grid = grid.with_data(self.act(grid.data))
        return self.to_style(grid.data[:, 0])


def tower_forward(grid: TokenGrid, tower: StyleTower) -> torch.Tensor:
    return tower(grid)


class Map2Style(nn.Module):
    def __init__(self, level_dims: List[int], level_sides: List[int], cfg: Map2StyleConfig):
        super().__init__()
        if len(cfg.level_groups) != len(level_dims):
            raise ValueError("level_groups must have one entry per pyramid level")
        self.cfg = cfg
        self.style_level = [cfg.level_of(s) for s in range(cfg.n_styles)]
        self.towers = nn.ModuleList([
            StyleTower(level_dims[lvl], level_sides[lvl], cfg) for lvl in self.style_level])

    def forward(self, fused: List[TokenGrid]) -> torch.Tensor:
        codes = [tower(fused[lvl]) for tower, lvl in zip(self.towers, self.style_level)]
        return torch.stack(codes, dim=1)


def extract_latents(fused: List[TokenGrid], m2s: Map2Style) -> torch.Tensor:
    return m2s(fused)
