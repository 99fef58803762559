"""Multi-scale connections between pyramid levels.

Every finer level receives residual contributions from all coarser levels.
Contributions start from the already-fused coarser map and pass through a
chain of upsample blocks (one per 2x step), each chain with its own weights.
"""
from typing import Dict, List, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import ShapeError, TokenGrid


class UpsampleBlock(nn.Module):
    """Bilinear 2x, linear channel alignment, layer norm, gated absolute position."""

    def __init__(self, dim_in: int, dim_out: int, out_side: int):
        super().__init__()
        self.dim_in = dim_in
        self.out_side = out_side
        self.channel_align = nn.Linear(dim_in, dim_out)
        self.norm = nn.LayerNorm(dim_out)
        self.abs_pos = nn.Parameter(torch.zeros(out_side * out_side, dim_out))
        nn.init.trunc_normal_(self.abs_pos, std=0.02)
        self.pos_gate = nn.Parameter(torch.zeros(()))

    def forward(self, grid: TokenGrid) -> TokenGrid:
        if grid.dim != self.dim_in:
            raise ShapeError(f"upsample expects dim {self.dim_in}, got {grid.dim}")
        if 2 * grid.h != self.out_side or 2 * grid.w != self.out_side:
            raise ShapeError(f"upsample from {grid.h}x{grid.w} cannot reach side {self.out_side}")
        fmap = F.interpolate(grid.to_map(), scale_factor=2, mode="bilinear", align_corners=False)
        up = TokenGrid.from_map(fmap)
        x = self.norm(self.channel_align(up.data))
        return up.with_data(x + self.pos_gate * self.abs_pos)


def upsample_block(grid: TokenGrid, p: UpsampleBlock) -> TokenGrid:
    return p(grid)


def fusion_pairs(n_levels: int = 4, all_coarser: bool = True) -> List[Tuple[int, int]]:
    """(source, target) level pairs, source coarser than target."""
    pairs = []
    for i in range(n_levels - 1):
        for j in range(i + 1, n_levels):
            if all_coarser or j == i + 1:
                pairs.append((j, i))
    return pairs


class PyramidFusion(nn.Module):
    """Top-down residual fusion.

    ``all_coarser=False`` keeps only adjacent-level links, the classic feature
    pyramid connection used as the "without multi-scale connections" baseline.
    """

    def __init__(self, dims: List[int], sides: List[int], all_coarser: bool = True):
        super().__init__()
        self.dims = list(dims)
        self.sides = list(sides)
        self.pairs = fusion_pairs(len(dims), all_coarser)
        self.chains = nn.ModuleDict()
        for j, i in self.pairs:
            self.chains[f"{j}_to_{i}"] = nn.Sequential(*[
                UpsampleBlock(dims[k], dims[k - 1], sides[k - 1]) for k in range(j, i, -1)])

    def chain(self, j: int, i: int) -> nn.Sequential:
        return self.chains[f"{j}_to_{i}"]

    def forward(self, levels: List[TokenGrid]) -> List[TokenGrid]:
        n = len(levels)
        fused: Dict[int, TokenGrid] = {n - 1: levels[n - 1]}
        for i in range(n - 2, -1, -1):
            x = levels[i].data
            for j in range(i + 1, n):
                if (j, i) not in self.pairs:
                    continue
                x = x + self.chain(j, i)(fused[j]).data
            fused[i] = levels[i].with_data(x)
        return [fused[i] for i in range(n)]


def fuse_pyramid(levels: List[TokenGrid], fusion: PyramidFusion) -> List[TokenGrid]:
    return fusion(levels)
