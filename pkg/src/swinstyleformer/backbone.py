"""Four-stage hierarchical windowed-attention encoder."""
from typing import List

import torch
import torch.nn as nn

from .attention import WindowAttention
from .core import EncoderConfig, PatchEmbed, ShapeError, TokenGrid, check_image_batch


class PatchMerging(nn.Module):
    """2x spatial downsample: concat each 2x2 block (4*dim), normalize, project.

    Concatenation order inside a block is row-major: top-left, top-right,
    bottom-left, bottom-right.
    """

    def __init__(self, dim: int, out_dim: int = None, norm: bool = True):
        super().__init__()
        out_dim = out_dim or 2 * dim
        self.norm = nn.LayerNorm(4 * dim) if norm else nn.Identity()
        self.reduction = nn.Linear(4 * dim, out_dim, bias=False)

    def forward(self, grid: TokenGrid) -> TokenGrid:
        h, w = grid.h, grid.w
        if h % 2 or w % 2:
            raise ShapeError(f"patch merging needs an even grid, got {h}x{w}")
        b, c = grid.batch, grid.dim
        x = grid.data.view(b, h // 2, 2, w // 2, 2, c).permute(0, 1, 3, 2, 4, 5)
        x = x.reshape(b, (h // 2) * (w // 2), 4 * c)
        return TokenGrid(self.reduction(self.norm(x)), h // 2, w // 2)


def patch_merging(grid: TokenGrid, module: PatchMerging) -> TokenGrid:
    return module(grid)


class Mlp(nn.Module):
    def __init__(self, dim: int, ratio: float = 4.0):
        super().__init__()
        hidden = int(dim * ratio)
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


class TransformerBlock(nn.Module):
    """Pre-norm block: x + attn(norm(x)), then x + mlp(norm(x))."""

    def __init__(self, dim, heads, window_size, shift=0, mlp_ratio=4.0, learnable_queries=False):
        super().__init__()
        self.shift = shift
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, heads, window_size, learnable_queries=learnable_queries)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, mlp_ratio)

    def forward(self, grid: TokenGrid) -> TokenGrid:
        x = grid.data
        x = x + self.attn(grid.with_data(self.norm1(x)), shift=self.shift).data
        x = x + self.mlp(self.norm2(x))
        return grid.with_data(x)


class Stage(nn.Module):
    def __init__(self, dim, depth, heads, window_size, side, mlp_ratio=4.0):
        super().__init__()
        self.dim = dim
        self.side = side
        # a single window covering the whole grid gains nothing from shifting
        shift = window_size // 2 if window_size < side else 0
        self.blocks = nn.ModuleList([
            TransformerBlock(dim, heads, window_size, shift=0 if i % 2 == 0 else shift,
                             mlp_ratio=mlp_ratio)
            for i in range(depth)])

    def forward(self, grid: TokenGrid) -> TokenGrid:
        if (grid.h, grid.w, grid.dim) != (self.side, self.side, self.dim):
            raise ShapeError(
                f"stage expects {self.side}x{self.side}x{self.dim}, got {grid.h}x{grid.w}x{grid.dim}")
        for blk in self.blocks:
            grid = blk(grid)
        return grid


class SwinBackbone(nn.Module):
    """Patch embed, then four stages with patch merging in between.

    ``forward`` returns the feature pyramid finest-first.
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        dims = cfg.stage_dims
        self.patch_embed = PatchEmbed(cfg.patch_size, 3, dims[0])
        self.stages = nn.ModuleList([
            Stage(dims[i], cfg.stage_depths[i], cfg.stage_heads[i], cfg.effective_window(i),
                  cfg.stage_side(i), cfg.mlp_ratio)
            for i in range(4)])
        self.merges = nn.ModuleList([PatchMerging(dims[i], dims[i + 1]) for i in range(3)])

    def run_stage(self, grid: TokenGrid, stage_index: int) -> TokenGrid:
        return self.stages[stage_index](grid)

    def forward(self, img: torch.Tensor) -> List[TokenGrid]:
        check_image_batch(img, self.cfg.input_resolution)
        grid = self.patch_embed(img)
        levels = []
        for i in range(4):
            if i:
                grid = self.merges[i - 1](grid)
            grid = self.stages[i](grid)
            levels.append(grid)
        return levels


def encode_pyramid(img: torch.Tensor, backbone: SwinBackbone) -> List[TokenGrid]:
    return backbone(img)
