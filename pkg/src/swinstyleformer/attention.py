"""Window multi-head attention, plain and with a shared learnable query bank."""
from functools import lru_cache

import torch
import torch.nn as nn

from .core import ShapeError, TokenGrid, cyclic_shift, window_partition, window_reverse

MASK_VALUE = -1e4


def relative_position_index(ws: int) -> torch.Tensor:
    coords = torch.stack(torch.meshgrid(torch.arange(ws), torch.arange(ws), indexing="ij"))
    flat = coords.flatten(1)
    rel = (flat[:, :, None] - flat[:, None, :]).permute(1, 2, 0)
    rel = rel + (ws - 1)
    return rel[..., 0] * (2 * ws - 1) + rel[..., 1]


@lru_cache(maxsize=64)
def shift_mask(h: int, w: int, ws: int, shift: int) -> torch.Tensor:
    """Additive ``[n_windows, ws*ws, ws*ws]`` mask blocking attention across roll seams."""
    region = torch.zeros(1, h * w, 1)
    labels = region.view(h, w)
    cnt = 0
    for hs in (slice(0, -ws), slice(-ws, -shift), slice(-shift, None)):
        for wsl in (slice(0, -ws), slice(-ws, -shift), slice(-shift, None)):
            labels[hs, wsl] = cnt
            cnt += 1
    wins = window_partition(TokenGrid(region, h, w), ws).squeeze(-1)
    diff = wins[:, None, :] - wins[:, :, None]
    return torch.where(diff != 0, torch.tensor(MASK_VALUE), torch.tensor(0.0))


class WindowAttention(nn.Module):
    """Window attention with relative position bias.

    With ``learnable_queries=True`` the query projection is dropped and a single
    trainable bank of ``[heads, ws*ws, dim/heads]`` queries is broadcast to every
    window of every image; keys and values are still projected from the input.
    """

    def __init__(self, dim: int, heads: int, window_size: int, learnable_queries: bool = False,
                 query_std: float = 0.02):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.window_size = window_size
        self.head_dim = dim // heads
        self.scale = self.head_dim ** -0.5
        self.learnable_queries = learnable_queries

        if learnable_queries:
            self.query_bank = nn.Parameter(
                torch.randn(heads, window_size * window_size, self.head_dim) * query_std)
        else:
            self.q = nn.Linear(dim, dim, bias=False)
        self.k = nn.Linear(dim, dim, bias=False)
        self.v = nn.Linear(dim, dim, bias=False)
        self.proj = nn.Linear(dim, dim)

        self.relative_position_bias_table = nn.Parameter(
            torch.zeros((2 * window_size - 1) ** 2, heads))
        nn.init.trunc_normal_(self.relative_position_bias_table, std=0.02)
        self.register_buffer("relative_position_index", relative_position_index(window_size),
                             persistent=False)

    def relative_bias(self) -> torch.Tensor:
        n = self.window_size ** 2
        bias = self.relative_position_bias_table[self.relative_position_index.view(-1)]
        return bias.view(n, n, self.heads).permute(2, 0, 1)

    def _windows_forward(self, wins, mask=None):
        bw, n, c = wins.shape
        k = self.k(wins).view(bw, n, self.heads, self.head_dim).transpose(1, 2)
        v = self.v(wins).view(bw, n, self.heads, self.head_dim).transpose(1, 2)
        if self.learnable_queries:
            q = self.query_bank.unsqueeze(0).expand(bw, -1, -1, -1)
        else:
            q = self.q(wins).view(bw, n, self.heads, self.head_dim).transpose(1, 2)
        logits = (q * self.scale) @ k.transpose(-2, -1) + self.relative_bias().unsqueeze(0)
        if mask is not None:
            n_win = mask.shape[0]
            logits = logits.view(bw // n_win, n_win, self.heads, n, n) + mask[None, :, None]
            logits = logits.view(bw, self.heads, n, n)
        attn = logits.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(bw, n, c)
        return self.proj(out), attn

    def forward(self, grid: TokenGrid, shift: int = 0, return_weights: bool = False):
        ws = self.window_size
        if grid.h % ws or grid.w % ws:
            raise ShapeError(f"grid {grid.h}x{grid.w} not divisible by window size {ws}")
        if grid.dim != self.dim:
            raise ShapeError(f"grid dim {grid.dim} != attention dim {self.dim}")
        if shift and self.learnable_queries:
            raise ValueError("learnable-query attention has no shifted variant")
        if shift not in (0, ws // 2) or (shift and ws < 2):
            raise ValueError(f"shift must be 0 or ws/2={ws // 2}, got {shift}")
        mask = None
        if shift:
            grid = cyclic_shift(grid, shift)
            mask = shift_mask(grid.h, grid.w, ws, shift).to(grid.data)
        out, attn = self._windows_forward(window_partition(grid, ws), mask)
        out = window_reverse(out, ws, grid.h, grid.w)
        if shift:
            out = cyclic_shift(out, -shift)
        if return_weights:
            return out, attn
        return out


def wmsa(grid: TokenGrid, attn: WindowAttention, shift: int = 0) -> TokenGrid:
    if attn.learnable_queries:
        raise ValueError("wmsa needs a projected-query attention module")
    return attn(grid, shift=shift)


def lq_wmsa(grid: TokenGrid, attn: WindowAttention) -> TokenGrid:
    if not attn.learnable_queries:
        raise ValueError("lq_wmsa needs a learnable-query attention module")
    return attn(grid)


def attention_weights(grid: TokenGrid, attn: WindowAttention, shift: int = 0) -> torch.Tensor:
    """Post-softmax weights ``[batch * n_windows, heads, ws*ws, ws*ws]`` actually applied."""
    _, weights = attn(grid, shift=shift, return_weights=True)
    return weights
