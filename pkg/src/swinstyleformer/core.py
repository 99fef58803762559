"""Geometric substrate shared by every attention module.

Layout convention: token grids are ``[batch, h*w, dim]`` tensors whose sequence
axis is the row-major flattening of an ``h x w`` spatial grid. Every function
here asserts this layout rather than guessing it.
"""
from dataclasses import dataclass, field
from typing import List

import numpy as np
import torch
import torch.nn as nn


class ShapeError(ValueError):
    """Raised when tensor geometry violates a layout contract."""


@dataclass
class TokenGrid:
    data: torch.Tensor
    h: int
    w: int

    def __post_init__(self):
        if self.h < 1 or self.w < 1:
            raise ShapeError(f"grid extent must be positive, got {self.h}x{self.w}")
        if self.data.dim() != 3 or self.data.shape[1] != self.h * self.w:
            raise ShapeError(
                f"token tensor {tuple(self.data.shape)} does not match grid {self.h}x{self.w}")

    @property
    def dim(self) -> int:
        return self.data.shape[-1]

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    def with_data(self, data: torch.Tensor) -> "TokenGrid":
        return TokenGrid(data, self.h, self.w)

    def to_map(self) -> torch.Tensor:
        """Return the grid as a ``[batch, dim, h, w]`` feature map."""
        b, _, c = self.data.shape
        return self.data.transpose(1, 2).reshape(b, c, self.h, self.w)

    @classmethod
    def from_map(cls, fmap: torch.Tensor) -> "TokenGrid":
        b, c, h, w = fmap.shape
        return cls(fmap.flatten(2).transpose(1, 2), h, w)


@dataclass
class EncoderConfig:
    patch_size: int = 4
    stage_dims: List[int] = field(default_factory=lambda: [96, 192, 384, 768])
    stage_depths: List[int] = field(default_factory=lambda: [2, 2, 6, 2])
    stage_heads: List[int] = field(default_factory=lambda: [3, 6, 12, 24])
    stage_window: List[int] = field(default_factory=lambda: [2, 2, 8, 8])
    input_resolution: int = 256
    mlp_ratio: float = 4.0

    def __post_init__(self):
        for name in ("stage_dims", "stage_depths", "stage_heads", "stage_window"):
            if len(getattr(self, name)) != 4:
                raise ValueError(f"{name} needs 4 entries")
        side = self.input_resolution // self.patch_size
        if self.input_resolution % self.patch_size or side % 8:
            raise ValueError(
                f"input_resolution {self.input_resolution} / patch_size {self.patch_size} "
                "must be an integer divisible by 8 (three merges)")
        for i, (d, h) in enumerate(zip(self.stage_dims, self.stage_heads)):
            if d % h:
                raise ValueError(f"stage {i}: dim {d} not divisible by heads {h}")
        for i, ws in enumerate(self.stage_window):
            if ws < 1:
                raise ValueError(f"stage {i}: window size must be >= 1")
            eff = self.effective_window(i)
            if self.stage_side(i) % eff:
                raise ValueError(f"stage {i}: side {self.stage_side(i)} not divisible by window {eff}")

    def stage_side(self, i: int) -> int:
        return self.input_resolution // self.patch_size // (2 ** i)

    def effective_window(self, i: int) -> int:
        # grids smaller than the window collapse to one whole-grid window
        return min(self.stage_window[i], self.stage_side(i))

    @classmethod
    def toy(cls, **overrides) -> "EncoderConfig":
        kw = dict(patch_size=4, stage_dims=[32, 64, 128, 256], stage_depths=[1, 1, 2, 1],
                  stage_heads=[1, 2, 4, 8], stage_window=[2, 2, 8, 8], input_resolution=64)
        kw.update(overrides)
        return cls(**kw)


def image_from_uint8(arr: np.ndarray) -> torch.Tensor:
    """``[h, w, 3]`` or ``[n, h, w, 3]`` uint8 array -> ``[n, 3, h, w]`` float in [-1, 1]."""
    arr = np.asarray(arr)
    if arr.ndim == 3:
        arr = arr[None]
    t = torch.from_numpy(arr.astype(np.float32)).permute(0, 3, 1, 2)
    return t / 127.5 - 1.0


def image_to_uint8(img: torch.Tensor) -> np.ndarray:
    """Inverse of :func:`image_from_uint8` with rounding and clamping."""
    x = ((img.detach().float().clamp(-1, 1) + 1.0) * 127.5).round()
    return x.permute(0, 2, 3, 1).cpu().numpy().astype(np.uint8)


def check_image_batch(img: torch.Tensor, resolution: int = None):
    if img.dim() != 4 or img.shape[1] != 3:
        raise ShapeError(f"expected [batch, 3, side, side] image, got {tuple(img.shape)}")
    h, w = img.shape[-2:]
    if h != w:
        raise ShapeError(f"images must be square, got {h}x{w}")
    if resolution is not None and h != resolution:
        raise ShapeError(f"image side {h} does not match configured resolution {resolution}")


class PatchEmbed(nn.Module):
    """Non-overlapping patch projection followed by layer norm."""

    def __init__(self, patch_size: int = 4, in_chans: int = 3, dim: int = 96):
        super().__init__()
        self.patch_size = patch_size
        self.proj = nn.Conv2d(in_chans, dim, kernel_size=patch_size, stride=patch_size)
        self.norm = nn.LayerNorm(dim)

    def forward(self, img: torch.Tensor) -> TokenGrid:
        h, w = img.shape[-2:]
        if h % self.patch_size or w % self.patch_size:
            raise ShapeError(
                f"image size {h}x{w} not divisible by patch size {self.patch_size}")
        grid = TokenGrid.from_map(self.proj(img))
        return grid.with_data(self.norm(grid.data))


def patch_embed(img: torch.Tensor, module: PatchEmbed) -> TokenGrid:
    return module(img)


def window_partition(grid: TokenGrid, ws: int) -> torch.Tensor:
    """Split a grid into ``[batch * n_windows, ws*ws, dim]`` windows.

    Windows are ordered row-major over the window grid (batch-major outermost),
    tokens row-major inside each window.
    """
    h, w = grid.h, grid.w
    if h % ws or w % ws:
        raise ShapeError(f"grid {h}x{w} not divisible by window size {ws}")
    b, c = grid.batch, grid.dim
    x = grid.data.view(b, h // ws, ws, w // ws, ws, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, ws * ws, c)


def window_reverse(wins: torch.Tensor, ws: int, h: int, w: int) -> TokenGrid:
    """Exact inverse of :func:`window_partition`."""
    if h % ws or w % ws:
        raise ShapeError(f"grid {h}x{w} not divisible by window size {ws}")
    n_win = (h // ws) * (w // ws)
    if wins.dim() != 3 or wins.shape[1] != ws * ws or wins.shape[0] % n_win:
        raise ShapeError(
            f"window tensor {tuple(wins.shape)} inconsistent with grid {h}x{w}, window {ws}")
    b = wins.shape[0] // n_win
    c = wins.shape[-1]
    x = wins.view(b, h // ws, w // ws, ws, ws, c).permute(0, 1, 3, 2, 4, 5)
    return TokenGrid(x.reshape(b, h * w, c), h, w)


def cyclic_shift(grid: TokenGrid, offset: int) -> TokenGrid:
    """Torus-roll the grid by ``(-offset, -offset)``; the offset wraps modulo the side."""
    if offset % grid.h == 0 and offset % grid.w == 0:
        return grid
    b, c = grid.batch, grid.dim
    x = grid.data.view(b, grid.h, grid.w, c)
    x = torch.roll(x, shifts=(-offset, -offset), dims=(1, 2))
    return grid.with_data(x.reshape(b, grid.h * grid.w, c))
