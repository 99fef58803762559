"""
Token grids, windows and the cyclic shift
=========================================

Every attention layer in the encoder works on non-overlapping square windows
of a token grid. This walks through the bookkeeping on a 4x4 grid.
"""
import torch

from swinstyleformer.attention import shift_mask
from swinstyleformer.core import TokenGrid, cyclic_shift, window_partition, window_reverse

# a 4x4 grid whose single channel holds the row-major token index
grid = TokenGrid(torch.arange(16.0).view(1, 16, 1), 4, 4)
print(grid.to_map()[0, 0])

# 2x2 windows: four windows of four tokens each, in row-major window order
wins = window_partition(grid, 2)
print("windows:", tuple(wins.shape))
print(wins[..., 0])

# reversing the partition gives the grid back bit for bit
assert torch.equal(window_reverse(wins, 2, 4, 4).data, grid.data)

# the shifted-window layers roll the grid by half a window first ...
shifted = cyclic_shift(grid, 1)
print(shifted.to_map()[0, 0])

# ... and mask out pairs of tokens that only became neighbours through the wrap-around
mask = shift_mask(4, 4, 2, 1)
print("blocked pairs per window:", (mask < 0).sum(dim=(1, 2)).tolist())
