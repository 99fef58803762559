"""On-disk formats: 8-bit PNG images, plain-text codes and edit directions."""
import numpy as np
import torch
from PIL import Image

from .core import ShapeError, image_from_uint8, image_to_uint8


def read_image(path: str, resolution: int = None) -> torch.Tensor:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"))
    h, w = arr.shape[:2]
    if resolution is not None and (h, w) != (resolution, resolution):
        raise ShapeError(f"{path}: image is {w}x{h}, model expects {resolution}x{resolution}")
    return image_from_uint8(arr)


def write_image(path: str, img: torch.Tensor):
    arr = image_to_uint8(img[:1])[0]
    Image.fromarray(arr, "RGB").save(path, format="PNG")


def write_gray(path: str, values: np.ndarray):
    """``values`` in [0, 1] -> 8-bit grayscale PNG."""
    arr = (np.clip(values, 0, 1) * 255).round().astype(np.uint8)
    Image.fromarray(arr, "L").save(path, format="PNG")


def save_codes(path: str, codes: torch.Tensor):
    """One row per style index; 9 significant digits round-trip float32 exactly."""
    if codes.dim() == 3:
        codes = codes[0]
    np.savetxt(path, codes.detach().cpu().numpy().astype(np.float32), fmt="%.9g")


def load_codes(path: str, n_styles: int, style_dim: int) -> torch.Tensor:
    arr = np.loadtxt(path, dtype=np.float64, ndmin=2).astype(np.float32)
    if arr.shape != (n_styles, style_dim):
        raise ShapeError(f"{path}: codes shape {arr.shape} != ({n_styles}, {style_dim})")
    if not np.isfinite(arr).all():
        raise ValueError(f"{path}: non-finite code values")
    return torch.from_numpy(arr)[None]


def load_direction(path: str, n_styles: int, style_dim: int) -> torch.Tensor:
    """Either one style_dim vector (applied to every style row) or n_styles rows."""
    arr = np.loadtxt(path, dtype=np.float64, ndmin=1).astype(np.float32).ravel()
    if not np.isfinite(arr).all():
        raise ValueError(f"{path}: non-finite direction values")
    if arr.size == style_dim:
        return torch.from_numpy(arr)[None, None].expand(1, n_styles, style_dim)
    if arr.size == n_styles * style_dim:
        return torch.from_numpy(arr).view(1, n_styles, style_dim)
    raise ShapeError(
        f"{path}: direction has {arr.size} values; expected {style_dim} or {n_styles * style_dim}")
