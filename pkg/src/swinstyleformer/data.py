"""Procedural face-like images: a seeded stand-in for a face dataset."""
import numpy as np
import torch

from .core import image_from_uint8


def _soft_ellipse(yy, xx, cy, cx, ry, rx, edge=1.5):
    d = np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
    # ~edge-pixel anti-aliased boundary
    return np.clip((1.0 - d) * min(ry, rx) / edge + 0.5, 0.0, 1.0)


def _paint(canvas, mask, color):
    canvas *= (1 - mask[..., None])
    canvas += mask[..., None] * color


def face_image(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """One ``[size, size, 3]`` uint8 composite: background, head, hair, eyes, nose, mouth."""
    s = size / 64.0
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    img = np.empty((size, size, 3))
    img[:] = rng.uniform(0.1, 0.9, 3)
    # vertical background gradient
    img += np.linspace(-0.1, 0.1, size)[:, None, None] * rng.choice([-1, 1])

    cy, cx = size / 2 + rng.normal(0, 2 * s), size / 2 + rng.normal(0, 2 * s)
    ry, rx = rng.uniform(22, 27) * s, rng.uniform(17, 21) * s
    skin = np.array([0.85, 0.65, 0.5]) * rng.uniform(0.6, 1.1) + rng.normal(0, 0.04, 3)
    hair = rng.uniform(0.0, 0.6, 3) * rng.uniform(0.3, 1.0)

    _paint(img, _soft_ellipse(yy, xx, cy - 0.35 * ry, cx, 0.75 * ry, 1.08 * rx), hair)
    _paint(img, _soft_ellipse(yy, xx, cy + 0.08 * ry, cx, ry * 0.9, rx), skin)

    eye_y = cy - 0.05 * ry + rng.normal(0, 1 * s)
    eye_dx = rx * rng.uniform(0.38, 0.5)
    eye_r = rng.uniform(2.2, 3.5) * s
    iris = rng.uniform(0.0, 0.5, 3)
    for side in (-1, 1):
        ex = cx + side * eye_dx
        _paint(img, _soft_ellipse(yy, xx, eye_y, ex, eye_r, eye_r * 1.6), np.array([0.95, 0.95, 0.95]))
        _paint(img, _soft_ellipse(yy, xx, eye_y, ex, eye_r * 0.8, eye_r * 0.8), iris)
        brow_y = eye_y - eye_r * rng.uniform(1.8, 2.6)
        _paint(img, _soft_ellipse(yy, xx, brow_y, ex, 0.9 * s, eye_r * 1.8), hair * 0.8)

    _paint(img, _soft_ellipse(yy, xx, cy + 0.3 * ry, cx, 3.5 * s, 1.8 * s), skin * 0.8)
    mouth_y = cy + rng.uniform(0.5, 0.6) * ry
    lips = np.array([0.75, 0.25, 0.3]) * rng.uniform(0.7, 1.1)
    _paint(img, _soft_ellipse(yy, xx, mouth_y, cx, rng.uniform(1.2, 3.0) * s,
                              rx * rng.uniform(0.3, 0.5)), lips)
    return (np.clip(img, 0, 1) * 255).round().astype(np.uint8)


def make_faces(n: int, seed: int = 0, size: int = 64) -> torch.Tensor:
    """``[n, 3, size, size]`` batch in [-1, 1]; identical for identical seeds."""
    rng = np.random.default_rng(seed)
    arr = np.stack([face_image(rng, size) for _ in range(n)])
    return image_from_uint8(arr)


def toy_splits(seed: int = 0, size: int = 64, n_train: int = 64, n_eval: int = 16):
    return make_faces(n_train, seed, size), make_faces(n_eval, seed + 1, size)


class BatchCycler:
    """Deterministic epoch-ordered batches; the permutation is reseeded per epoch."""

    def __init__(self, images: torch.Tensor, batch_size: int, seed: int = 0, shuffle: bool = True):
        if len(images) == 0:
            raise ValueError("dataset is empty")
        self.images = images
        self.batch_size = batch_size
        self.seed = seed
        self.shuffle = shuffle

    def batch(self, step: int) -> torch.Tensor:
        n = len(self.images)
        idx = []
        pos = step * self.batch_size
        while len(idx) < self.batch_size:
            epoch, offset = divmod(pos, n)
            order = self._order(epoch)
            take = min(self.batch_size - len(idx), n - offset)
            idx.extend(order[offset:offset + take].tolist())
            pos += take
        return self.images[idx]

    def _order(self, epoch):
        n = len(self.images)
        if not self.shuffle:
            return torch.arange(n)
        g = torch.Generator().manual_seed(self.seed * 100003 + epoch)
        return torch.randperm(n, generator=g)
