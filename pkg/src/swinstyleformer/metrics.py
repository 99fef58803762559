"""Image-quality metrics for images in [-1, 1]."""
import math

import torch
import torch.nn.functional as F

from .losses import _same_shape, perceptual_loss

PEAK = 2.0  # width of the [-1, 1] value range
SSIM_WINDOW = 8
LUMA = (0.299, 0.587, 0.114)


def mse(x, x_hat) -> float:
    _same_shape(x, x_hat)
    return float(F.mse_loss(x_hat.double(), x.double()))


def psnr(x, x_hat) -> float:
    err = mse(x, x_hat)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(PEAK ** 2 / err)


def luminance(img: torch.Tensor) -> torch.Tensor:
    w = torch.tensor(LUMA, dtype=img.dtype, device=img.device)
    return (img * w[None, :, None, None]).sum(1, keepdim=True)


def ssim_map(x, x_hat, window: int = SSIM_WINDOW) -> torch.Tensor:
    """Per-window SSIM over valid 8x8 uniform windows of the luminance channel.

    Window statistics are population moments (divide by window area).
    """
    _same_shape(x, x_hat)
    a, b = luminance(x.double()), luminance(x_hat.double())
    c1, c2 = (0.01 * PEAK) ** 2, (0.03 * PEAK) ** 2
    pool = lambda t: F.avg_pool2d(t, window, stride=1)
    mu_a, mu_b = pool(a), pool(b)
    var_a = pool(a * a) - mu_a ** 2
    var_b = pool(b * b) - mu_b ** 2
    cov = pool(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim(x, x_hat) -> float:
    return float(ssim_map(x, x_hat).mean())


def evaluate(x, x_hat, extractor=None) -> dict:
    """mse, psnr (peak 2, +inf for identical inputs), ssim and, given an extractor, perceptual."""
    out = {"mse": mse(x, x_hat), "psnr": psnr(x, x_hat), "ssim": ssim(x, x_hat)}
    if extractor is not None:
        with torch.no_grad():
            out["perceptual"] = float(perceptual_loss(x, x_hat, extractor))
    return out


def per_image_mse(x, x_hat) -> torch.Tensor:
    _same_shape(x, x_hat)
    return (x - x_hat).pow(2).flatten(1).mean(1)
