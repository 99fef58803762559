"""
Quality metrics and difference heatmaps
=======================================

MSE and PSNR use the [-1, 1] value range (peak-to-peak 2); SSIM is computed on
luminance with 8x8 windows. The difference heatmap is the per-pixel absolute
error averaged over colour channels and scaled to [0, 1].
"""
import torch

from swinstyleformer.cli import diff_heatmap
from swinstyleformer.data import make_faces
from swinstyleformer.metrics import evaluate
from swinstyleformer.trainer import sr_degrade

x = make_faces(1, seed=4)
for factor in (1, 2, 4, 8, 16):
    degraded = sr_degrade(x, factor)
    m = evaluate(x, degraded)
    print(f"x{factor:<2d} mse {m['mse']:.4f}  psnr {m['psnr']:6.2f}  ssim {m['ssim']:.3f}")

noisy = (x + 0.05 * torch.randn_like(x)).clamp(-1, 1)
noisy[..., 20:28, 30:38] = 1.0   # a bright square the heatmap should light up
heat = diff_heatmap(x, noisy)
r, c = divmod(int(heat.argmax()), heat.shape[1])
print(f"heatmap peak at row {r}, col {c}; mean {heat.mean():.3f}")
