import math

import numpy as np
import pytest
import torch

from swinstyleformer.metrics import evaluate, mse, per_image_mse, psnr, ssim


def pair(seed, n=1, side=16):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (n, 3, side, side))
    noise = rng.normal(0, rng.uniform(0.01, 0.5), x.shape)
    return x, np.clip(x + noise, -1, 1)


def mse_ref(x, y):
    return float(np.mean((x - y) ** 2))


def psnr_ref(x, y):
    return 10 * math.log10(4.0 / mse_ref(x, y))


def ssim_ref(x, y, win=8):
    """Direct loop over every valid window, one image channel at a time."""
    luma = np.array([0.299, 0.587, 0.114])
    c1, c2 = (0.01 * 2) ** 2, (0.03 * 2) ** 2
    vals = []
    for b in range(x.shape[0]):
        la = np.tensordot(luma, x[b], axes=1)
        lb = np.tensordot(luma, y[b], axes=1)
        h, w = la.shape
        for r in range(h - win + 1):
            for c in range(w - win + 1):
                pa = la[r:r + win, c:c + win]
                pb = lb[r:r + win, c:c + win]
                ma, mb = pa.mean(), pb.mean()
                va, vb = ((pa - ma) ** 2).mean(), ((pb - mb) ** 2).mean()
                cov = ((pa - ma) * (pb - mb)).mean()
                vals.append((2 * ma * mb + c1) * (2 * cov + c2) /
                            ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def metric_oracle_error(n_pairs=50):
    worst = 0.0
    for seed in range(n_pairs):
        x, y = pair(seed)
        tx, ty = torch.from_numpy(x), torch.from_numpy(y)
        worst = max(worst,
                    abs(mse(tx, ty) - mse_ref(x, y)),
                    abs(psnr(tx, ty) - psnr_ref(x, y)),
                    abs(ssim(tx, ty) - ssim_ref(x, y)))
    return worst


def test_metrics_match_loop_oracles():
    assert metric_oracle_error() < 1e-6


def test_psnr_extremes():
    lo, hi = -torch.ones(1, 3, 8, 8), torch.ones(1, 3, 8, 8)
    assert psnr(lo, hi) == 0.0
    assert psnr(lo, lo) == math.inf


def test_ssim_identical_is_one():
    x, _ = pair(3)
    t = torch.from_numpy(x)
    assert ssim(t, t) == pytest.approx(1.0, abs=1e-12)


def test_per_image_mse_and_evaluate():
    x, y = pair(4, n=3)
    tx, ty = torch.from_numpy(x), torch.from_numpy(y)
    per = per_image_mse(tx, ty)
    assert per.shape == (3,)
    assert per.mean().item() == pytest.approx(mse(tx, ty), abs=1e-12)
    out = evaluate(tx, ty)
    assert set(out) == {"mse", "psnr", "ssim"}
