"""
A short training run, then inversion, editing and style mixing
================================================================

Trains a small configuration for a few dozen steps on procedural faces and
writes the inversions, an edit and a style mix as PNGs. Pass an output
directory as the first argument (default: ./demo_out).
"""
import os
import sys

import numpy as np
import torch

from swinstyleformer.data import toy_splits
from swinstyleformer.generator import style_mix
from swinstyleformer.io import write_image
from swinstyleformer.trainer import TrainConfig, build_generator, fit, pretrain_generator

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
os.makedirs(out, exist_ok=True)

cfg = TrainConfig(steps=40, eval_every=20, style_dim=64, mapping_depth=4, n_train=8, n_eval=4,
                  stage_dims=[16, 32, 64, 128], disc_embed_dim=64)
train, held_out = toy_splits(cfg.data_seed, cfg.resolution, cfg.n_train, cfg.n_eval)

# the generator is fitted to the training faces first and then frozen
gen = build_generator(cfg)
history = pretrain_generator(gen, train, steps=150, lr=cfg.gen_learning_rate)
print(f"generator pretraining MSE {history[0]:.3f} -> {history[-1]:.3f}")

trainer = fit(cfg, train, out, held_out, generator=gen)
for row in trainer.history:
    if "eval_mse" in row:
        print(f"step {row['step']:3d}  total {row['total']:.3f}  eval mse {row['eval_mse']:.3f}"
              f"  gap {row['distribution_gap']:.4f}")

trainer.encoder.eval()
with torch.no_grad():
    codes, x_hat = trainer.invert(train[:2])
    direction = torch.from_numpy(np.random.default_rng(0).normal(size=cfg.style_dim).astype(np.float32))
    edited = gen.synthesize(codes[:1] + 2.0 * direction)
    # fine style rows from the second face on top of the first face's coarse rows
    mixed = gen.synthesize(style_mix(codes[:1], codes[1:], range(6, gen.n_styles)))

for name, img in [("input", train[:1]), ("inversion", x_hat[:1]), ("edit", edited), ("mix", mixed)]:
    write_image(os.path.join(out, f"{name}.png"), img)
print("wrote", sorted(os.listdir(out)))
