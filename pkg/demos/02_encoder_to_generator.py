"""
From an image to W+ codes and back
==================================

The encoder turns a 64x64 image into one style vector per generator input:
a four-level windowed-attention pyramid, top-down fusion of coarser levels,
then one small tower per style vector. The miniature generator consumes them.
"""
import torch

from swinstyleformer.data import make_faces
from swinstyleformer.trainer import TrainConfig, Trainer

cfg = TrainConfig()
trainer = Trainer(cfg)
encoder, generator = trainer.encoder, trainer.generator

x = make_faces(2, seed=0)
with torch.no_grad():
    codes, levels, fused = encoder(x, return_pyramid=True)
    x_hat = generator.synthesize(codes)

for i, (lvl, f) in enumerate(zip(levels, fused)):
    print(f"level {i}: {lvl.h}x{lvl.w} tokens, {lvl.dim} channels")

# coarse levels feed the first style vectors, fine levels the last ones
for i, group in enumerate(encoder.m2s_cfg.level_groups):
    print(f"level {i} -> style rows {group}")
print("codes:", tuple(codes.shape), "image:", tuple(x_hat.shape))

n_params = lambda m: sum(p.numel() for p in m.parameters())
print(f"encoder {n_params(encoder) / 1e6:.2f}M parameters, generator {n_params(generator) / 1e6:.2f}M")
