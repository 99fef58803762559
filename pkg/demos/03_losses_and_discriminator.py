"""
The loss stack in a few numbers
===============================

Pixel, perceptual and identity terms pull the reconstruction toward the input.
The distribution-alignment term compares softmax-normalised codes against
style vectors sampled from the generator's mapping network, and the inversion
discriminator scores (candidate, reference) pairs by cosine similarity.
"""
import torch

from swinstyleformer.discriminator import InversionDiscriminator
from swinstyleformer.generator import Generator, GeneratorConfig
from swinstyleformer.losses import (LossWeights, adv_d_loss, adv_g_loss, da_loss, distribution_gap,
                                    total_loss)

torch.manual_seed(0)
gen = Generator(GeneratorConfig(style_dim=64, mapping_depth=4))
w = gen.sample_w(256, seed=1)

# the DA term pairs rows one by one, so even freshly sampled codes pay for
# row-to-row differences; the batch-level gap is what separates the two cases
aligned = gen.sample_w(10, seed=2)[None]
constant = torch.zeros(1, 10, 64)
for name, codes in [("sampled", aligned), ("all zero", constant)]:
    print(f"{name:>8}: DA={da_loss(codes, w).item():.4f}  gap={distribution_gap(codes, w).item():.4f}")

# least-squares adversarial targets: real pairs -> +1, inversions -> -1
print("D loss at its optimum:", adv_d_loss(torch.ones(3), -torch.ones(3)).item())
print("G loss when fooling D:", adv_g_loss(torch.ones(3)).item())

# the momentum branch starts as a copy, so a pair of identical images scores 1
disc = InversionDiscriminator(64, 32)
x = torch.rand(2, 3, 64, 64) * 2 - 1
print("score(x, x):", disc.score(x, x).detach().numpy().round(4))

comps = {"pixel": torch.tensor(0.1), "perceptual": torch.tensor(0.5), "identity": torch.tensor(0.2),
         "da": torch.tensor(0.3), "adv": torch.tensor(1.0)}
print("weighted total:", total_loss(comps, LossWeights()).item())
