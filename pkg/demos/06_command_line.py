"""
The swinstyle command line
==========================

Same flow as the training demo, driven through the CLI entry point:
train from a config file, invert an image, edit with alpha 0 (identical to
the inversion), mix two faces and export both heatmaps.
"""
import os
import sys
import tempfile

import numpy as np

from swinstyleformer.cli import main
from swinstyleformer.data import make_faces
from swinstyleformer.io import write_image

work = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="swinstyle_")
os.makedirs(work, exist_ok=True)
path = lambda name: os.path.join(work, name)

with open(path("run.ini"), "w") as fh:
    fh.write("[train]\nsteps = 5\nbatch_size = 2\n"
             "[model]\nstyle_dim = 32\nmapping_depth = 2\nstage_dims = 16, 32, 64, 128\n"
             "[generator]\ngen_pretrain_steps = 20\n[data]\nn_train = 4\nn_eval = 2\n")
faces = make_faces(2, seed=9)
write_image(path("a.png"), faces[:1])
write_image(path("b.png"), faces[1:])
np.savetxt(path("smile.txt"), np.random.default_rng(1).normal(size=32))

ck = path("run/final.pt")
commands = [
    ["train", "--config", path("run.ini"), "--out", path("run")],
    ["invert", "--checkpoint", ck, "--in", path("a.png"), "--out", path("inv.png"), "--codes-out", path("a.codes")],
    ["edit", "--checkpoint", ck, "--in", path("a.png"), "--direction", path("smile.txt"),
     "--alpha", "0", "--out", path("edit0.png")],
    ["mix", "--checkpoint", ck, "--in", path("a.png"), path("b.png"), "--layers", "6-9", "--out", path("mix.png")],
    ["diff-heatmap", "--checkpoint", ck, "--in", path("a.png"), "--out", path("diff.png")],
    ["attention-heatmap", "--checkpoint", ck, "--in", path("a.png"), "--out", path("attn.png")],
    ["metrics", "--checkpoint", ck, "--in", path("a.png")],
]
for argv in commands:
    print("$ swinstyle", argv[0], "->", main(argv))

same = open(path("inv.png"), "rb").read() == open(path("edit0.png"), "rb").read()
print("edit with alpha 0 reproduces the inversion byte for byte:", same)
print("outputs in", work)
