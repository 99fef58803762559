"""``swinstyle`` command line: train, invert, edit, mix, super-resolve, heatmaps, metrics.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
import argparse
import logging
import os
import sys

import numpy as np
import torch
import torch.nn.functional as F

from .attention import attention_weights
from .checkpoint import CheckpointError, load_checkpoint, load_generator, save_generator
from .config import ConfigError, load_config
from .core import ShapeError, TokenGrid, window_reverse
from .data import toy_splits
from .generator import style_mix
from .io import load_codes, load_direction, read_image, save_codes, write_gray, write_image
from .losses import NonFiniteLossError, RandomFeatureExtractor
from .metrics import evaluate
from .trainer import build_generator, fit, pretrain_generator, sr_degrade

log = logging.getLogger("swinstyleformer")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------- helpers

def _load_model(path):
    trainer = load_checkpoint(path)
    trainer.encoder.eval()
    return trainer


@torch.no_grad()
def _invert(trainer, img):
    codes = trainer.encoder(img)
    return codes, trainer.generator.synthesize(codes)


@torch.no_grad()
def _synth(trainer, codes):
    return trainer.generator.synthesize(codes)


def parse_layers(text: str, n_styles: int):
    """``"8-13"``, ``"8,9,10"`` or ``""`` -> sorted list of style indices."""
    layers = set()
    for part in filter(None, (p.strip() for p in text.split(","))):
        try:
            if "-" in part:
                lo, hi = (int(v) for v in part.split("-", 1))
                layers.update(range(lo, hi + 1))
            else:
                layers.add(int(part))
        except ValueError:
            raise UsageError(f"bad layer spec {part!r}") from None
    bad = [l for l in layers if not 0 <= l < n_styles]
    if bad:
        raise UsageError(f"layers {sorted(bad)} out of range 0..{n_styles - 1}")
    return sorted(layers)


def diff_heatmap(x: torch.Tensor, x_hat: torch.Tensor) -> np.ndarray:
    """|x - x_hat| averaged over channels, min-max scaled to [0, 1] (all zero if flat)."""
    d = (x - x_hat).abs().mean(dim=1)[0].double().numpy()
    lo, hi = d.min(), d.max()
    if hi == lo:
        return np.zeros_like(d)
    return (d - lo) / (hi - lo)


@torch.no_grad()
def attention_heatmap(encoder, img: torch.Tensor, stage: int = 0) -> np.ndarray:
    """Attention mass each token receives in the first block of a backbone stage.

    Weights are averaged over heads, summed over the queries of each window and
    mapped back onto the token grid, then resized to the image and min-max scaled.
    """
    bb = encoder.backbone
    if not 0 <= stage < len(bb.stages):
        raise UsageError(f"stage must be in 0..{len(bb.stages) - 1}")
    grid = bb.patch_embed(img)
    for i in range(stage):
        grid = bb.merges[i](bb.stages[i](grid))
    block = bb.stages[stage].blocks[0]
    weights = attention_weights(grid.with_data(block.norm1(grid.data)), block.attn)
    received = weights.mean(1).sum(1)[..., None]
    ws = block.attn.window_size
    heat = window_reverse(received, ws, grid.h, grid.w).to_map()
    heat = F.interpolate(heat, size=img.shape[-2:], mode="nearest")[0, 0].double().numpy()
    lo, hi = heat.min(), heat.max()
    return np.zeros_like(heat) if hi == lo else (heat - lo) / (hi - lo)


# ---------------------------------------------------------------------------- commands

def cmd_train(args):
    if args.checkpoint:
        trainer = load_checkpoint(args.checkpoint, restore_rng=True)
        cfg = trainer.cfg
        if args.steps is not None:
            cfg.steps = args.steps
        train, held_out = toy_splits(cfg.data_seed, cfg.resolution, cfg.n_train, cfg.n_eval)
        fit(cfg, train, args.out, held_out, trainer=trainer)
        return EXIT_OK
    if not args.config:
        raise UsageError("train needs --config (or --checkpoint to resume)")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.steps is not None:
        cfg.steps = args.steps
    train, held_out = toy_splits(cfg.data_seed, cfg.resolution, cfg.n_train, cfg.n_eval)
    if cfg.gen_checkpoint:
        gen = load_generator(cfg.gen_checkpoint, cfg)
    else:
        gen = build_generator(cfg)
        log.info("pretraining generator for %d steps", cfg.gen_pretrain_steps)
        pretrain_generator(gen, train, cfg.gen_pretrain_steps, cfg.gen_learning_rate, cfg.seed)
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            save_generator(os.path.join(args.out, "generator.pt"), gen, cfg)
    trainer = fit(cfg, train, args.out, held_out, generator=gen)
    last = trainer.history[-1]
    print(f"step {last['step']}: total {last['total']:.5f} eval_mse {last.get('eval_mse', float('nan')):.5f}")
    return EXIT_OK


def cmd_invert(args):
    trainer = _load_model(args.checkpoint)
    img = read_image(args.inp[0], trainer.cfg.resolution)
    codes, x_hat = _invert(trainer, img)
    write_image(args.out, x_hat)
    if args.codes_out:
        save_codes(args.codes_out, codes)
    return EXIT_OK


def cmd_synthesize(args):
    trainer = _load_model(args.checkpoint)
    gen = trainer.generator
    codes = load_codes(args.codes, gen.n_styles, gen.cfg.style_dim)
    write_image(args.out, _synth(trainer, codes))
    return EXIT_OK


def cmd_edit(args):
    trainer = _load_model(args.checkpoint)
    gen = trainer.generator
    direction = load_direction(args.direction, gen.n_styles, gen.cfg.style_dim)
    codes, _ = _invert(trainer, read_image(args.inp[0], trainer.cfg.resolution))
    edited = codes + args.alpha * direction
    write_image(args.out, _synth(trainer, edited))
    if args.codes_out:
        save_codes(args.codes_out, edited)
    return EXIT_OK


def cmd_mix(args):
    if len(args.inp) != 2:
        raise UsageError("mix needs two images: --in A B")
    trainer = _load_model(args.checkpoint)
    layers = parse_layers(args.layers, trainer.generator.n_styles)
    res = trainer.cfg.resolution
    codes_a, _ = _invert(trainer, read_image(args.inp[0], res))
    codes_b, _ = _invert(trainer, read_image(args.inp[1], res))
    mixed = style_mix(codes_a, codes_b, layers)
    write_image(args.out, _synth(trainer, mixed))
    if args.codes_out:
        save_codes(args.codes_out, mixed)
    return EXIT_OK


def cmd_super_resolve(args):
    trainer = _load_model(args.checkpoint)
    res = trainer.cfg.resolution
    img = read_image(args.inp[0])
    if img.shape[-1] != img.shape[-2] or img.shape[-1] > res:
        raise ShapeError(f"super-resolve expects a square image no larger than {res}x{res}")
    if img.shape[-1] < res:
        img = F.interpolate(img, size=(res, res), mode="bilinear", align_corners=False)
    elif args.factor > 1:
        img = sr_degrade(img, args.factor)
    codes, x_hat = _invert(trainer, img)
    write_image(args.out, x_hat)
    if args.codes_out:
        save_codes(args.codes_out, codes)
    return EXIT_OK


def cmd_diff_heatmap(args):
    trainer = _load_model(args.checkpoint)
    img = read_image(args.inp[0], trainer.cfg.resolution)
    _, x_hat = _invert(trainer, img)
    write_gray(args.out, diff_heatmap(img, x_hat))
    return EXIT_OK


def cmd_attention_heatmap(args):
    trainer = _load_model(args.checkpoint)
    img = read_image(args.inp[0], trainer.cfg.resolution)
    write_gray(args.out, attention_heatmap(trainer.encoder, img, args.stage))
    return EXIT_OK


def cmd_metrics(args):
    if len(args.inp) == 2:
        x = read_image(args.inp[0])
        x_hat = read_image(args.inp[1], x.shape[-1])
    elif len(args.inp) == 1 and args.checkpoint:
        trainer = _load_model(args.checkpoint)
        x = read_image(args.inp[0], trainer.cfg.resolution)
        _, x_hat = _invert(trainer, x)
    else:
        raise UsageError("metrics needs --in A B, or --checkpoint with --in A")
    for k, v in evaluate(x, x_hat, RandomFeatureExtractor()).items():
        print(f"{k}\t{v:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="swinstyle", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def command(name, func, help, ckpt=True, inp=True, out=True, n_in=1):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(func=func)
        if ckpt:
            sp.add_argument("--checkpoint", required=ckpt == "required", default=None)
        if inp:
            sp.add_argument("--in", dest="inp", nargs=n_in, required=True, metavar="IMAGE")
        if out:
            sp.add_argument("--out", required=True)
        sp.add_argument("--seed", type=int, default=None)
        return sp

    sp = command("train", cmd_train, "train encoder (pretrains the generator first)", inp=False, out=False)
    sp.add_argument("--config")
    sp.add_argument("--out", help="run directory: metrics.csv and checkpoints")
    sp.add_argument("--steps", type=int, help="override the number of steps")

    sp = command("invert", cmd_invert, "image -> codes -> reconstruction", ckpt="required")
    sp.add_argument("--codes-out")

    sp = command("synthesize", cmd_synthesize, "codes file -> image", ckpt="required", inp=False)
    sp.add_argument("--codes", required=True)

    sp = command("edit", cmd_edit, "shift inverted codes along a direction", ckpt="required")
    sp.add_argument("--direction", required=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--codes-out")

    sp = command("mix", cmd_mix, "take style rows LAYERS from image B", ckpt="required", n_in=2)
    sp.add_argument("--layers", required=True, help='e.g. "6-9" or "6,7,8"; empty string for none')
    sp.add_argument("--codes-out")

    sp = command("super-resolve", cmd_super_resolve, "invert a low-resolution image", ckpt="required")
    sp.add_argument("--factor", type=int, default=1, choices=[1, 2, 4, 8, 16, 32])
    sp.add_argument("--codes-out")

    command("diff-heatmap", cmd_diff_heatmap, "|x - inversion| as grayscale PNG", ckpt="required")

    sp = command("attention-heatmap", cmd_attention_heatmap,
                 "attention mass per token of one backbone stage", ckpt="required")
    sp.add_argument("--stage", type=int, default=0)

    command("metrics", cmd_metrics, "MSE / PSNR / SSIM / perceptual", out=False, n_in="+")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"swinstyle: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return EXIT_OK if not e.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None:
        torch.manual_seed(args.seed)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"swinstyle: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteLossError, CheckpointError, ShapeError, OSError, ValueError, KeyError,
            IndexError, RuntimeError) as e:
        print(f"swinstyle: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
