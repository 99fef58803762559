"""Encoder/discriminator training loop, generator pretraining and the ablation switchboard."""
import csv
import dataclasses
import hashlib
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import torch
import torch.nn.functional as F

from .core import EncoderConfig
from .data import BatchCycler
from .discriminator import AugmentConfig, InversionDiscriminator, PlainDiscriminator, augment_pair
from .encoder import SwinStyleEncoder
from .generator import Generator, GeneratorConfig
from .losses import (LossWeights, NonFiniteLossError, RandomFeatureExtractor, RandomIdentityEmbedder,
                     adv_d_loss, adv_g_loss, da_loss, distribution_gap, id_loss, perceptual_loss,
                     pixel_loss, sr_regularization, total_loss)
from .map2style import Map2StyleConfig, n_styles_for
from .metrics import evaluate

log = logging.getLogger(__name__)

SR_FACTORS = (1, 2, 4, 8, 16, 32)
LOG_COLUMNS = ["step", "pixel", "perceptual", "identity", "da", "adv", "sr_reg", "total",
               "d_loss", "d_real", "d_fake", "eval_mse", "eval_psnr", "eval_ssim",
               "eval_perceptual", "distribution_gap"]


def _section(name, default, **kw):
    if isinstance(default, (list, dict)):
        return field(default_factory=lambda: type(default)(default), metadata={"section": name}, **kw)
    return field(default=default, metadata={"section": name}, **kw)


@dataclass
class TrainConfig:
    # train
    batch_size: int = _section("train", 4)
    steps: int = _section("train", 1000)
    learning_rate: float = _section("train", 1e-4)
    disc_learning_rate: float = _section("train", 1e-4)
    seed: int = _section("train", 0)
    eval_every: int = _section("train", 100)
    checkpoint_every: int = _section("train", 0)
    da_samples: int = _section("train", 64)
    da_strategy: str = _section("train", "pairwise")
    augment: bool = _section("train", True)
    # weights
    pixel: float = _section("weights", 1.0)
    perceptual: float = _section("weights", 0.8)
    identity: float = _section("weights", 0.1)
    da: float = _section("weights", 0.1)
    adv: float = _section("weights", 1e-4)
    # ablation
    multi_scale_connections: bool = _section("ablation", True)
    da_loss: bool = _section("ablation", True)
    inversion_discriminator: bool = _section("ablation", True)
    plain_stylegan_discriminator: bool = _section("ablation", False)
    map2style: str = _section("ablation", "lq")
    window_sizes: List[int] = _section("ablation", [2, 2, 8, 8])
    # super-resolution
    sr_mode: bool = _section("sr", False)
    sr_factors: List[int] = _section("sr", list(SR_FACTORS))
    sr_weight: float = _section("sr", 0.005)
    # model
    resolution: int = _section("model", 64)
    patch_size: int = _section("model", 4)
    stage_dims: List[int] = _section("model", [32, 64, 128, 256])
    stage_depths: List[int] = _section("model", [1, 1, 2, 1])
    stage_heads: List[int] = _section("model", [1, 2, 4, 8])
    style_dim: int = _section("model", 512)
    lq_window: int = _section("model", 2)
    mapping_depth: int = _section("model", 8)
    gen_channel_base: int = _section("model", 1024)
    gen_channel_max: int = _section("model", 64)
    disc_embed_dim: int = _section("model", 256)
    momentum: float = _section("model", 0.999)
    # generator pretraining
    gen_pretrain_steps: int = _section("generator", 600)
    gen_learning_rate: float = _section("generator", 5e-4)
    gen_checkpoint: str = _section("generator", "")
    # data
    n_train: int = _section("data", 64)
    n_eval: int = _section("data", 16)
    data_seed: int = _section("data", 0)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.inversion_discriminator and self.plain_stylegan_discriminator:
            raise ValueError("choose at most one of inversion_discriminator / plain_stylegan_discriminator")
        bad = [f for f in self.sr_factors if f not in SR_FACTORS]
        if bad:
            raise ValueError(f"sr_factors {bad} not in {SR_FACTORS}")
        self.window_sizes = [int(v) for v in self.window_sizes]

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.pixel, self.perceptual, self.identity, self.da, self.adv)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(patch_size=self.patch_size, stage_dims=list(self.stage_dims),
                             stage_depths=list(self.stage_depths), stage_heads=list(self.stage_heads),
                             stage_window=list(self.window_sizes), input_resolution=self.resolution)

    def map2style_config(self) -> Map2StyleConfig:
        return Map2StyleConfig(style_dim=self.style_dim, n_styles=n_styles_for(self.resolution),
                               lq_window=self.lq_window, mode=self.map2style)

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(style_dim=self.style_dim, output_resolution=self.resolution,
                               mapping_depth=self.mapping_depth, channel_base=self.gen_channel_base,
                               channel_max=self.gen_channel_max)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise KeyError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)


def param_hash(module: torch.nn.Module) -> str:
    h = hashlib.sha256()
    for name, t in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def build_generator(cfg: TrainConfig) -> Generator:
    torch.manual_seed(cfg.seed + 1)
    return Generator(cfg.generator_config())


def pretrain_generator(gen: Generator, images: torch.Tensor, steps: int, lr: float = 5e-4,
                       seed: int = 0, batch_size: int = 8) -> List[float]:
    """Fit the generator as a decoder of per-image learned latents, then freeze it.

    Each image owns a trainable z that goes through the mapping network, so the
    images land on the generator's W manifold.
    """
    g = torch.Generator().manual_seed(seed)
    z = torch.randn(len(images), gen.cfg.style_dim, generator=g).requires_grad_(True)
    opt = torch.optim.Adam(list(gen.parameters()) + [z], lr=lr, betas=(0.5, 0.99))
    cycler = BatchCycler(torch.arange(len(images)), min(batch_size, len(images)), seed)
    history = []
    gen.train()
    for step in range(steps):
        idx = cycler.batch(step)
        x_hat = gen.synthesize(gen.mapping(z[idx]))
        loss = F.mse_loss(x_hat, images[idx])
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(loss.item())
    gen.update_w_avg()
    freeze(gen)
    return history


def freeze(module: torch.nn.Module):
    module.eval()
    module.requires_grad_(False)
    return module


def sr_degrade(x: torch.Tensor, factor: int) -> torch.Tensor:
    """Area-downsample by ``factor`` and bilinearly resize back to the input size."""
    if factor == 1:
        return x
    side = x.shape[-1]
    small = F.avg_pool2d(x, factor)
    return F.interpolate(small, size=(side, side), mode="bilinear", align_corners=False)


class Trainer:
    """Holds encoder, frozen generator, discriminator, optimizers and the step counter."""

    def __init__(self, cfg: TrainConfig, generator: Optional[Generator] = None):
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        self.encoder = SwinStyleEncoder(cfg.encoder_config(), cfg.map2style_config(),
                                        multi_scale=cfg.multi_scale_connections)
        self.generator = freeze(generator if generator is not None else build_generator(cfg))
        if cfg.inversion_discriminator:
            self.discriminator = InversionDiscriminator(cfg.resolution, cfg.disc_embed_dim, cfg.momentum)
        elif cfg.plain_stylegan_discriminator:
            self.discriminator = PlainDiscriminator(cfg.resolution)
        else:
            self.discriminator = None
        self.extractor = RandomFeatureExtractor()
        self.embedder = RandomIdentityEmbedder(cfg.resolution)
        self.augment = AugmentConfig(enabled=cfg.augment)
        self.enc_opt = torch.optim.Adam(self.encoder.parameters(), lr=cfg.learning_rate)
        self.disc_opt = None
        if self.discriminator is not None:
            params = [p for p in self.discriminator.parameters() if p.requires_grad]
            self.disc_opt = torch.optim.Adam(params, lr=cfg.disc_learning_rate, betas=(0.5, 0.99))
        self.step = 0
        self.history: List[Dict[str, float]] = []

    # ------------------------------------------------------------------ forward

    def sample_w(self, step: int) -> torch.Tensor:
        with torch.no_grad():
            return self.generator.sample_w(self.cfg.da_samples, seed=10_000_019 * (self.cfg.seed + 1) + step)

    def sr_input(self, x: torch.Tensor, step: int) -> torch.Tensor:
        if not self.cfg.sr_mode:
            return x
        g = torch.Generator().manual_seed(7919 * (self.cfg.seed + 1) + step)
        factor = self.cfg.sr_factors[int(torch.randint(len(self.cfg.sr_factors), (), generator=g))]
        return sr_degrade(x, factor)

    def invert(self, x: torch.Tensor):
        codes = self.encoder(x)
        return codes, self.generator.synthesize(codes)

    def compute_losses(self, x: torch.Tensor, step: int):
        """Encoder loss components for one batch; returns (components, extras, codes, x_hat)."""
        cfg = self.cfg
        codes, x_hat = self.invert(self.sr_input(x, step))
        comps = {
            "pixel": pixel_loss(x, x_hat),
            "perceptual": perceptual_loss(x, x_hat, self.extractor),
            "identity": id_loss(x, x_hat, self.embedder),
        }
        if cfg.da_loss:
            comps["da"] = da_loss(codes, self.sample_w(step), cfg.da_strategy)
        if self.discriminator is not None:
            x_aug, x_hat_aug = augment_pair(x, x_hat, seed=2 * step, cfg=self.augment)
            comps["adv"] = adv_g_loss(self.discriminator.score(x_hat_aug, x_aug))
        extras = {}
        if cfg.sr_mode:
            extras["sr_reg"] = sr_regularization(codes, self.generator.w_avg)
        return comps, extras, codes, x_hat

    # ------------------------------------------------------------------ updates

    def train_step(self, x: torch.Tensor) -> Dict[str, float]:
        step = self.step
        self.encoder.train()
        comps, extras, codes, x_hat = self.compute_losses(x, step)
        try:
            loss = total_loss(comps, self.cfg.weights)
            for name, value in extras.items():
                if not math.isfinite(value.item()):
                    raise NonFiniteLossError(name, value.item())
            if "sr_reg" in extras:
                loss = loss + self.cfg.sr_weight * extras["sr_reg"]
        except NonFiniteLossError:
            log.error("non-finite loss at step %d", step)
            raise
        self.enc_opt.zero_grad(set_to_none=True)
        loss.backward()
        self.enc_opt.step()

        report = {k: v.item() for k, v in comps.items()}
        report.update({k: v.item() for k, v in extras.items()})
        report["total"] = loss.item()
        if self.discriminator is not None:
            report.update(self.discriminator_step(x, x_hat.detach(), step))
        self.step += 1
        return report

    def discriminator_step(self, x, x_hat, step) -> Dict[str, float]:
        disc = self.discriminator
        x_w, x_s = augment_pair(x, x, seed=2 * step + 1, cfg=self.augment)
        x_w2, x_hat_s = augment_pair(x, x_hat, seed=2 * step + 1, cfg=self.augment)
        d_real = disc.score(x_s, x_w)
        d_fake = disc.score(x_hat_s, x_w2)
        loss = adv_d_loss(d_real, d_fake)
        if not math.isfinite(loss.item()):
            raise NonFiniteLossError("d_loss", loss.item())
        self.disc_opt.zero_grad(set_to_none=True)
        loss.backward()
        self.disc_opt.step()
        disc.momentum_update()
        return {"d_loss": loss.item(), "d_real": d_real.mean().item(), "d_fake": d_fake.mean().item()}

    # ------------------------------------------------------------------ eval

    @torch.no_grad()
    def evaluate(self, x: torch.Tensor) -> Dict[str, float]:
        self.encoder.eval()
        codes, x_hat = self.invert(x)
        out = evaluate(x, x_hat, self.extractor)
        w = self.generator.sample_w(max(self.cfg.da_samples, 256), seed=424242)
        out["distribution_gap"] = float(distribution_gap(codes, w))
        return out


def _log_row(step, report, metrics):
    row = {"step": step}
    row.update(report)
    for k, v in (metrics or {}).items():
        row[k if k == "distribution_gap" else f"eval_{k}"] = v
    return row


def fit(cfg: TrainConfig, dataset: torch.Tensor, out_dir: Optional[str] = None,
        eval_images: Optional[torch.Tensor] = None, trainer: Optional[Trainer] = None,
        generator: Optional[Generator] = None) -> Trainer:
    """Run ``cfg.steps`` steps (continuing from ``trainer.step`` when resuming).

    One metric row per step goes to ``out_dir/metrics.csv``; evaluation columns are
    filled every ``eval_every`` steps and on the last step. Checkpoints go to
    ``out_dir/ckpt_<step>.pt`` every ``checkpoint_every`` steps and ``out_dir/final.pt``.
    """
    from .checkpoint import save_checkpoint

    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if trainer is None:
        if generator is None:
            generator = build_generator(cfg)
            pretrain_generator(generator, dataset, cfg.gen_pretrain_steps, cfg.gen_learning_rate, cfg.seed)
        trainer = Trainer(cfg, generator)
    eval_images = dataset if eval_images is None else eval_images
    cycler = BatchCycler(dataset, cfg.batch_size, cfg.seed)
    writer = fh = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "metrics.csv")
        new = not os.path.exists(path)
        try:
            fh = open(path, "a", newline="")
        except OSError as e:
            raise OSError(f"cannot open metric log {path}: {e}") from e
        writer = csv.DictWriter(fh, LOG_COLUMNS, extrasaction="ignore")
        if new:
            writer.writeheader()
    try:
        end = trainer.step + cfg.steps
        while trainer.step < end:
            step = trainer.step
            report = trainer.train_step(cycler.batch(step))
            metrics = None
            if (cfg.eval_every and (step + 1) % cfg.eval_every == 0) or trainer.step == end:
                metrics = trainer.evaluate(eval_images)
            row = _log_row(step, report, metrics)
            trainer.history.append(row)
            if writer is not None:
                writer.writerow(row)
                fh.flush()
            if out_dir and cfg.checkpoint_every and trainer.step % cfg.checkpoint_every == 0:
                save_checkpoint(os.path.join(out_dir, f"ckpt_{trainer.step:06d}.pt"), trainer)
        if out_dir:
            save_checkpoint(os.path.join(out_dir, "final.pt"), trainer)
    finally:
        if fh is not None:
            fh.close()
    return trainer


def ablation_variants(base: Optional[TrainConfig] = None) -> Dict[str, TrainConfig]:
    """One config per ablation axis, each differing from ``base`` in a single switch."""
    base = base or TrainConfig()
    rep = dataclasses.replace
    return {
        "full": base,
        "no_msc": rep(base, multi_scale_connections=False),
        "no_da_loss": rep(base, da_loss=False),
        "no_inversion_discriminator": rep(base, inversion_discriminator=False),
        "plain_discriminator": rep(base, inversion_discriminator=False, plain_stylegan_discriminator=True),
        "wmsa_map2style": rep(base, map2style="wmsa"),
        "mlp_map2style": rep(base, map2style="mlp"),
        "window_8888": rep(base, window_sizes=[8, 8, 8, 8]),
    }


def parameter_signature(trainer: Trainer) -> Dict[str, tuple]:
    """Trainable-parameter name -> shape, covering encoder and discriminator."""
    sig = {f"encoder.{n}": tuple(p.shape) for n, p in trainer.encoder.named_parameters()}
    if trainer.discriminator is not None:
        sig.update({f"discriminator.{n}": tuple(p.shape)
                    for n, p in trainer.discriminator.named_parameters()})
    return sig
