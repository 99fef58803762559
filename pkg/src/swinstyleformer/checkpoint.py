"""Checkpoint file: one torch-serialized dict of plain tensors and primitives."""
import os

import torch

from .generator import Generator
from .trainer import TrainConfig, Trainer

FORMAT = "swinstyleformer-checkpoint"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def checkpoint_state(trainer: Trainer) -> dict:
    disc = trainer.discriminator
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": trainer.cfg.to_dict(),
        "step": trainer.step,
        "encoder": trainer.encoder.state_dict(),
        "generator": trainer.generator.state_dict(),
        "discriminator": disc.state_dict() if disc is not None else None,
        "encoder_optimizer": trainer.enc_opt.state_dict(),
        "discriminator_optimizer": trainer.disc_opt.state_dict() if trainer.disc_opt else None,
        "rng_state": torch.get_rng_state(),
    }


def save_checkpoint(path: str, trainer: Trainer):
    tmp = path + ".tmp"
    try:
        torch.save(checkpoint_state(trainer), tmp)
        os.replace(tmp, path)
    except OSError as e:
        raise OSError(f"cannot write checkpoint {path}: {e}") from e


def read_checkpoint(path: str) -> dict:
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as e:
        raise CheckpointError(f"{path}: unreadable checkpoint, unknown format/version ({e})") from e
    if not isinstance(state, dict) or state.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not a {FORMAT} file")
    if state.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {state.get('version')!r}")
    return state


def load_checkpoint(path: str, restore_rng: bool = False) -> Trainer:
    """Rebuild a :class:`Trainer` with all parameters, optimizer states and the step counter."""
    state = read_checkpoint(path)
    cfg = TrainConfig.from_dict(state["config"])
    gen = Generator(cfg.generator_config())
    gen.load_state_dict(state["generator"])
    trainer = Trainer(cfg, gen)
    trainer.encoder.load_state_dict(state["encoder"])
    if trainer.discriminator is not None:
        trainer.discriminator.load_state_dict(state["discriminator"])
        trainer.disc_opt.load_state_dict(state["discriminator_optimizer"])
    trainer.enc_opt.load_state_dict(state["encoder_optimizer"])
    trainer.step = int(state["step"])
    if restore_rng:
        torch.set_rng_state(state["rng_state"])
    return trainer


def save_generator(path: str, gen: Generator, cfg: TrainConfig):
    torch.save({"format": FORMAT + "-generator", "version": VERSION,
                "config": cfg.to_dict(), "generator": gen.state_dict()}, path)


def load_generator(path: str, cfg: TrainConfig) -> Generator:
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(f"{path}: unreadable generator checkpoint ({e})") from e
    if state.get("format") == FORMAT:
        gen_state = state["generator"]
    elif state.get("format") == FORMAT + "-generator" and state.get("version") == VERSION:
        gen_state = state["generator"]
    else:
        raise CheckpointError(f"{path}: not a generator checkpoint")
    gen = Generator(cfg.generator_config())
    gen.load_state_dict(gen_state)
    return gen
