"""Windowed-attention GAN-inversion encoder with a miniature style-based generator."""
from .core import EncoderConfig, ShapeError, TokenGrid
from .encoder import SwinStyleEncoder
from .generator import Generator, GeneratorConfig
from .trainer import TrainConfig, Trainer, fit

__version__ = "0.1.0"

__all__ = ["EncoderConfig", "ShapeError", "TokenGrid", "SwinStyleEncoder", "Generator",
           "GeneratorConfig", "TrainConfig", "Trainer", "fit"]
