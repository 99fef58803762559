"""Full image -> W+ encoder: backbone, multi-scale fusion, map2style."""
from typing import Optional

import torch
import torch.nn as nn

from .backbone import SwinBackbone
from .core import EncoderConfig
from .fusion import PyramidFusion
from .map2style import Map2Style, Map2StyleConfig, n_styles_for


class SwinStyleEncoder(nn.Module):
    def __init__(self, enc_cfg: EncoderConfig, m2s_cfg: Optional[Map2StyleConfig] = None,
                 multi_scale: bool = True):
        super().__init__()
        if m2s_cfg is None:
            m2s_cfg = Map2StyleConfig(n_styles=n_styles_for(enc_cfg.input_resolution))
        self.enc_cfg = enc_cfg
        self.m2s_cfg = m2s_cfg
        sides = [enc_cfg.stage_side(i) for i in range(4)]
        self.backbone = SwinBackbone(enc_cfg)
        self.fusion = PyramidFusion(enc_cfg.stage_dims, sides, all_coarser=multi_scale)
        self.map2style = Map2Style(enc_cfg.stage_dims, sides, m2s_cfg)

    def forward(self, img: torch.Tensor, return_pyramid: bool = False):
        levels = self.backbone(img)
        fused = self.fusion(levels)
        codes = self.map2style(fused)
        if return_pyramid:
            return codes, levels, fused
        return codes
