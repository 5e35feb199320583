"""Small mel-to-waveform generator used to drive adversarial training."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import List

import torch
import torch.nn as nn

from . import autodiff as ad
from .discriminator import Conv, ConvT, init_weights
from .errors import ConfigError, ShapeError


@dataclass
class GeneratorConfig:
    n_mels: int = 80
    base_channels: int = 256
    up_strides: List[int] = field(default_factory=lambda: [8, 8, 2, 2])
    io_kernel: int = 7
    res_kernel: int = 7
    lrelu_slope: float = 0.1
    hop: int = 256

    def validate(self) -> "GeneratorConfig":
        if math.prod(self.up_strides) != self.hop:
            raise ConfigError("up_strides", f"product must equal hop={self.hop}")
        if self.base_channels >> len(self.up_strides) < 1:
            raise ConfigError("base_channels", "too narrow to halve at every stage")
        for key in ("io_kernel", "res_kernel"):
            if getattr(self, key) % 2 == 0:
                raise ConfigError(key, "must be odd")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict, prefix: str = "") -> "GeneratorConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        for key in d:
            if key not in names:
                raise ConfigError(prefix + key, "unknown key")
        return cls(**d).validate()


class ResConv(nn.Module):
    def __init__(self, ch, kernel, slope):
        super().__init__()
        self.conv1 = Conv(ch, ch, kernel, 1, kernel // 2)
        self.conv2 = Conv(ch, ch, kernel, 1, kernel // 2)
        self.slope = slope

    def forward(self, x):
        h = self.conv1(ad.leaky_relu(x, self.slope))
        return x + self.conv2(ad.leaky_relu(h, self.slope))


class ToyGenerator(nn.Module):
    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config.validate()
        c = config.base_channels
        self.input_conv = Conv(config.n_mels, c, config.io_kernel, 1, config.io_kernel // 2)
        ups, blocks = [], []
        for s in config.up_strides:
            # kernel 2s, padding s/2 -> exact factor-s upsampling
            ups.append(ConvT(c, c // 2, 2 * s, s, s // 2))
            c //= 2
            blocks.append(ResConv(c, config.res_kernel, config.lrelu_slope))
        self.ups = nn.ModuleList(ups)
        self.blocks = nn.ModuleList(blocks)
        self.output_conv = Conv(c, 1, config.io_kernel, 1, config.io_kernel // 2)

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        ad.check_tensor3(mel, "mel")
        if mel.shape[1] != self.config.n_mels:
            raise ShapeError(f"generator expects {self.config.n_mels} mel bands, got {mel.shape[1]}")
        slope = self.config.lrelu_slope
        h = self.input_conv(mel)
        for up, block in zip(self.ups, self.blocks):
            h = block(up(ad.leaky_relu(h, slope)))
        return torch.tanh(self.output_conv(ad.leaky_relu(h, slope)))


def build_generator(config: GeneratorConfig | None = None, seed: int = 0) -> ToyGenerator:
    model = ToyGenerator(config or GeneratorConfig())
    init_weights(model, seed)
    return model


def generate(model: ToyGenerator, mel, length: int | None = None) -> torch.Tensor:
    """Synthesize ``(B, 1, frames * hop)`` audio, optionally trimmed to ``length``."""
    if not torch.is_tensor(mel):
        mel = torch.as_tensor(getattr(mel, "frames", mel), dtype=torch.float32)
    if mel.dim() == 2:
        mel = mel.unsqueeze(0)
    wave = model(mel)
    return wave[..., :length] if length is not None else wave
