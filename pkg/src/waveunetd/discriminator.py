"""Wave-U-Net discriminator: sample-wise real/fake scores at input resolution."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import List

import torch
import torch.nn as nn

from . import autodiff as ad
from .errors import ConfigError, ShapeError


@dataclass
class WaveUNetConfig:
    """Encoder/decoder geometry.

    Level ``l`` of the encoder has ``base_channels * channel_multipliers[l]``
    channels; index 0 is the input conv, the last entry is the bottleneck.
    Decoder strides mirror ``down_strides`` in reverse.
    """

    levels: int = 4
    base_channels: int = 13
    channel_multipliers: List[int] = field(default_factory=lambda: [1, 2, 4, 16, 32])
    down_strides: List[int] = field(default_factory=lambda: [4, 4, 4, 4])
    io_kernel: int = 15
    block_kernel: int = 5
    residual_scale: float = 0.4
    lrelu_slope: float = 0.1
    total_stride: int = 256

    def channels(self) -> List[int]:
        return [self.base_channels * m for m in self.channel_multipliers]

    def validate(self) -> "WaveUNetConfig":
        if self.levels < 1:
            raise ConfigError("levels", "must be >= 1")
        if self.base_channels < 1:
            raise ConfigError("base_channels", "must be >= 1")
        if len(self.channel_multipliers) != self.levels + 1:
            raise ConfigError("channel_multipliers", f"need levels + 1 = {self.levels + 1} entries")
        if len(self.down_strides) != self.levels or any(s < 1 for s in self.down_strides):
            raise ConfigError("down_strides", f"need {self.levels} positive strides")
        if math.prod(self.down_strides) != self.total_stride:
            raise ConfigError("down_strides", f"product must equal total_stride={self.total_stride}")
        for key in ("io_kernel", "block_kernel"):
            k = getattr(self, key)
            if k < 1 or k % 2 == 0:
                raise ConfigError(key, "kernel sizes must be odd and positive")
        ch = self.channels()
        if any(c < 1 for c in ch):
            raise ConfigError("channel_multipliers", "must be positive")
        for i in range(self.levels):
            if ch[i + 1] % ch[i]:
                raise ConfigError("channel_multipliers", f"level {i + 1} width {ch[i + 1]} is not a multiple of {ch[i]}")
        if self.residual_scale <= 0:
            raise ConfigError("residual_scale", "must be positive")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict, prefix: str = "") -> "WaveUNetConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        for key in d:
            if key not in names:
                raise ConfigError(prefix + key, "unknown key")
        return cls(**d).validate()


@dataclass
class DiscOutput:
    score_map: torch.Tensor  # (B, 1, T) at input resolution
    features: List[torch.Tensor]


class Conv(nn.Module):
    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(out_ch, in_ch, kernel))
        self.bias = nn.Parameter(torch.empty(out_ch))
        self.stride, self.padding = stride, padding

    def fan_in(self):
        return self.weight.shape[1] * self.weight.shape[2]

    def forward(self, x):
        return ad.conv1d(x, self.weight, self.bias, self.stride, self.padding)


class ConvT(nn.Module):
    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(in_ch, out_ch, kernel))
        self.bias = nn.Parameter(torch.empty(out_ch))
        self.stride, self.padding = stride, padding

    def fan_in(self):
        return self.weight.shape[0] * self.weight.shape[2]

    def forward(self, x, length=None):
        y = ad.conv_transpose1d(x, self.weight, self.bias, self.stride, self.padding)
        if length is not None:
            if y.shape[-1] < length:
                raise ShapeError(f"transposed conv produced {y.shape[-1]} steps, need {length}")
            y = y[..., :length]
        return y


def init_weights(module: nn.Module, seed: int) -> None:
    """Uniform fan-in init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)), in module order."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (Conv, ConvT)):
                bound = 1.0 / math.sqrt(m.fan_in())
                for p in (m.weight, m.bias):
                    p.copy_(torch.rand(p.shape, generator=gen, dtype=torch.float64).mul(2 * bound).sub(bound))


class ResBlockDown(nn.Module):
    """Conv(stride) -> GN -> LReLU -> Conv -> GN -> LReLU, plus a strided shortcut
    whose channels are duplicated up to the output width."""

    def __init__(self, in_ch, out_ch, stride, kernel=5, slope=0.1, scale=0.4):
        super().__init__()
        if out_ch % in_ch:
            raise ConfigError("channel_multipliers", f"{out_ch} is not a multiple of {in_ch}")
        self.conv1 = Conv(in_ch, out_ch, kernel, stride, kernel // 2)
        self.conv2 = Conv(out_ch, out_ch, kernel, 1, kernel // 2)
        self.shortcut = Conv(in_ch, in_ch, stride, stride) if stride > 1 else None
        self.factor = out_ch // in_ch
        self.slope, self.scale = slope, scale

    def forward(self, x):
        h = ad.leaky_relu(ad.global_norm(self.conv1(x)), self.slope)
        h = ad.leaky_relu(ad.global_norm(self.conv2(h)), self.slope)
        s = self.shortcut(x) if self.shortcut is not None else x
        return ad.residual_combine(h, ad.duplicate_channels(s, self.factor), self.scale)


class ResBlockUp(nn.Module):
    """ConvT(stride) -> GN -> LReLU -> Conv -> GN -> LReLU, plus a shortcut that
    group-means channels down to the output width and upsamples with a ConvT."""

    def __init__(self, in_ch, out_ch, stride, kernel=5, slope=0.1, scale=0.4):
        super().__init__()
        if in_ch % out_ch:
            raise ConfigError("channel_multipliers", f"{in_ch} is not a multiple of {out_ch}")
        self.conv1 = ConvT(in_ch, out_ch, kernel, stride, 0)
        self.conv2 = Conv(out_ch, out_ch, kernel, 1, kernel // 2)
        self.shortcut = ConvT(out_ch, out_ch, stride, stride)
        self.out_ch = out_ch
        self.slope, self.scale = slope, scale

    def forward(self, x, length):
        h = ad.leaky_relu(ad.global_norm(self.conv1(x, length)), self.slope)
        h = ad.leaky_relu(ad.global_norm(self.conv2(h)), self.slope)
        s = self.shortcut(ad.mean_channels(x, self.out_ch), length)
        return ad.residual_combine(h, s, self.scale)


class WaveUNetDiscriminator(nn.Module):
    def __init__(self, config: WaveUNetConfig):
        super().__init__()
        self.config = config.validate()
        ch = config.channels()
        k, slope, scale = config.block_kernel, config.lrelu_slope, config.residual_scale
        self.input_conv = Conv(1, ch[0], config.io_kernel, 1, config.io_kernel // 2)
        self.down = nn.ModuleList(
            ResBlockDown(ch[i], ch[i + 1], s, k, slope, scale) for i, s in enumerate(config.down_strides)
        )
        self.bottleneck = ResBlockDown(ch[-1], ch[-1], 1, k, slope, scale)
        self.up = nn.ModuleList(
            ResBlockUp(2 * ch[i + 1], ch[i], config.down_strides[i], k, slope, scale)
            for i in reversed(range(config.levels))
        )
        self.output_conv = Conv(ch[0], 1, config.io_kernel, 1, config.io_kernel // 2)

    def forward(self, wave: torch.Tensor) -> DiscOutput:
        ad.check_tensor3(wave, "wave")
        if wave.shape[1] != 1:
            raise ShapeError(f"discriminator expects 1 channel, got {wave.shape[1]}")
        length = wave.shape[-1]
        hop = self.config.total_stride
        padded = -(-length // hop) * hop
        x = nn.functional.pad(wave, (0, padded - length)) if padded != length else wave

        h = self.input_conv(x)
        feats = [h]
        skips, lengths = [], []
        for block in self.down:
            lengths.append(h.shape[-1])
            h = block(h)
            skips.append(h)
            feats.append(h)
        h = self.bottleneck(h)
        feats.append(h)
        for block in self.up:
            h = block(ad.concat_channels(h, skips.pop()), lengths.pop())
            feats.append(h)
        score = self.output_conv(h)
        feats.append(score)
        if padded != length:
            score = score[..., :length]
            feats[-1] = score
        return DiscOutput(score, feats)


def build_waveunet(config: WaveUNetConfig | None = None, seed: int = 0) -> WaveUNetDiscriminator:
    model = WaveUNetDiscriminator(config or WaveUNetConfig())
    init_weights(model, seed)
    return model


def param_count(model: nn.Module | None) -> int:
    if model is None:
        return 0
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
