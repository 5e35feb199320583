"""HiFi-GAN multi-period + multi-scale discriminator ensemble, forward only.

This is the comparison target for model size and forward speed.  Layer
geometry follows the published HiFi-GAN topology; weight normalization is
folded away since only the forward pass is used.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, ShapeError

# (in, out, kernel, stride, groups, padding)
MSD_LAYERS = [
    (1, 128, 15, 1, 1, 7),
    (128, 128, 41, 2, 4, 20),
    (128, 256, 41, 2, 16, 20),
    (256, 512, 41, 4, 16, 20),
    (512, 1024, 41, 4, 16, 20),
    (1024, 1024, 41, 1, 16, 20),
    (1024, 1024, 5, 1, 1, 2),
]
MPD_CHANNELS = [1, 32, 128, 512, 1024]


@dataclass
class EnsembleConfig:
    periods: List[int] = field(default_factory=lambda: [2, 3, 5, 7, 11])
    msd_scales: int = 3
    mpd_kernel: int = 5
    mpd_stride: int = 3
    mpd_channels: List[int] = field(default_factory=lambda: list(MPD_CHANNELS))
    lrelu_slope: float = 0.1

    def validate(self) -> "EnsembleConfig":
        if any(p < 2 for p in self.periods):
            raise ConfigError("periods", "periods must be >= 2")
        if any(b <= a for a, b in zip(self.periods, self.periods[1:])):
            raise ConfigError("periods", "periods must be strictly increasing")
        if self.msd_scales < 0:
            raise ConfigError("msd_scales", "must be >= 0")
        if not self.periods and not self.msd_scales:
            raise ConfigError("periods", "ensemble needs at least one sub-discriminator")
        if self.mpd_channels[0] != 1:
            raise ConfigError("mpd_channels", "first entry must be 1 (mono input)")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict, prefix: str = "") -> "EnsembleConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        for key in d:
            if key not in names:
                raise ConfigError(prefix + key, "unknown key")
        return cls(**d).validate()


class PeriodDiscriminator(nn.Module):
    def __init__(self, period, channels, kernel=5, stride=3, slope=0.1):
        super().__init__()
        self.period, self.slope = period, slope
        pad = (kernel - 1) // 2
        self.convs = nn.ModuleList(
            nn.Conv2d(a, b, (kernel, 1), (stride, 1), (pad, 0)) for a, b in zip(channels, channels[1:])
        )
        last = channels[-1]
        self.convs.append(nn.Conv2d(last, last, (kernel, 1), 1, (pad, 0)))
        self.post = nn.Conv2d(last, 1, (3, 1), 1, (1, 0))

    def forward(self, x):
        b, c, t = x.shape
        if t % self.period:
            x = F.pad(x, (0, self.period - t % self.period), mode="reflect")
            t = x.shape[-1]
        h = x.view(b, c, t // self.period, self.period)
        feats = []
        for conv in self.convs:
            h = F.leaky_relu(conv(h), self.slope)
            feats.append(h)
        h = self.post(h)
        feats.append(h)
        return h.flatten(1, -1), feats


class ScaleDiscriminator(nn.Module):
    def __init__(self, slope=0.1):
        super().__init__()
        self.slope = slope
        self.convs = nn.ModuleList(
            nn.Conv1d(i, o, k, s, groups=g, padding=p) for i, o, k, s, g, p in MSD_LAYERS
        )
        self.post = nn.Conv1d(1024, 1, 3, 1, padding=1)

    def forward(self, x):
        feats = []
        h = x
        for conv in self.convs:
            h = F.leaky_relu(conv(h), self.slope)
            feats.append(h)
        h = self.post(h)
        feats.append(h)
        return h.flatten(1, -1), feats


class DiscriminatorEnsemble(nn.Module):
    def __init__(self, config: EnsembleConfig):
        super().__init__()
        self.config = config.validate()
        self.mpd = nn.ModuleList(
            PeriodDiscriminator(p, config.mpd_channels, config.mpd_kernel, config.mpd_stride, config.lrelu_slope)
            for p in config.periods
        )
        self.msd = nn.ModuleList(ScaleDiscriminator(config.lrelu_slope) for _ in range(config.msd_scales))
        self.pool = nn.AvgPool1d(4, 2, padding=2)

    def forward(self, wave: torch.Tensor) -> List[Tuple[torch.Tensor, List[torch.Tensor]]]:
        if wave.dim() != 3 or wave.shape[1] != 1:
            raise ShapeError(f"ensemble expects [batch, 1, time], got {tuple(wave.shape)}")
        outputs = [d(wave) for d in self.mpd]
        x = wave
        for i, d in enumerate(self.msd):
            if i:
                x = self.pool(x)
            outputs.append(d(x))
        return outputs


def build_ensemble(config: EnsembleConfig | None = None, seed: int = 0) -> DiscriminatorEnsemble:
    model = DiscriminatorEnsemble(config or EnsembleConfig())
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in model.modules():
            if isinstance(m, (nn.Conv1d, nn.Conv2d)):
                fan_in = m.weight[0].numel()
                bound = 1.0 / math.sqrt(fan_in)
                for p in (m.weight, m.bias):
                    p.copy_(torch.rand(p.shape, generator=gen).mul(2 * bound).sub(bound))
    return model


def period_padded_length(length: int, period: int) -> int:
    return -(-length // period) * period
