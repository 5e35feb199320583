"""Least-squares adversarial, feature-matching and mel reconstruction losses.

The discriminator emits a score per sample, so each expectation over data is
realized as a mean over every element of the score map (batch and time).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch

from .audio import MelConfig, TorchLogMel
from .discriminator import DiscOutput
from .errors import ShapeError


def adv_loss_d(d_real: DiscOutput, d_fake: DiscOutput) -> torch.Tensor:
    real, fake = d_real.score_map, d_fake.score_map
    if real.shape != fake.shape:
        raise ShapeError(f"score maps differ: {tuple(real.shape)} vs {tuple(fake.shape)}")
    return (real - 1).pow(2).mean() + fake.pow(2).mean()


def adv_loss_g(d_fake: DiscOutput) -> torch.Tensor:
    return (d_fake.score_map - 1).pow(2).mean()


def feature_matching(feats_real: Sequence[torch.Tensor], feats_fake: Sequence[torch.Tensor]) -> torch.Tensor:
    """Sum over layers of the per-element mean absolute difference.

    Real features are detached, so this loss never trains the discriminator.
    """
    if len(feats_real) != len(feats_fake):
        raise ShapeError(f"feature lists differ in length: {len(feats_real)} vs {len(feats_fake)}")
    if not feats_real:
        raise ShapeError("feature lists are empty")
    total = 0
    for i, (r, f) in enumerate(zip(feats_real, feats_fake)):
        if r.shape != f.shape:
            raise ShapeError(f"layer {i}: {tuple(r.shape)} vs {tuple(f.shape)}")
        total = total + (r.detach() - f).abs().mean()
    return total


class MelLoss(torch.nn.Module):
    """Mean L1 distance between log-mel spectrograms of two waveforms."""

    def __init__(self, cfg: MelConfig = MelConfig()):
        super().__init__()
        self.mel = TorchLogMel(cfg)

    def forward(self, real_wave, fake_wave):
        if real_wave.shape != fake_wave.shape:
            raise ShapeError(f"waveforms differ: {tuple(real_wave.shape)} vs {tuple(fake_wave.shape)}")
        return (self.mel(real_wave) - self.mel(fake_wave)).abs().mean()


_default_mel_loss = None


def mel_loss(real_wave, fake_wave) -> torch.Tensor:
    global _default_mel_loss
    if _default_mel_loss is None:
        _default_mel_loss = MelLoss()
    return _default_mel_loss(real_wave, fake_wave)


@dataclass
class LossBundle:
    d_loss: float
    g_adv: float
    g_fm: float
    g_mel: float
    g_total: float
    lambda_fm: float = 2.0
    lambda_mel: float = 45.0


def generator_total(g_adv, g_fm, g_mel, lambda_fm=2.0, lambda_mel=45.0):
    return g_adv + lambda_fm * g_fm + lambda_mel * g_mel
