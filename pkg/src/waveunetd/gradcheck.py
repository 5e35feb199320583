"""Central finite-difference checks of analytic gradients at float64."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Sequence

import torch

from . import autodiff as ad
from .discriminator import WaveUNetConfig, build_waveunet
from .generator import GeneratorConfig, build_generator
from .losses import MelLoss, adv_loss_g, feature_matching, generator_total

TOLERANCE = 1e-4
STEP = 1e-5


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    n_checked: int
    n_refined: int = 0  # coordinates re-differenced because a kink fell inside the step

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOLERANCE


def _rel(a: torch.Tensor, n: torch.Tensor, floor: float) -> torch.Tensor:
    diff = (a - n).abs()
    denom = torch.maximum(a.abs(), n.abs())
    return torch.where(denom < floor, torch.zeros_like(diff), diff / denom.clamp_min(floor))


def relative_error(analytic: torch.Tensor, numeric: torch.Tensor, floor: float = 1e-10) -> float:
    """Largest elementwise ``|a - n| / max(|a|, |n|)``; pairs below ``floor`` in both count as equal."""
    rel = _rel(analytic, numeric, floor)
    return float(rel.max()) if rel.numel() else 0.0


def _evaluate(fn, flat, i, eps):
    orig = flat[i].item()
    flat[i] = orig + eps
    plus = fn().item()
    flat[i] = orig - eps
    minus = fn().item()
    flat[i] = orig
    return plus, minus


def numeric_grad(fn: Callable[[], torch.Tensor], tensor: torch.Tensor, indices, eps: float = STEP) -> torch.Tensor:
    """Central differences of scalar ``fn()`` w.r.t. ``tensor`` at flat ``indices``."""
    flat = tensor.data.view(-1)
    out = torch.empty(len(indices), dtype=torch.float64)
    with torch.no_grad():
        for j, i in enumerate(indices):
            plus, minus = _evaluate(fn, flat, i, eps)
            out[j] = (plus - minus) / (2 * eps)
    return out


def _straddles_kink(fn, flat, i, eps) -> bool:
    # one-sided slopes of a smooth function differ by O(eps * f''); a slope jump is O(1)
    with torch.no_grad():
        f0 = fn().item()
        plus, minus = _evaluate(fn, flat, i, eps)
    right, left = (plus - f0) / eps, (f0 - minus) / eps
    return abs(right - left) > 1e-3 * max(abs(right), abs(left), 1e-8)


def check(name: str, fn: Callable[[], torch.Tensor], tensors: Sequence[torch.Tensor],
          max_coords: int | None = None, seed: int = 0, eps: float = STEP) -> GradCheckResult:
    """Compare autograd gradients of ``fn`` with central finite differences.

    At most ``max_coords`` coordinates per tensor are sampled; ``None`` checks
    all.  A coordinate whose perturbation crosses a leaky-ReLU kink is detected
    from its disagreeing one-sided slopes and re-differenced with ``eps / 100``.
    """
    for t in tensors:
        t.grad = None
    loss = fn()
    ad.backward(loss)
    gen = torch.Generator().manual_seed(seed)
    worst, count, refined = 0.0, 0, 0
    for t in tensors:
        n = t.numel()
        if max_coords is None or n <= max_coords:
            idx = list(range(n))
        else:
            idx = torch.randperm(n, generator=gen)[:max_coords].tolist()
        analytic = t.grad.reshape(-1)[idx].clone()
        numeric = numeric_grad(fn, t, idx, eps)
        rel = _rel(analytic, numeric, 1e-10)
        flat = t.data.view(-1)
        for j in torch.nonzero(rel >= TOLERANCE).flatten().tolist():
            if _straddles_kink(fn, flat, idx[j], eps):
                numeric[j] = numeric_grad(fn, t, [idx[j]], eps / 100)[0]
                refined += 1
        worst = max(worst, relative_error(analytic, numeric))
        count += len(idx)
    return GradCheckResult(name, worst, count, refined)


def _randn(*shape, gen):
    return torch.randn(*shape, generator=gen, dtype=torch.float64).requires_grad_(True)


def kernel_checks(seed: int = 0) -> List[GradCheckResult]:
    gen = torch.Generator().manual_seed(seed)
    R = lambda *s: torch.randn(*s, generator=gen, dtype=torch.float64)  # noqa: E731
    results = []

    x, w, b = _randn(2, 3, 17, gen=gen), _randn(4, 3, 5, gen=gen), _randn(4, gen=gen)
    wt = R(2, 4, 9)
    results.append(check("conv1d", lambda: (ad.conv1d(x, w, b, 2, 2) * wt).sum(), [x, w, b]))

    x, w, b = _randn(2, 4, 9, gen=gen), _randn(4, 3, 5, gen=gen), _randn(3, gen=gen)
    wt = R(2, 3, 37)
    results.append(check("conv_transpose1d", lambda: (ad.conv_transpose1d(x, w, b, 4, 0) * wt).sum(), [x, w, b]))

    x = _randn(2, 3, 16, gen=gen)
    wt = R(2, 3, 16)
    results.append(check("leaky_relu", lambda: (ad.leaky_relu(x, 0.1) * wt).sum(), [x]))

    x = _randn(2, 4, 32, gen=gen)
    wt = R(2, 4, 32)
    results.append(check("global_norm", lambda: (ad.global_norm(x) * wt).sum(), [x]))

    m, s = _randn(2, 3, 8, gen=gen), _randn(2, 3, 8, gen=gen)
    wt = R(2, 3, 8)
    results.append(check("residual_combine", lambda: (ad.residual_combine(m, s, 0.4) * wt).sum(), [m, s]))

    x = _randn(2, 2, 8, gen=gen)
    wt = R(2, 6, 8)
    results.append(check("duplicate_channels", lambda: (ad.duplicate_channels(x, 3) * wt).sum(), [x]))

    x = _randn(2, 4, 8, gen=gen)
    wt = R(2, 2, 8)
    results.append(check("mean_channels", lambda: (ad.mean_channels(x, 2) * wt).sum(), [x]))

    a, c = _randn(2, 3, 8, gen=gen), _randn(2, 1, 8, gen=gen)
    wt = R(2, 4, 8)
    results.append(check("concat_channels", lambda: (ad.concat_channels(a, c) * wt).sum(), [a, c]))

    x = _randn(1, 2, 16, gen=gen)
    results.append(check("mean_square", lambda: x.pow(2).mean(), [x]))
    return results


def tiny_disc_config() -> WaveUNetConfig:
    return WaveUNetConfig(base_channels=2, channel_multipliers=[1, 2, 2, 4, 4])


def tiny_gen_config() -> GeneratorConfig:
    return GeneratorConfig(base_channels=16, res_kernel=3)


def model_checks(seed: int = 0, max_coords: int = 6) -> List[GradCheckResult]:
    """Composed discriminator and generator (through the full generator loss)."""
    gen = torch.Generator().manual_seed(seed)
    disc = build_waveunet(tiny_disc_config(), seed=seed).double()
    wave = torch.randn(2, 1, 512, generator=gen, dtype=torch.float64)
    wt = torch.randn(2, 1, 512, generator=gen, dtype=torch.float64)
    d_params = list(disc.parameters())
    results = [check("waveunet_discriminator", lambda: (disc(wave).score_map * wt).sum(),
                     d_params, max_coords, seed)]

    g = build_generator(tiny_gen_config(), seed=seed).double()
    mel = torch.randn(2, 80, 3, generator=gen, dtype=torch.float64) - 4.0
    real = 0.5 * torch.sin(torch.linspace(0, 60, 768, dtype=torch.float64)).expand(2, 1, 768)
    mel_loss = MelLoss().double()
    for p in d_params:
        p.requires_grad_(False)

    def g_total():
        fake = g(mel)
        d_fake, d_real = disc(fake), disc(real)
        return generator_total(adv_loss_g(d_fake), feature_matching(d_real.features, d_fake.features),
                               mel_loss(real, fake))

    results.append(check("generator_total_loss", g_total, list(g.parameters()), max_coords, seed))
    return results


def run_suite(seed: int = 0) -> List[GradCheckResult]:
    return kernel_checks(seed) + model_checks(seed)
