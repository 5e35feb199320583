"""Differentiable kernels over rank-3 ``[batch, channels, time]`` tensors.

Reverse-mode differentiation is provided by torch's define-by-run autograd;
every op recorded here participates in that tape.  Convolutions delegate to
``torch.nn.functional``; global normalization carries a hand-written backward
rule so its gradient can be checked independently of torch's own derivation.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F

from .errors import ShapeError, UsageError

GLOBAL_NORM_EPS = 1e-8

Tensor3 = torch.Tensor


def as_tensor3(values, dtype=torch.float32, requires_grad=False) -> Tensor3:
    """Build a ``[batch, channels, time]`` tensor, promoting 1-D/2-D input."""
    t = torch.as_tensor(values, dtype=dtype)
    while t.dim() < 3:
        t = t.unsqueeze(0)
    check_tensor3(t)
    if requires_grad:
        t = t.detach().clone().requires_grad_(True)
    return t


def check_tensor3(x: torch.Tensor, name: str = "input") -> None:
    if x.dim() != 3:
        raise ShapeError(f"{name} must be [batch, channels, time], got shape {tuple(x.shape)}")
    if x.numel() == 0:
        raise ShapeError(f"{name} is empty: shape {tuple(x.shape)}")


def conv1d(x: Tensor3, weight: torch.Tensor, bias=None, stride: int = 1, padding: int = 0) -> Tensor3:
    """Zero-padded cross-correlation.  ``weight`` is ``(out_ch, in_ch, k)``."""
    check_tensor3(x)
    out_ch, in_ch, k = weight.shape
    if x.shape[1] != in_ch:
        raise ShapeError(f"conv1d expects {in_ch} input channels, got {x.shape[1]}")
    if stride < 1 or padding < 0 or k < 1:
        raise ShapeError(f"invalid conv1d geometry: k={k}, stride={stride}, padding={padding}")
    out_t = (x.shape[2] + 2 * padding - k) // stride + 1
    if out_t < 1:
        raise ShapeError(f"conv1d output would have {out_t} time steps (time={x.shape[2]}, k={k})")
    return F.conv1d(x, weight, bias, stride=stride, padding=padding)


def conv_transpose1d(x: Tensor3, weight: torch.Tensor, bias=None, stride: int = 1, padding: int = 0) -> Tensor3:
    """Scatter-add adjoint of :func:`conv1d`.  ``weight`` is ``(in_ch, out_ch, k)``.

    Output length is ``(time - 1) * stride + k - 2 * padding``.
    """
    check_tensor3(x)
    in_ch, out_ch, k = weight.shape
    if x.shape[1] != in_ch:
        raise ShapeError(f"conv_transpose1d expects {in_ch} input channels, got {x.shape[1]}")
    if stride < 1 or padding < 0 or k < 1:
        raise ShapeError(f"invalid conv_transpose1d geometry: k={k}, stride={stride}, padding={padding}")
    out_t = (x.shape[2] - 1) * stride + k - 2 * padding
    if out_t < 1:
        raise ShapeError(f"conv_transpose1d output would have {out_t} time steps")
    return F.conv_transpose1d(x, weight, bias, stride=stride, padding=padding)


def leaky_relu(x: Tensor3, slope: float = 0.1) -> Tensor3:
    return F.leaky_relu(x, negative_slope=slope)


class _GlobalNorm(torch.autograd.Function):
    # b = a * r,  r = (mean(a^2) + eps)^-1/2 over (channels, time) of each item
    # da = r * g - r^3 / N * sum(g * a) * a

    @staticmethod
    def forward(ctx, a, eps):
        n = a.shape[1] * a.shape[2]
        r = torch.rsqrt(a.pow(2).sum(dim=(1, 2), keepdim=True) / n + eps)
        ctx.save_for_backward(a, r)
        return a * r

    @staticmethod
    def backward(ctx, g):
        a, r = ctx.saved_tensors
        n = a.shape[1] * a.shape[2]
        ga = (g * a).sum(dim=(1, 2), keepdim=True)
        return r * g - (r.pow(3) * ga / n) * a, None


def global_norm(x: Tensor3, eps: float = GLOBAL_NORM_EPS) -> Tensor3:
    """Scale each batch item by the inverse RMS of all its features.

    Statistics span channels x time of one item and are never shared across
    the batch.  There is no mean shift and nothing trainable.
    """
    check_tensor3(x)
    return _GlobalNorm.apply(x, eps)


def residual_combine(main: Tensor3, shortcut: Tensor3, scale: float = 0.4) -> Tensor3:
    """``(main + shortcut) * scale``."""
    if main.shape != shortcut.shape:
        raise ShapeError(f"residual branches differ: {tuple(main.shape)} vs {tuple(shortcut.shape)}")
    return (main + shortcut) * scale


def duplicate_channels(x: Tensor3, factor: int) -> Tensor3:
    """Tile the channel block ``factor`` times: out[:, j] = x[:, j % C]."""
    check_tensor3(x)
    if factor < 1:
        raise ShapeError(f"duplication factor must be >= 1, got {factor}")
    if factor == 1:
        return x
    return x.repeat(1, factor, 1)


def mean_channels(x: Tensor3, out_ch: int) -> Tensor3:
    """Group-mean reduction, the adjoint-consistent inverse of :func:`duplicate_channels`.

    Output channel ``j`` is the mean of input channels ``j, j + out_ch, ...``.
    """
    check_tensor3(x)
    b, c, t = x.shape
    if out_ch < 1 or c % out_ch:
        raise ShapeError(f"cannot reduce {c} channels to {out_ch}")
    if out_ch == c:
        return x
    return x.reshape(b, c // out_ch, out_ch, t).mean(dim=1)


def concat_channels(a: Tensor3, b: Tensor3) -> Tensor3:
    check_tensor3(a, "a")
    check_tensor3(b, "b")
    if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ShapeError(f"cannot concatenate {tuple(a.shape)} and {tuple(b.shape)} along channels")
    return torch.cat([a, b], dim=1)


def backward(loss: torch.Tensor) -> None:
    """Populate ``.grad`` of every leaf that requires it."""
    if loss.numel() != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
    if not loss.requires_grad:
        raise UsageError("loss was not produced from any tensor requiring grad")
    loss.reshape(()).backward()
