"""AdamW with decoupled weight decay, and the exponential learning-rate schedule."""

from __future__ import annotations

from typing import Iterable, List, Optional, Sequence

import torch

from .errors import ShapeError


def adamw_step(params: Sequence[torch.Tensor], grads: Sequence[Optional[torch.Tensor]], state: dict,
               lr: float, betas=(0.8, 0.99), weight_decay: float = 0.01, eps: float = 1e-8) -> dict:
    """One in-place AdamW update.

    ``state`` holds ``step`` (int) and the first/second moment lists ``m`` and
    ``v``; missing moments are created as zeros.  Weight decay is applied to
    the weights directly, separate from the adaptive step.  A ``None`` grad is
    treated as zero.
    """
    b1, b2 = betas
    if "m" not in state:
        state["m"] = [torch.zeros_like(p) for p in params]
        state["v"] = [torch.zeros_like(p) for p in params]
        state["step"] = 0
    if len(grads) != len(params) or len(state["m"]) != len(params):
        raise ShapeError("params, grads and optimizer state have different lengths")
    state["step"] += 1
    t = state["step"]
    bc1 = 1 - b1 ** t
    bc2 = 1 - b2 ** t
    with torch.no_grad():
        for p, g, m, v in zip(params, grads, state["m"], state["v"]):
            if g is None:
                g = torch.zeros_like(p)
            if g.shape != p.shape:
                raise ShapeError(f"grad shape {tuple(g.shape)} does not match param {tuple(p.shape)}")
            p.mul_(1 - lr * weight_decay)
            m.mul_(b1).add_(g, alpha=1 - b1)
            v.mul_(b2).addcmul_(g, g, value=1 - b2)
            denom = (v / bc2).sqrt_().add_(eps)
            p.addcdiv_(m, denom, value=-lr / bc1)
    return state


class AdamW:
    def __init__(self, params: Iterable[torch.Tensor], betas=(0.8, 0.99), weight_decay=0.01, eps=1e-8):
        self.params: List[torch.Tensor] = list(params)
        self.betas = tuple(betas)
        self.weight_decay = weight_decay
        self.eps = eps
        self.state: dict = {}

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, lr: float):
        adamw_step(self.params, [p.grad for p in self.params], self.state, lr,
                   self.betas, self.weight_decay, self.eps)

    def state_tensors(self) -> dict:
        if "m" not in self.state:
            return {}
        out = {}
        for i, (m, v) in enumerate(zip(self.state["m"], self.state["v"])):
            out[f"m/{i}"] = m
            out[f"v/{i}"] = v
        return out

    def load_state_tensors(self, tensors: dict, step: int):
        if step == 0:
            self.state = {}
            return
        n = len(self.params)
        self.state = {
            "step": step,
            "m": [tensors[f"m/{i}"].clone() for i in range(n)],
            "v": [tensors[f"v/{i}"].clone() for i in range(n)],
        }

    @property
    def step_count(self) -> int:
        return self.state.get("step", 0)


def lr_at(epoch: int, lr0: float = 2e-4, decay: float = 0.999) -> float:
    return lr0 * decay ** epoch
