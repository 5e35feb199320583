"""Forward-pass timing for discriminators: real + fake batch, median over runs."""

from __future__ import annotations

import statistics
import time

import torch


def benchmark_disc(model, batch: int = 16, segment: int = 8192, warmup: int = 1, iters: int = 3,
                   seed: int = 0) -> float:
    """Median seconds to forward one real and one fake batch through ``model``."""
    if warmup < 1:
        raise ValueError("warmup must be >= 1")
    gen = torch.Generator().manual_seed(seed)
    real = torch.randn(batch, 1, segment, generator=gen).clamp_(-1, 1)
    fake = torch.randn(batch, 1, segment, generator=gen).clamp_(-1, 1)
    model.eval()
    times = []
    with torch.inference_mode():
        for i in range(warmup + iters):
            t0 = time.perf_counter()
            model(real)
            model(fake)
            if i >= warmup:
                times.append(time.perf_counter() - t0)
    return statistics.median(times)


def compare(candidate, baseline, **kwargs) -> dict:
    """Time both models under identical settings; ``ratio`` = baseline / candidate."""
    t_candidate = benchmark_disc(candidate, **kwargs)
    t_baseline = benchmark_disc(baseline, **kwargs)
    return {
        "candidate_seconds": t_candidate,
        "baseline_seconds": t_baseline,
        "ratio": t_baseline / t_candidate,
        "threads": torch.get_num_threads(),
    }
