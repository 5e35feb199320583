"""Acceptance criteria 1-10, one test each.

Every test records a ``CRITERION n: PASS|FAIL ...`` line before asserting, and
the lines are echoed in a summary section at the end of the pytest run.
Run just this file with ``pytest tests/test_acceptance.py`` (about 25 minutes
on one CPU core, dominated by the 2000-step training run).
"""

import json
import math
import time

import numpy as np
import pytest
import torch

from waveunetd import autodiff as ad
from waveunetd.bench import compare
from waveunetd.cli import main, shape_only_model
from waveunetd.discriminator import DiscOutput, build_waveunet, param_count
from waveunetd.ensemble import build_ensemble
from waveunetd.gradcheck import TOLERANCE, run_suite
from waveunetd.losses import adv_loss_d, adv_loss_g, feature_matching
from waveunetd.optim import adamw_step
from waveunetd.train import TrainConfig, configure_determinism, run

RESULTS = {}


def record(n, ok, detail):
    line = f"CRITERION {n:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def test_criterion_01_waveunet_param_count():
    t0 = time.perf_counter()
    n = param_count(shape_only_model("waveunet"))
    dt = time.perf_counter() - t0
    rel = (n - 4.9e6) / 4.9e6
    record(1, abs(rel) <= 0.05 and dt < 1.0,
           f"waveunet params {n} ({rel:+.2%} vs 4.9M, tol 5%), counted in {dt:.3f} s")


def test_criterion_02_ensemble_param_count_and_ratio():
    t0 = time.perf_counter()
    n_ens = param_count(shape_only_model("ensemble"))
    n_wud = param_count(shape_only_model("waveunet"))
    dt = time.perf_counter() - t0
    rel = (n_ens - 70.7e6) / 70.7e6
    ratio = n_ens / n_wud
    record(2, abs(rel) <= 0.02 and 13.0 <= ratio <= 16.0 and dt < 1.0,
           f"ensemble params {n_ens} ({rel:+.2%} vs 70.7M, tol 2%), ratio {ratio:.2f} in [13, 16], "
           f"counted in {dt:.3f} s")


def test_criterion_03_forward_speed():
    configure_determinism()
    t0 = time.perf_counter()
    res = compare(build_waveunet(), build_ensemble(), batch=16, segment=8192, warmup=1, iters=3)
    dt = time.perf_counter() - t0
    ok = res["candidate_seconds"] < res["baseline_seconds"] and res["ratio"] > 1.3 and dt < 300
    record(3, ok, f"batch 16 x 8192 real+fake: waveunet {res['candidate_seconds']:.3f} s, ensemble "
                  f"{res['baseline_seconds']:.3f} s, ratio {res['ratio']:.2f} (> 1.3), "
                  f"threads {res['threads']}, bench took {dt:.0f} s")


def test_criterion_04_resolution():
    disc = build_waveunet()
    got = {}
    with torch.no_grad():
        for length in (256, 4096, 8192):
            got[length] = disc(torch.randn(1, 1, length)).score_map.shape[-1]
    record(4, all(k == v for k, v in got.items()), f"input -> score_map time {got}")


def test_criterion_05_gradient_suite():
    t0 = time.perf_counter()
    results = run_suite(0)
    dt = time.perf_counter() - t0
    worst = max(results, key=lambda r: r.max_rel_error)
    ok = all(r.passed for r in results) and dt < 120
    record(5, ok, f"{len(results)} checks (kernels + composed D and G), worst {worst.name} "
                  f"{worst.max_rel_error:.2e} < {TOLERANCE:.0e}, {dt:.0f} s")


def test_criterion_06_global_norm():
    zero = ad.global_norm(torch.zeros(2, 3, 5))
    b = ad.global_norm(torch.tensor([[[3.0, 4.0]]], dtype=torch.float64)).flatten().tolist()
    example = abs(b[0] - 0.848528) <= 1e-5 and abs(b[1] - 1.131371) <= 1e-5
    gen = torch.Generator().manual_seed(0)
    rms_err = scale_err = 0.0
    for i in range(50):
        a = torch.randn(2, 4, 64, generator=gen, dtype=torch.float64) * 10 ** (i / 10 - 1)
        out = ad.global_norm(a)
        rms_err = max(rms_err, (out.pow(2).mean(dim=(1, 2)).sqrt() - 1).abs().max().item())
        for c in (0.5, 2.0, 100.0):
            scale_err = max(scale_err, (ad.global_norm(c * a) - out).abs().max().item())
    ok = torch.equal(zero, torch.zeros(2, 3, 5)) and example and rms_err <= 1e-4 and scale_err <= 1e-5
    record(6, ok, f"zero -> zero, [3,4] -> [{b[0]:.6f}, {b[1]:.6f}], max |rms-1| {rms_err:.1e}, "
                  f"max scale deviation {scale_err:.1e}")


def test_criterion_07_loss_oracles():
    def const(v):
        return DiscOutput(torch.full((2, 1, 64), float(v)), [])

    got = [adv_loss_d(const(1), const(0)).item(), adv_loss_d(const(0.5), const(0.5)).item(),
           adv_loss_d(const(0), const(1)).item(), adv_loss_g(const(0.5)).item(), adv_loss_g(const(0)).item()]
    feats = [torch.randn(2, 3, 8), torch.randn(2, 1, 8)]
    fm = feature_matching(feats, [f.clone() for f in feats]).item()
    ok = got == [0.0, 0.5, 2.0, 0.25, 1.0] and fm == 0.0
    record(7, ok, f"constant-map losses {got} (want [0, 0.5, 2, 0.25, 1]), fm at identity {fm}")


def test_criterion_08_adamw_oracle():
    w = torch.ones(1, dtype=torch.float64)
    adamw_step([w], [torch.ones(1, dtype=torch.float64)], {}, 2e-4, (0.8, 0.99), 0.01)
    first = w.item()

    grads = [0.3, -1.2, 2.5]
    p, state = torch.tensor([0.7], dtype=torch.float64), {}
    ref, m, v, worst = 0.7, 0.0, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        adamw_step([p], [torch.tensor([g], dtype=torch.float64)], state, 2e-4, (0.8, 0.99), 0.01)
        ref -= 2e-4 * 0.01 * ref
        m = 0.8 * m + 0.2 * g
        v = 0.99 * v + 0.01 * g * g
        ref -= 2e-4 * (m / (1 - 0.8 ** t)) / (math.sqrt(v / (1 - 0.99 ** t)) + 1e-8)
        worst = max(worst, abs(p.item() - ref))
    ok = abs(first - 0.999798) <= 1e-9 and worst < 1e-12
    record(8, ok, f"first step w' = {first:.10f} (want 0.999798 +- 1e-9), "
                  f"3-step trace max deviation {worst:.1e} (< 1e-12)")


@pytest.mark.slow
def test_criterion_09_end_to_end_smoke(tmp_path):
    t0 = time.perf_counter()
    summary = run(TrainConfig.desk(), tmp_path / "desk", progress_every=0)
    dt = time.perf_counter() - t0
    lines = (tmp_path / "desk" / "metrics.jsonl").read_text().splitlines()
    finite = all(math.isfinite(v) for line in lines for v in json.loads(line).values())
    ratio = summary["g_mel_ratio"]
    ok = (summary["diverged"] is None and finite and summary["steps"] == 2000 and len(lines) == 2000
          and ratio < 0.5 and not summary["saturation_tripped"] and dt < 1800)
    record(9, ok, f"2000 steps in {dt / 60:.1f} min, finite {finite}, g_mel {summary['g_mel_first_window']:.3f} -> "
                  f"{summary['g_mel_last_window']:.3f} (ratio {ratio:.2f} < 0.5), saturation tripped "
                  f"{summary['saturation_tripped']} (longest run {summary['longest_saturated_run']})")


def test_criterion_10_determinism(tmp_path, capsys):
    cfg = TrainConfig.desk(steps=10, checkpoint_every=5)
    (tmp_path / "cfg.json").write_text(json.dumps(cfg.to_dict()))
    for name in ("a", "b"):
        assert main(["train", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path / name)]) == 0
    capsys.readouterr()
    files = sorted(p.name for p in (tmp_path / "a").iterdir() if p.name != "timing.jsonl")
    same = {f: (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files}
    ckpts = [f for f in files if f.endswith(".wud")]
    ok = all(same.values()) and len(ckpts) == 2 and torch.get_num_threads() == 1
    record(10, ok, f"two seeded 10-step train runs, single-threaded: "
                   f"{sum(same.values())}/{len(same)} files bit-identical ({', '.join(files)})")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
