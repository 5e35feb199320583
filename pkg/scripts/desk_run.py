"""Desk-scale adversarial run on the synthetic corpus, with a loss-curve digest.

    python3 scripts/desk_run.py --config configs/desk.json --out runs/desk

Prints the summary, then g_mel / d_loss / g_adv averaged over 100-step windows.
"""

import argparse
import json
import logging
from pathlib import Path

import numpy as np

from waveunetd.train import TrainConfig, run


def window_table(metrics_path, width=100):
    recs = [json.loads(line) for line in Path(metrics_path).read_text().splitlines()]
    keys = ("d_loss", "g_adv", "g_fm", "g_mel")
    print(f"{'steps':>11} " + " ".join(f"{k:>8}" for k in keys))
    for start in range(0, len(recs), width):
        chunk = recs[start:start + width]
        means = [np.mean([r[k] for r in chunk]) for k in keys]
        print(f"{start + 1:5d}-{start + len(chunk):5d} " + " ".join(f"{m:8.4f}" for m in means))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/desk.json")
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--steps", type=int)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    summary = run(TrainConfig.load(args.config), args.out, steps=args.steps)
    print(json.dumps(summary, indent=2, sort_keys=True))
    window_table(Path(args.out) / "metrics.jsonl")


if __name__ == "__main__":
    main()
