"""Print a size/speed comparison table for the Wave-U-Net discriminator and the ensemble.

    python3 scripts/size_speed_table.py --batches 4 16 --iters 3 --out results/size_speed.json
"""

import argparse
import json
from pathlib import Path

import torch

from waveunetd.bench import benchmark_disc
from waveunetd.discriminator import build_waveunet, param_count
from waveunetd.ensemble import build_ensemble
from waveunetd.train import configure_determinism


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batches", type=int, nargs="+", default=[16])
    ap.add_argument("--segment", type=int, default=8192)
    ap.add_argument("--iters", type=int, default=3)
    ap.add_argument("--out", help="optional JSON output path")
    args = ap.parse_args()

    configure_determinism()
    models = {"waveunet": build_waveunet(), "ensemble": build_ensemble()}
    rows = []
    for batch in args.batches:
        times = {name: benchmark_disc(m, batch, args.segment, iters=args.iters) for name, m in models.items()}
        rows.append({"batch": batch, **{f"{k}_s": v for k, v in times.items()},
                     "speed_ratio": times["ensemble"] / times["waveunet"]})

    n = {name: param_count(m) for name, m in models.items()}
    print("| model | params (M) | " + " | ".join(f"fwd b{r['batch']} (s)" for r in rows) + " |")
    print("|---|---|" + "---|" * len(rows))
    for name in models:
        print(f"| {name} | {n[name] / 1e6:.2f} | " + " | ".join(f"{r[name + '_s']:.3f}" for r in rows) + " |")
    print(f"\nparam ratio ensemble/waveunet: {n['ensemble'] / n['waveunet']:.2f}")
    for r in rows:
        print(f"speed ratio at batch {r['batch']}: {r['speed_ratio']:.2f} (threads={torch.get_num_threads()})")

    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps({"params": n, "segment": args.segment, "rows": rows,
                                              "threads": torch.get_num_threads()}, indent=2))


if __name__ == "__main__":
    main()
