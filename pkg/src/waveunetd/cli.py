"""Command-line entry point: train, bench, params, gradcheck, synth, make-corpus."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt
from .audio import MelConfig, log_mel, load_wav, save_corpus, synth_corpus, write_wav
from .discriminator import WaveUNetConfig, WaveUNetDiscriminator, build_waveunet, param_count
from .ensemble import DiscriminatorEnsemble, EnsembleConfig, build_ensemble
from .errors import ConfigError, FormatError, RateError, ShapeError
from .generator import GeneratorConfig, ToyGenerator, build_generator

log = logging.getLogger("waveunetd")


def _load_json(path):
    with open(path) as f:
        return json.load(f)


def shape_only_model(name: str, config_path=None):
    """Build ``name`` on the meta device: real parameter shapes, no storage, no init."""
    data = _load_json(config_path) if config_path else {}
    with torch.device("meta"):
        if name == "waveunet":
            return WaveUNetDiscriminator(WaveUNetConfig.from_dict(data))
        if name == "generator":
            return ToyGenerator(GeneratorConfig.from_dict(data))
        return DiscriminatorEnsemble(EnsembleConfig.from_dict(data))


def cmd_params(args):
    n = param_count(shape_only_model(args.model, args.config))
    print(f"{args.model}: {n} parameters ({n / 1e6:.3f}M)")
    return 0


def cmd_bench(args):
    from .bench import compare
    from .train import configure_determinism

    configure_determinism()
    wud, ens = build_waveunet(), build_ensemble()
    n_wud, n_ens = param_count(wud), param_count(ens)
    print(f"waveunet params: {n_wud} ({n_wud / 1e6:.2f}M)")
    print(f"ensemble params: {n_ens} ({n_ens / 1e6:.2f}M)")
    print(f"param ratio ensemble/waveunet: {n_ens / n_wud:.2f}")
    res = compare(wud, ens, batch=args.batch, segment=args.segment, warmup=args.warmup, iters=args.iters)
    print(f"waveunet forward (real+fake, batch {args.batch} x {args.segment}): {res['candidate_seconds']:.4f} s")
    print(f"ensemble forward (real+fake, batch {args.batch} x {args.segment}): {res['baseline_seconds']:.4f} s")
    print(f"speed ratio ensemble/waveunet: {res['ratio']:.2f} (threads={res['threads']})")
    if args.json:
        res.update(waveunet_params=n_wud, ensemble_params=n_ens, param_ratio=n_ens / n_wud,
                   batch=args.batch, segment=args.segment)
        Path(args.json).write_text(json.dumps(res, indent=2, sort_keys=True))
    return 0


def cmd_gradcheck(args):
    from .gradcheck import TOLERANCE, run_suite

    torch.set_num_threads(1)
    results = run_suite(args.seed)
    worst = 0.0
    for r in results:
        status = "ok" if r.passed else "FAIL"
        extra = f", {r.n_refined} kink-refined" if r.n_refined else ""
        print(f"{r.name:24s} max rel err {r.max_rel_error:.3e} over {r.n_checked} coords{extra} [{status}]")
        worst = max(worst, r.max_rel_error)
    print(f"max rel err {worst:.3e} (tolerance {TOLERANCE:.0e})")
    return 0 if all(r.passed for r in results) else 1


def cmd_train(args):
    from .train import TrainConfig, run

    config = TrainConfig.load(args.config)
    summary = run(config, args.out, steps=args.steps, resume=args.resume)
    print(json.dumps(summary, indent=2, sort_keys=True))
    if summary.get("diverged") or summary.get("saturation_tripped"):
        return 1
    return 0


def _generator_from_checkpoint(path):
    tensors, meta = ckpt.load(path)
    if meta.get("kind") == "train":
        cfg = GeneratorConfig.from_dict(meta["config"]["gen"])
        mel_cfg = MelConfig(**meta["config"]["mel"])
        prefix = "generator/"
    elif meta.get("kind") == "generator":
        cfg = GeneratorConfig.from_dict(meta["config"])
        mel_cfg = MelConfig()
        prefix = ""
    else:
        raise FormatError(f"{path}: checkpoint kind {meta.get('kind')!r} has no generator")
    gen = build_generator(cfg)
    ckpt.load_into(gen, tensors, prefix)
    return gen, mel_cfg


def cmd_synth(args):
    gen, mel_cfg = _generator_from_checkpoint(args.checkpoint)
    clip = load_wav(args.wav, mel_cfg.sample_rate)
    mel = torch.from_numpy(log_mel(clip.samples, mel_cfg).frames.astype(np.float32))[None]
    with torch.no_grad():
        wave = gen(mel)[0, 0, :len(clip.samples)].numpy()
    write_wav(args.out, wave, mel_cfg.sample_rate)
    print(f"wrote {len(wave)} samples to {args.out}")
    return 0


def cmd_make_corpus(args):
    paths = save_corpus(synth_corpus(args.n, args.seed), args.out)
    print(f"wrote {len(paths)} clips to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="waveunetd", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="adversarial training run")
    s.add_argument("--config", required=True, help="TrainConfig JSON")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--steps", type=int, help="override the configured step count")
    s.add_argument("--resume", help="training checkpoint to resume from")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("bench", help="parameter counts and forward timing, waveunet vs ensemble")
    s.add_argument("--batch", type=int, default=16)
    s.add_argument("--segment", type=int, default=8192)
    s.add_argument("--warmup", type=int, default=1)
    s.add_argument("--iters", type=int, default=3)
    s.add_argument("--json", help="also write results to this file")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("params", help="count trainable parameters")
    s.add_argument("--model", choices=["waveunet", "ensemble", "generator"], default="waveunet")
    s.add_argument("--config", help="model config JSON")
    s.set_defaults(func=cmd_params)

    s = sub.add_parser("gradcheck", help="float64 finite-difference gradient suite")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("synth", help="vocode a wav file through a trained generator")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--wav", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("make-corpus", help="write the synthetic corpus as wav files")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_make_corpus)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: bad config key {exc.key!r}: {exc}", file=sys.stderr)
        return 2
    except (FormatError, RateError, ShapeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
