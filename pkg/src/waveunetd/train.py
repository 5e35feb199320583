"""Adversarial training loop: one discriminator step, then one generator step."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import torch

from . import checkpoint as ckpt
from .audio import MelConfig, load_wav, mel_config_from_dict, sample_segment, synth_corpus
from .discriminator import DiscOutput, WaveUNetConfig, build_waveunet
from .errors import ConfigError
from .generator import GeneratorConfig, build_generator
from .losses import MelLoss, adv_loss_d, adv_loss_g, feature_matching, generator_total
from .optim import AdamW, lr_at

log = logging.getLogger(__name__)

DETERMINISTIC_ENV = "WUD_DETERMINISTIC"


def configure_determinism(enabled: Optional[bool] = None) -> bool:
    """Pin torch to one thread and deterministic kernels unless ``WUD_DETERMINISTIC=0``."""
    if enabled is None:
        enabled = os.environ.get(DETERMINISTIC_ENV, "1") != "0"
    if enabled:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)
    return enabled


@dataclass
class TrainConfig:
    lr0: float = 2e-4
    betas: Tuple[float, float] = (0.8, 0.99)
    weight_decay: float = 0.01
    lr_decay: float = 0.999
    # steps per decay interval ("epoch"); None -> one pass over the corpus
    decay_interval: Optional[int] = None
    batch: int = 16
    segment: int = 8192
    steps: int = 2000
    seed: int = 0
    n_clips: int = 10
    corpus_dir: Optional[str] = None
    lambda_fm: float = 2.0
    lambda_mel: float = 45.0
    checkpoint_every: int = 500
    disc: WaveUNetConfig = field(default_factory=WaveUNetConfig)
    gen: GeneratorConfig = field(default_factory=GeneratorConfig)
    mel: MelConfig = field(default_factory=MelConfig)

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """The desk-scale run: 10 synthetic clips, 2000 steps, batch 4."""
        return cls(**{"batch": 4, "steps": 2000, "n_clips": 10, **overrides}).validate()

    def validate(self) -> "TrainConfig":
        positive = ("lr0", "batch", "segment", "steps", "n_clips", "checkpoint_every")
        for key in positive:
            if getattr(self, key) <= 0:
                raise ConfigError(key, "must be positive")
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise ConfigError("betas", "need two values in [0, 1)")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay", "must lie in (0, 1]")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay", "must be >= 0")
        if self.decay_interval is not None and self.decay_interval < 1:
            raise ConfigError("decay_interval", "must be >= 1 or null")
        if self.segment % self.mel.hop:
            raise ConfigError("segment", f"must be a multiple of the hop ({self.mel.hop})")
        if self.gen.hop != self.mel.hop:
            raise ConfigError("gen.hop", "generator upsampling must equal the mel hop")
        if self.gen.n_mels != self.mel.n_mels:
            raise ConfigError("gen.n_mels", "must match mel.n_mels")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        for key in d:
            if key not in names:
                raise ConfigError(key, "unknown key")
        d = dict(d)
        parsers = {"disc": WaveUNetConfig.from_dict, "gen": GeneratorConfig.from_dict, "mel": mel_config_from_dict}
        for name, parse in parsers.items():
            if name not in d:
                continue
            if not isinstance(d[name], dict):
                raise ConfigError(name, "expected an object")
            try:
                d[name] = parse(d[name]) if name == "mel" else parse(d[name], name + ".")
            except ConfigError as exc:
                if exc.key.startswith(name + "."):
                    raise
                raise ConfigError(f"{name}.{exc.key}", exc.detail) from exc
            except TypeError as exc:
                raise ConfigError(name, str(exc)) from exc
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        for key, value in d.items():
            if key in ("disc", "gen", "mel", "betas", "corpus_dir", "decay_interval"):
                continue
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(key, f"expected a number, got {value!r}")
        return cls(**d).validate()

    @classmethod
    def load(cls, path) -> "TrainConfig":
        with open(path) as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as exc:
                raise ConfigError("config", f"{path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


@dataclass
class MetricsRecord:
    step: int
    epoch: int
    lr: float
    d_loss: float
    g_adv: float
    g_fm: float
    g_mel: float
    g_total: float
    wall_time: float = 0.0

    def to_json(self) -> str:
        d = dataclasses.asdict(self)
        d.pop("wall_time")  # kept out of the log so seeded runs compare bit-for-bit
        return json.dumps(d, sort_keys=True)


class SaturationMonitor:
    """Flags a run where the discriminator wins outright for ``window`` consecutive steps."""

    def __init__(self, window: int = 200, d_floor: float = 1e-4, g_ceiling: float = 0.9):
        self.window, self.d_floor, self.g_ceiling = window, d_floor, g_ceiling
        self.run = 0
        self.longest = 0

    def update(self, d_loss: float, g_adv: float) -> bool:
        if d_loss < self.d_floor and g_adv > self.g_ceiling:
            self.run += 1
        else:
            self.run = 0
        self.longest = max(self.longest, self.run)
        return self.tripped

    @property
    def tripped(self) -> bool:
        return self.longest >= self.window


def make_batch(clips, rng: np.random.Generator, batch: int, segment: int, mel_cfg: MelConfig):
    idx = rng.integers(len(clips), size=batch)
    pairs = [sample_segment(clips[i], rng, segment, mel_cfg) for i in idx]
    wave = torch.cat([p.wave for p in pairs])
    mel = torch.from_numpy(np.stack([p.mel.frames for p in pairs]).astype(np.float32))
    return wave, mel


def discriminator_step(disc, opt_d: AdamW, wave, fake, lr: float) -> float:
    """Update D on the least-squares objective; ``fake`` is detached."""
    opt_d.zero_grad()
    n = wave.shape[0]
    out = disc(torch.cat([wave, fake.detach()]))
    d_real = DiscOutput(out.score_map[:n], [])
    d_fake = DiscOutput(out.score_map[n:], [])
    loss = adv_loss_d(d_real, d_fake)
    loss.backward()
    opt_d.step(lr)
    return loss.item()


def generator_step(gen_opt: AdamW, disc, wave, fake, lr: float, mel_loss: MelLoss,
                   lambda_fm: float, lambda_mel: float):
    """Update G on adversarial + feature-matching + mel terms with a fresh D pass."""
    gen_opt.zero_grad()
    flags = [p.requires_grad for p in disc.parameters()]
    for p in disc.parameters():
        p.requires_grad_(False)
    try:
        d_fake = disc(fake)
        with torch.no_grad():
            d_real = disc(wave)
        g_adv = adv_loss_g(d_fake)
        g_fm = feature_matching(d_real.features, d_fake.features)
        g_mel = mel_loss(wave, fake)
        total = generator_total(g_adv, g_fm, g_mel, lambda_fm, lambda_mel)
        total.backward()
    finally:
        for p, flag in zip(disc.parameters(), flags):
            p.requires_grad_(flag)
    gen_opt.step(lr)
    return g_adv.item(), g_fm.item(), g_mel.item(), total.item()


def train_step(batch, gen, disc, opt_g: AdamW, opt_d: AdamW, lr: float, mel_loss: MelLoss,
               lambda_fm: float = 2.0, lambda_mel: float = 45.0) -> dict:
    wave, mel = batch
    fake = gen(mel)[..., :wave.shape[-1]]
    d_loss = discriminator_step(disc, opt_d, wave, fake, lr)
    g_adv, g_fm, g_mel, g_total = generator_step(opt_g, disc, wave, fake, lr, mel_loss, lambda_fm, lambda_mel)
    return dict(d_loss=d_loss, g_adv=g_adv, g_fm=g_fm, g_mel=g_mel, g_total=g_total)


class Trainer:
    def __init__(self, config: TrainConfig, clips=None):
        self.config = config.validate()
        self.gen = build_generator(config.gen, seed=config.seed)
        self.disc = build_waveunet(config.disc, seed=config.seed + 1)
        self.opt_g = AdamW(self.gen.parameters(), config.betas, config.weight_decay)
        self.opt_d = AdamW(self.disc.parameters(), config.betas, config.weight_decay)
        self.mel_loss = MelLoss(config.mel)
        self.rng = np.random.default_rng(config.seed)
        self.clips = clips if clips is not None else self._load_corpus()
        self.step = 0
        self.monitor = SaturationMonitor()

    def _load_corpus(self):
        cfg = self.config
        if cfg.corpus_dir:
            paths = sorted(Path(cfg.corpus_dir).glob("*.wav"))
            if not paths:
                raise ConfigError("corpus_dir", f"no .wav files in {cfg.corpus_dir}")
            return [load_wav(p, cfg.mel.sample_rate) for p in paths]
        return synth_corpus(cfg.n_clips, cfg.seed)

    @property
    def steps_per_epoch(self) -> int:
        if self.config.decay_interval:
            return self.config.decay_interval
        return math.ceil(len(self.clips) / self.config.batch)

    @property
    def epoch(self) -> int:
        return self.step // self.steps_per_epoch

    def lr(self) -> float:
        return lr_at(self.epoch, self.config.lr0, self.config.lr_decay)

    def train_step(self) -> MetricsRecord:
        cfg = self.config
        t0 = time.perf_counter()
        epoch, lr = self.epoch, self.lr()
        batch = make_batch(self.clips, self.rng, cfg.batch, cfg.segment, cfg.mel)
        losses = train_step(batch, self.gen, self.disc, self.opt_g, self.opt_d, lr,
                            self.mel_loss, cfg.lambda_fm, cfg.lambda_mel)
        self.step += 1
        if not all(math.isfinite(v) for v in losses.values()):
            raise FloatingPointError(f"non-finite loss at step {self.step}: {losses}")
        self.monitor.update(losses["d_loss"], losses["g_adv"])
        return MetricsRecord(self.step, epoch, lr, wall_time=time.perf_counter() - t0, **losses)

    # -- checkpointing ------------------------------------------------------

    def state(self):
        tensors = {}
        tensors.update(ckpt.module_tensors(self.gen, "generator/"))
        tensors.update(ckpt.module_tensors(self.disc, "discriminator/"))
        tensors.update({f"opt_g/{k}": v for k, v in self.opt_g.state_tensors().items()})
        tensors.update({f"opt_d/{k}": v for k, v in self.opt_d.state_tensors().items()})
        meta = {
            "kind": "train",
            "config": self.config.to_dict(),
            "step": self.step,
            "epoch": self.epoch,
            "opt_g_step": self.opt_g.step_count,
            "opt_d_step": self.opt_d.step_count,
            "rng": self.rng.bit_generator.state,
            "monitor": {"run": self.monitor.run, "longest": self.monitor.longest},
        }
        return tensors, meta

    def save_checkpoint(self, path) -> None:
        tensors, meta = self.state()
        ckpt.save(path, tensors, meta)

    @classmethod
    def from_checkpoint(cls, path, clips=None) -> "Trainer":
        tensors, meta = ckpt.load(path)
        trainer = cls(TrainConfig.from_dict(meta["config"]), clips)
        ckpt.load_into(trainer.gen, tensors, "generator/")
        ckpt.load_into(trainer.disc, tensors, "discriminator/")
        trainer.opt_g.load_state_tensors(_strip(tensors, "opt_g/"), meta["opt_g_step"])
        trainer.opt_d.load_state_tensors(_strip(tensors, "opt_d/"), meta["opt_d_step"])
        trainer.rng.bit_generator.state = meta["rng"]
        trainer.step = meta["step"]
        trainer.monitor.run = meta["monitor"]["run"]
        trainer.monitor.longest = meta["monitor"]["longest"]
        return trainer


def _strip(tensors, prefix):
    return {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}


def run(config: TrainConfig, out_dir, steps: Optional[int] = None, resume=None, progress_every: int = 100) -> dict:
    """Train, writing ``metrics.jsonl``, ``timing.jsonl``, checkpoints and ``summary.json``."""
    configure_determinism()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trainer = Trainer.from_checkpoint(resume) if resume else Trainer(config)
    config = trainer.config
    total = steps if steps is not None else config.steps
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    mode = "a" if resume else "w"
    records: List[MetricsRecord] = []
    diverged = None
    with open(out / "metrics.jsonl", mode) as mf, open(out / "timing.jsonl", mode) as tf:
        while trainer.step < total:
            try:
                rec = trainer.train_step()
            except FloatingPointError as exc:
                diverged = str(exc)
                log.error(diverged)
                break
            records.append(rec)
            mf.write(rec.to_json() + "\n")
            tf.write(json.dumps({"step": rec.step, "wall_time": rec.wall_time}) + "\n")
            if rec.step % config.checkpoint_every == 0 or rec.step == total:
                trainer.save_checkpoint(out / f"ckpt_{rec.step:06d}.wud")
            if progress_every and rec.step % progress_every == 0:
                log.info("step %d d=%.4f adv=%.4f fm=%.4f mel=%.4f", rec.step, rec.d_loss,
                         rec.g_adv, rec.g_fm, rec.g_mel)
    summary = summarize(records)
    summary.update(diverged=diverged, saturation_tripped=trainer.monitor.tripped,
                   longest_saturated_run=trainer.monitor.longest, steps=trainer.step)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    # wall time stays out of summary.json so that file is reproducible too
    summary["seconds"] = float(sum(r.wall_time for r in records))
    return summary


def summarize(records: List[MetricsRecord], window: int = 50) -> dict:
    if not records:
        return {}
    mel = np.array([r.g_mel for r in records])
    head = float(mel[:window].mean())
    tail = float(mel[-window:].mean())
    return {
        "g_mel_first_window": head,
        "g_mel_last_window": tail,
        "g_mel_ratio": tail / head,
        "final": json.loads(records[-1].to_json()),
    }
