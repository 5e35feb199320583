"""Wave-U-Net discriminator for GAN vocoders, with training and benchmarking tools."""

from .audio import MelConfig, log_mel, sample_segment, synth_corpus
from .discriminator import DiscOutput, WaveUNetConfig, WaveUNetDiscriminator, build_waveunet, param_count
from .ensemble import EnsembleConfig, build_ensemble
from .generator import GeneratorConfig, build_generator, generate
from .losses import adv_loss_d, adv_loss_g, feature_matching, mel_loss
from .optim import AdamW, adamw_step, lr_at

__version__ = "0.1.0"
