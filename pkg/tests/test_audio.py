import wave

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from waveunetd.audio import (
    LOG_FLOOR, AudioClip, MelConfig, TorchLogMel, load_wav, log_mel, mel_filterbank, mel_project,
    n_frames, sample_segment, save_corpus, stft, synth_corpus, write_wav,
)
from waveunetd.errors import ConfigError, FormatError, RateError


def write_pcm(path, values, rate=22050, channels=1, width=2):
    with wave.open(str(path), "wb") as f:
        f.setnchannels(channels)
        f.setsampwidth(width)
        f.setframerate(rate)
        dtype = {1: "u1", 2: "<i2", 4: "<i4"}[width]
        f.writeframes(np.asarray(values, dtype=dtype).tobytes())


class TestLoadWav:
    def test_scaling(self, tmp_path):
        write_pcm(tmp_path / "a.wav", [16384, -32768, 0, 32767])
        clip = load_wav(tmp_path / "a.wav")
        assert clip.samples[0] == 0.5 and clip.samples[1] == -1.0 and clip.samples[2] == 0.0
        assert clip.sample_rate == 22050

    def test_one_second_length(self, tmp_path):
        write_pcm(tmp_path / "a.wav", np.zeros(22050))
        assert len(load_wav(tmp_path / "a.wav")) == 22050

    def test_stereo_downmix(self, tmp_path):
        write_pcm(tmp_path / "a.wav", [16384, 0, -16384, -16384], channels=2)
        np.testing.assert_array_equal(load_wav(tmp_path / "a.wav").samples, [0.25, -0.5])

    def test_wrong_rate(self, tmp_path):
        write_pcm(tmp_path / "a.wav", np.zeros(10), rate=16000)
        with pytest.raises(RateError):
            load_wav(tmp_path / "a.wav")

    def test_wrong_width(self, tmp_path):
        write_pcm(tmp_path / "a.wav", np.zeros(10), width=4)
        with pytest.raises(FormatError):
            load_wav(tmp_path / "a.wav")

    def test_not_a_wav(self, tmp_path):
        (tmp_path / "a.wav").write_bytes(b"definitely not riff data")
        with pytest.raises(FormatError):
            load_wav(tmp_path / "a.wav")

    def test_write_read_round_trip(self, tmp_path):
        x = np.round(np.linspace(-1, 0.99, 500) * 32768) / 32768
        write_wav(tmp_path / "a.wav", x)
        np.testing.assert_array_equal(load_wav(tmp_path / "a.wav").samples, x)


class TestStft:
    @pytest.mark.parametrize("length,frames", [(256, 2), (8192, 33), (22050, 87)])
    def test_frame_count(self, length, frames):
        assert n_frames(length) == frames
        assert stft(np.random.default_rng(0).normal(size=length)).shape == (513, frames)
        assert log_mel(np.zeros(length)).n_frames == frames

    def test_zero_input(self):
        assert np.count_nonzero(np.abs(stft(np.zeros(4096)))) == 0

    @pytest.mark.parametrize("k", [10, 64, 200])
    def test_bin_centered_sine(self, k):
        sr = 22050
        t = np.arange(8192) / sr
        mag = np.abs(stft(np.sin(2 * np.pi * k * sr / 1024 * t)))
        frame = mag[:, 16] ** 2
        # the Hann main lobe spreads a bin-centered tone over bins k-1..k+1
        assert frame[k - 1:k + 2].sum() / frame.sum() >= 0.99
        assert frame.argmax() == k

    def test_single_frame_matches_dft(self):
        x = np.random.default_rng(3).normal(size=4096)
        cfg = MelConfig()
        padded = np.pad(x, 512, mode="reflect")
        win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(1024) / 1024)
        seg = padded[5 * 256:5 * 256 + 1024] * win
        n = np.arange(1024)
        dft = np.array([np.sum(seg * np.exp(-2j * np.pi * k * n / 1024)) for k in range(513)])
        np.testing.assert_allclose(stft(x, cfg)[:, 5], dft, atol=1e-9)

    def test_matches_librosa(self):
        librosa = pytest.importorskip("librosa")
        x = np.random.default_rng(4).normal(size=5000)
        ref = librosa.stft(x, n_fft=1024, hop_length=256, win_length=1024, window="hann",
                           center=True, pad_mode="reflect")
        np.testing.assert_allclose(stft(x), ref, atol=1e-8)


class TestFilterbank:
    def test_shape_and_row_sums(self):
        fb = mel_filterbank()
        assert fb.shape == (80, 513)
        assert np.all(fb.sum(axis=1) > 0)
        assert np.all(fb >= 0)
        # nothing above fmax
        assert np.all(fb[:, np.fft.rfftfreq(1024, 1 / 22050) > 8000] == 0)

    def test_matches_librosa(self):
        librosa = pytest.importorskip("librosa")
        ref = librosa.filters.mel(sr=22050, n_fft=1024, n_mels=80, fmin=0, fmax=8000, htk=False, norm="slaney")
        np.testing.assert_allclose(mel_filterbank(), ref, rtol=1e-5, atol=1e-8)

    def test_deterministic_and_read_only(self):
        fb = mel_filterbank()
        assert fb is mel_filterbank(MelConfig())
        with pytest.raises(ValueError):
            fb[0, 0] = 1.0

    def test_serialize_reload_bit_exact(self, tmp_path):
        fb = mel_filterbank()
        np.save(tmp_path / "fb.npy", fb)
        assert np.array_equal(np.load(tmp_path / "fb.npy"), fb)
        assert np.load(tmp_path / "fb.npy").tobytes() == fb.tobytes()

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            MelConfig(fmax=20000).validate()
        with pytest.raises(ConfigError):
            MelConfig(win=2048).validate()


class TestMelProject:
    def test_zero_magnitudes_hit_floor(self):
        mel = mel_project(np.zeros((513, 7)))
        assert mel.frames.shape == (80, 7)
        assert np.all(mel.frames == np.log(LOG_FLOOR))

    def test_band_count(self):
        assert log_mel(np.random.default_rng(0).normal(size=2048)).frames.shape[0] == 80

    def test_torch_twin_matches_numpy(self):
        x = np.random.default_rng(5).normal(size=8192) * 0.3
        ref = log_mel(x).frames
        got = TorchLogMel().double()(torch.from_numpy(x).reshape(1, 1, -1))[0].numpy()
        np.testing.assert_allclose(got, ref, atol=1e-9)


class TestSegments:
    def test_exact_length_starts_at_zero(self):
        clip = AudioClip(np.random.default_rng(0).normal(size=8192))
        rng = np.random.default_rng(1)
        assert {sample_segment(clip, rng).start for _ in range(20)} == {0}

    def test_hop_aligned_starts(self):
        clip = AudioClip(np.random.default_rng(0).normal(size=8448))
        rng = np.random.default_rng(1)
        assert {sample_segment(clip, rng).start for _ in range(50)} == {0, 256}

    def test_short_clip_zero_padded(self):
        pair = sample_segment(AudioClip(np.ones(1000)), np.random.default_rng(0))
        assert pair.wave.shape == (1, 1, 8192)
        assert pair.wave[0, 0, 999] == 1 and torch.all(pair.wave[0, 0, 1000:] == 0)

    @settings(max_examples=10, deadline=None)
    @given(length=st.integers(8192, 30000), seed=st.integers(0, 1000))
    def test_mel_round_trip(self, length, seed):
        clip = AudioClip(np.random.default_rng(seed).uniform(-1, 1, size=length))
        pair = sample_segment(clip, np.random.default_rng(seed))
        assert pair.start % 256 == 0 and pair.start + 8192 <= length
        seg = clip.samples[pair.start:pair.start + 8192]
        np.testing.assert_array_equal(pair.wave.numpy().ravel(), seg.astype(np.float32))
        recomputed = mel_project(np.abs(stft(seg))).frames
        assert np.array_equal(pair.mel.frames, recomputed)
        assert pair.mel.n_frames == 33


class TestCorpus:
    def test_deterministic(self):
        a, b = synth_corpus(10, 7), synth_corpus(10, 7)
        assert len(a) == 10
        assert all(np.array_equal(x.samples, y.samples) for x, y in zip(a, b))

    def test_seed_changes_content(self):
        assert not np.array_equal(synth_corpus(1, 0)[0].samples, synth_corpus(1, 1)[0].samples)

    def test_peak_and_duration(self):
        for clip in synth_corpus(10, 0):
            assert np.max(np.abs(clip.samples)) <= 0.95 + 1e-12
            assert 22050 <= len(clip) <= 44100
            assert np.all(np.isfinite(clip.samples))

    def test_rejects_empty(self):
        with pytest.raises(ConfigError):
            synth_corpus(0, 0)

    def test_save_and_reload(self, tmp_path):
        clips = synth_corpus(2, 3)
        paths = save_corpus(clips, tmp_path)
        assert [p.name for p in paths] == ["clip_0000.wav", "clip_0001.wav"]
        back = load_wav(paths[0])
        assert np.max(np.abs(back.samples - clips[0].samples)) <= 1 / 32768
