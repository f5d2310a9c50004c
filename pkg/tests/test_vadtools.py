import numpy as np
import pytest

from avtse.errors import DataError
from avtse.frontend import AudioBuffer
from avtse.vadtools import (VadAugmentConfig, augment_vad, energy_vad,
                            vad_metrics)


def golden_clip():
    """Deterministic pseudo-speech: known talk spans inside 5 s of quiet noise.

    Spans (in 40 ms frames): [10, 35), [50, 80), [95, 120).  The background
    sits 40 dB under the bursts, so the frame annotation is unambiguous.
    """
    rng = np.random.default_rng(2024)
    n = 5 * 16000
    x = rng.standard_normal(n).astype(np.float32) * 0.001
    spans = [(10, 35), (50, 80), (95, 120)]
    for a, b in spans:
        seg = slice(a * 640, b * 640)
        burst = rng.standard_normal(b * 640 - a * 640).astype(np.float32)
        env = 0.5 + 0.5 * np.sin(np.linspace(0, 12 * np.pi, burst.size))
        x[seg] += (0.3 * env * burst).astype(np.float32)
    labels = np.zeros(125, dtype=np.int8)
    for a, b in spans:
        labels[a:b] = 1
    return AudioBuffer(x), labels


class TestEnergyVad:
    def test_digital_silence(self):
        out = energy_vad(AudioBuffer(np.zeros(16000, dtype=np.float32)))
        np.testing.assert_array_equal(out, 0)

    def test_tone_with_hangover(self):
        x = np.zeros(3 * 16000, dtype=np.float32)
        t = np.arange(16000)
        x[16000:32000] = np.sin(2 * np.pi * 440 * t / 16000).astype(np.float32)
        out = energy_vad(AudioBuffer(x))
        active = np.flatnonzero(out)
        assert active[0] == 25                 # tone starts at frame 25
        assert active[-1] in (49 + 1, 49 + 2)  # offset extended by hangover
        assert np.array_equal(active, np.arange(active[0], active[-1] + 1))

    def test_golden_clip_speech_fraction(self):
        clip, labels = golden_clip()
        got = energy_vad(clip)
        frac_got = got.mean()
        frac_ref = labels.mean()
        assert abs(frac_got - frac_ref) / frac_ref < 0.10

    def test_threshold_monotone(self):
        clip, _ = golden_clip()
        prev = energy_vad(clip, threshold_ratio=2.0)
        for ratio in (3.0, 5.0, 10.0):
            cur = energy_vad(clip, threshold_ratio=ratio)
            assert np.all(cur <= prev)  # raising theta never adds speech
            prev = cur

    def test_deterministic(self):
        clip, _ = golden_clip()
        np.testing.assert_array_equal(energy_vad(clip), energy_vad(clip))


class TestAugmentVad:
    def test_identity_config(self):
        labels = np.array([0, 1, 1, 0, 1], dtype=np.int8)
        out = augment_vad(labels, VadAugmentConfig(delay_frames=0, flip_prob=0.0,
                                                   seed=1))
        np.testing.assert_array_equal(out, labels)

    def test_full_flip_is_complement(self):
        labels = np.array([0, 1, 1, 0, 0, 1], dtype=np.int8)
        out = augment_vad(labels, VadAugmentConfig(delay_frames=0, flip_prob=1.0,
                                                   seed=1))
        np.testing.assert_array_equal(out, 1 - labels)

    def test_empirical_flip_rate(self):
        labels = np.zeros(100_000, dtype=np.int8)
        out = augment_vad(labels, VadAugmentConfig(delay_frames=0,
                                                   flip_prob=0.05, seed=7))
        rate = out.mean()  # every 1 is a flip of a 0
        assert abs(rate - 0.05) < 0.005

    def test_delays_only_move_onsets_later(self):
        rng = np.random.default_rng(3)
        labels = (rng.random(500) < 0.4).astype(np.int8)
        out = augment_vad(labels, VadAugmentConfig(delay_frames=4,
                                                   flip_prob=0.0, seed=9))
        # delays can only erase 1s (never create), and never delete an offset
        assert np.all(out <= labels)
        offsets = np.flatnonzero(np.diff(labels.astype(int)) == -1)
        for off in offsets:
            assert out[off + 1] == 0  # frame after an offset stays non-speech

    def test_onset_delay_bounded(self):
        labels = np.zeros(40, dtype=np.int8)
        labels[10:30] = 1
        seen = set()
        for seed in range(200):
            out = augment_vad(labels, VadAugmentConfig(delay_frames=5,
                                                       flip_prob=0.0, seed=seed))
            onset = np.flatnonzero(out)[0]
            seen.add(int(onset - 10))
            assert 0 <= onset - 10 <= 5
            np.testing.assert_array_equal(out[30:], 0)
        assert seen == set(range(6))  # inclusive uniform draw covers 0..5

    def test_deterministic_in_seed(self):
        labels = (np.arange(64) % 3 == 0).astype(np.int8)
        cfg = VadAugmentConfig(delay_frames=3, flip_prob=0.2, seed=42)
        np.testing.assert_array_equal(augment_vad(labels, cfg),
                                      augment_vad(labels, cfg))

    def test_config_validation(self):
        with pytest.raises(DataError):
            VadAugmentConfig(delay_frames=-1)
        with pytest.raises(DataError):
            VadAugmentConfig(flip_prob=1.5)


class TestVadMetrics:
    def test_perfect_prediction(self):
        truth = np.array([0, 1, 1, 0], dtype=np.int8)
        scores = vad_metrics(truth, truth)
        assert scores.accuracy == scores.precision == scores.recall == 1.0
        assert not scores.degenerate

    def test_all_speech_prediction(self):
        truth = np.array([1, 1, 0, 0], dtype=np.int8)
        pred = np.ones(4, dtype=np.int8)
        scores = vad_metrics(pred, truth)
        assert scores.recall == 1.0
        assert scores.precision == 0.5
        assert scores.accuracy == 0.5

    def test_degenerate_all_nonspeech(self):
        zeros = np.zeros(6, dtype=np.int8)
        scores = vad_metrics(zeros, zeros)
        assert scores.precision == 1.0 and scores.recall == 1.0
        assert scores.degenerate

    def test_accuracy_is_mean_agreement(self):
        rng = np.random.default_rng(0)
        pred = (rng.random(1000) < 0.5).astype(np.int8)
        truth = (rng.random(1000) < 0.5).astype(np.int8)
        assert vad_metrics(pred, truth).accuracy == np.mean(pred == truth)

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            vad_metrics(np.zeros(3, dtype=np.int8), np.zeros(4, dtype=np.int8))
