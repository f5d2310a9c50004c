"""Ground-truth VAD generation and the corruption model used for training.

The detector is a self-contained energy gate at video rate (one label per
40 ms / 640 samples): a frame is speech when its RMS exceeds 3x the 10th
percentile of frame RMS values, with a 2-frame hangover after offsets.
The corruption model delays every speech onset by a per-onset uniform
draw, then flips labels independently -- the same two error modes a real
visual detector exhibits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .frontend import AudioBuffer

FRAME_SAMPLES = 640
DEFAULT_THRESHOLD_RATIO = 3.0
HANGOVER_FRAMES = 2


def energy_vad(audio: AudioBuffer,
               threshold_ratio: float = DEFAULT_THRESHOLD_RATIO) -> np.ndarray:
    """Label every 40 ms frame of 16 kHz audio as speech (1) or not (0).

    Raising ``threshold_ratio`` can only remove speech frames, never add
    them (the hangover is a monotone function of the raw decisions).
    """
    x = audio.samples
    n_frames = max(1, int(np.ceil(len(x) / FRAME_SAMPLES)))
    padded = np.zeros(n_frames * FRAME_SAMPLES, dtype=np.float32)
    padded[:len(x)] = x
    frames = padded.reshape(n_frames, FRAME_SAMPLES)
    rms = np.sqrt(np.mean(frames.astype(np.float64) ** 2, axis=1))
    floor = np.percentile(rms, 10)
    active = rms > threshold_ratio * floor
    labels = active.copy()
    for k in range(1, HANGOVER_FRAMES + 1):
        labels[k:] |= active[:-k]
    return labels.astype(np.int8)


@dataclass
class VadAugmentConfig:
    """Onset-delay range (video frames), per-frame flip probability, seed."""

    delay_frames: int = 5
    flip_prob: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.delay_frames < 0:
            raise DataError(f"delay_frames must be >= 0, got {self.delay_frames}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise DataError(f"flip_prob {self.flip_prob} outside [0, 1]")


def augment_vad(labels: np.ndarray, config: VadAugmentConfig) -> np.ndarray:
    """Corrupt clean labels: delay each 0->1 onset, then flip frames i.i.d.

    Onsets are scanned left to right with one uniform integer draw in
    [0, delay_frames] each (a run starting at frame 0 counts as an onset);
    flips then use one uniform draw per frame.  Deterministic in the seed.
    """
    labels = np.asarray(labels).astype(np.int8)
    if labels.ndim != 1:
        raise DataError(f"labels must be 1-D, got shape {labels.shape}")
    if np.any((labels != 0) & (labels != 1)):
        raise DataError("labels must be binary")
    rng = np.random.default_rng(config.seed)
    out = labels.copy()
    prev = np.concatenate([[0], labels[:-1]])
    onsets = np.flatnonzero((labels == 1) & (prev == 0))
    for start in onsets:
        delay = int(rng.integers(0, config.delay_frames + 1))
        if delay:
            end = start
            while end < len(out) and labels[end] == 1:
                end += 1
            out[start:min(start + delay, end)] = 0
    flips = rng.random(len(out)) < config.flip_prob
    out[flips] ^= 1
    return out


@dataclass
class VadScores:
    accuracy: float
    precision: float
    recall: float
    degenerate: bool = False  # a ratio had an empty denominator, reported as 1.0


def vad_metrics(pred: np.ndarray, truth: np.ndarray) -> VadScores:
    """Binary classification scores with speech (1) as the positive class."""
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise DataError(f"prediction/truth shapes differ: {pred.shape} vs "
                        f"{truth.shape}")
    tp = int(np.sum(pred & truth))
    accuracy = float(np.mean(pred == truth))
    degenerate = False
    if pred.sum() == 0:
        precision, degenerate = 1.0, True
    else:
        precision = tp / int(pred.sum())
    if truth.sum() == 0:
        recall, degenerate = 1.0, True
    else:
        recall = tp / int(truth.sum())
    return VadScores(accuracy=accuracy, precision=precision, recall=recall,
                     degenerate=degenerate)
