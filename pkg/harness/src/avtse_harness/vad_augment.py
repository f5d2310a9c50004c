"""VAD corruption with semantics pinned by shared/vad_augment_golden.json.

Protocol (one rng stream, numpy default_rng(seed)): pass 1 scans labels
left to right and delays every 0->1 onset (a run starting at frame 0
counts) by rng.integers(0, delay_frames + 1) frames, clipped to the run;
pass 2 draws rng.random(len) and flips frames where the draw < flip_prob.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AugmentConfig:
    delay_frames: int = 5
    flip_prob: float = 0.05
    seed: int = 0


def corrupt_labels(labels: np.ndarray, config: AugmentConfig) -> np.ndarray:
    labels = np.asarray(labels).astype(np.int8)
    rng = np.random.default_rng(config.seed)
    out = labels.copy()
    prev = np.concatenate([[0], labels[:-1]])
    for start in np.flatnonzero((labels == 1) & (prev == 0)):
        delay = int(rng.integers(0, config.delay_frames + 1))
        if delay:
            end = start
            while end < len(out) and labels[end] == 1:
                end += 1
            out[start:min(start + delay, end)] = 0
    flips = rng.random(len(out)) < config.flip_prob
    out[flips] ^= 1
    return out
