"""Scene-directory dataset: manifest.jsonl + WAV stems + VAD label files.

Reads the simulator's output formats directly (16-bit PCM WAV, JSON-lines
manifest, one-character-per-40 ms label files) and converts everything to
the spectral crops the trainer consumes.  VAD cues are corrupted once at
load time with the shared onset-delay / label-flip semantics so an overfit
run sees a fixed, reproducible input set.
"""

from __future__ import annotations

import json
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .vad_augment import AugmentConfig, corrupt_labels

FRAME_LEN = 320
HOP = 160
WINDOW = (0.5 - 0.5 * np.cos(2 * np.pi * np.arange(FRAME_LEN) / FRAME_LEN)) \
    .astype(np.float32)
OLA_NORM = (WINDOW[:HOP] ** 2 + WINDOW[HOP:] ** 2).astype(np.float32)


def read_wav(path) -> np.ndarray:
    with wave.open(str(path), "rb") as wf:
        if (wf.getnchannels(), wf.getsampwidth(), wf.getframerate()) \
                != (1, 2, 16000):
            raise ValueError(f"{path}: expected 16 kHz mono 16-bit WAV")
        raw = wf.readframes(wf.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0


def stft(x: np.ndarray) -> np.ndarray:
    t = (len(x) - FRAME_LEN) // HOP + 1
    frames = np.lib.stride_tricks.sliding_window_view(x, FRAME_LEN)[::HOP][:t]
    z = np.fft.rfft(frames * WINDOW, axis=-1)
    return np.stack([z.real, z.imag]).astype(np.float32)  # (2, T, 161)


def torch_istft(re: torch.Tensor, im: torch.Tensor) -> torch.Tensor:
    """Differentiable overlap-add inverse of the 320/160 Hann analysis.

    re/im: (B, T, F) -> (B, (T-1)*160 + 320) waveforms.
    """
    b, t, _ = re.shape
    z = torch.complex(re, im)
    frames = torch.fft.irfft(z, n=FRAME_LEN, dim=-1) \
        * torch.from_numpy(WINDOW).to(re.dtype)
    n_out = (t - 1) * HOP + FRAME_LEN
    out = torch.nn.functional.fold(
        frames.transpose(1, 2), output_size=(n_out, 1),
        kernel_size=(FRAME_LEN, 1), stride=(HOP, 1)).squeeze(-1).squeeze(1)
    norm = torch.from_numpy(np.tile(OLA_NORM, n_out // HOP + 1)[:n_out])
    return out / norm.to(out.dtype)


@dataclass
class Scene:
    mix: np.ndarray        # (2, T, F)
    target: np.ndarray     # (2, T, F)
    interferer: np.ndarray
    vad: np.ndarray        # per-video-frame, already corrupted


class SceneDataset:
    """Fixed-crop scene tensors, batchable as-is (equal T everywhere)."""

    def __init__(self, scene_dir, crop_frames: int = 96,
                 augment: AugmentConfig | None = None):
        scene_dir = Path(scene_dir)
        manifest = scene_dir / "manifest.jsonl"
        if not manifest.exists():
            raise FileNotFoundError(f"{manifest} missing; run `avtse simulate`")
        augment = augment or AugmentConfig()
        self.crop = crop_frames
        self.scenes: list[Scene] = []
        for i, line in enumerate(manifest.read_text().splitlines()):
            rec = json.loads(line)
            paths = rec["paths"]
            mix = stft(read_wav(scene_dir / paths["mixture"]))
            tgt = stft(read_wav(scene_dir / paths["target"]))
            itf = stft(read_wav(scene_dir / paths["interferer"]))
            labels = np.array(
                [int(ch) for ch in
                 (scene_dir / paths["vad"]).read_text().strip()], dtype=np.int8)
            t = min(mix.shape[1], tgt.shape[1], itf.shape[1], crop_frames)
            t -= t % 4
            if t < 8:
                raise ValueError(f"{rec['id']}: too short after cropping")
            cfg = AugmentConfig(delay_frames=augment.delay_frames,
                                flip_prob=augment.flip_prob,
                                seed=augment.seed + 7919 * i)
            vad = corrupt_labels(labels, cfg)[:t // 4].astype(np.float32)
            if len(vad) < t // 4:
                vad = np.pad(vad, (0, t // 4 - len(vad)))
            self.scenes.append(Scene(mix=mix[:, :t], target=tgt[:, :t],
                                     interferer=itf[:, :t], vad=vad))
        if not self.scenes:
            raise ValueError(f"{scene_dir}: empty manifest")
        t_min = min(s.mix.shape[1] for s in self.scenes)
        for s in self.scenes:
            s.mix = s.mix[:, :t_min]
            s.target = s.target[:, :t_min]
            s.interferer = s.interferer[:, :t_min]
            s.vad = s.vad[:t_min // 4]

    def __len__(self):
        return len(self.scenes)

    def batches(self, batch_size: int, seed: int):
        """Deterministic shuffled mini-batches of stacked tensors."""
        order = np.random.default_rng(seed).permutation(len(self.scenes))
        for start in range(0, len(order), batch_size):
            chunk = [self.scenes[j] for j in order[start:start + batch_size]]
            yield (
                torch.from_numpy(np.stack([s.mix for s in chunk])),
                torch.from_numpy(np.stack([s.target for s in chunk])),
                torch.from_numpy(np.stack([s.interferer for s in chunk])),
                torch.from_numpy(np.stack([np.repeat(s.vad, 4) for s in chunk])),
            )
