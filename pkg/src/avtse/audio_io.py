"""File formats consumed and produced by the toolchain.

WAV           16-bit PCM mono, 16 kHz, little-endian.
.f32          headerless little-endian float32 sample dump (test vectors).
lip sidecar   binary lip-frame stream:
                  magic  4s   b"LIPF"
                  u8          format version (1)
                  u8          dtype: 0 = uint8 (0..255), 1 = float32 (0..1)
                  u16 LE      frame height (32)
                  u16 LE      frame width  (32)
                  u32 LE      frame count
              followed by count*height*width samples, frame-major, row-major
              within a frame.  Values decode to float32 in [0, 1].
vad labels    one ASCII '0'/'1' per 40 ms frame, newline-terminated.
"""

from __future__ import annotations

import struct
import wave
from pathlib import Path

import numpy as np

from .errors import DataError
from .frontend import SAMPLE_RATE, AudioBuffer

LIP_MAGIC = b"LIPF"
LIP_SIZE = 32


def read_wav(path) -> AudioBuffer:
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getnchannels() != 1:
                raise DataError(f"{path}: expected mono, got {wf.getnchannels()} channels")
            if wf.getsampwidth() != 2:
                raise DataError(f"{path}: expected 16-bit PCM, got width {wf.getsampwidth()}")
            if wf.getframerate() != SAMPLE_RATE:
                raise DataError(f"{path}: sample rate {wf.getframerate()} != {SAMPLE_RATE}")
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise DataError(f"{path}: not a readable WAV file ({exc})") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    return AudioBuffer(samples)


def write_wav(path, audio: AudioBuffer) -> None:
    clipped = np.clip(audio.samples, -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(SAMPLE_RATE)
        wf.writeframes(pcm.tobytes())


def read_f32(path) -> np.ndarray:
    return np.fromfile(str(path), dtype="<f4")


def write_f32(path, samples: np.ndarray) -> None:
    np.asarray(samples, dtype="<f4").tofile(str(path))


def read_lip_frames(path) -> np.ndarray:
    """Load a lip sidecar file as float32 (Tv, 32, 32) in [0, 1]."""
    blob = Path(path).read_bytes()
    if len(blob) < 14 or blob[:4] != LIP_MAGIC:
        raise DataError(f"{path}: not a lip-frame file")
    version, dtype_code, height, width, count = struct.unpack("<BBHHI", blob[4:14])
    if version != 1:
        raise DataError(f"{path}: unsupported lip format version {version}")
    if (height, width) != (LIP_SIZE, LIP_SIZE):
        raise DataError(f"{path}: expected 32x32 frames, got {height}x{width}")
    payload = blob[14:]
    n = count * height * width
    if dtype_code == 0:
        if len(payload) != n:
            raise DataError(f"{path}: payload holds {len(payload)} bytes, header "
                            f"promises {n}")
        frames = np.frombuffer(payload, dtype=np.uint8).astype(np.float32) / 255.0
    elif dtype_code == 1:
        if len(payload) != 4 * n:
            raise DataError(f"{path}: payload holds {len(payload)} bytes, header "
                            f"promises {4 * n}")
        frames = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    else:
        raise DataError(f"{path}: unknown lip dtype code {dtype_code}")
    frames = frames.reshape(count, height, width)
    if frames.size and (frames.min() < 0.0 or frames.max() > 1.0):
        raise DataError(f"{path}: pixel values outside [0, 1]")
    return frames


def write_lip_frames(path, frames: np.ndarray, dtype: str = "float32") -> None:
    frames = np.asarray(frames, dtype=np.float32)
    if frames.ndim != 3 or frames.shape[1:] != (LIP_SIZE, LIP_SIZE):
        raise DataError(f"lip frames must be (Tv, 32, 32), got {frames.shape}")
    code = {"uint8": 0, "float32": 1}[dtype]
    header = LIP_MAGIC + struct.pack("<BBHHI", 1, code, LIP_SIZE, LIP_SIZE,
                                     frames.shape[0])
    if code == 0:
        payload = np.round(np.clip(frames, 0, 1) * 255).astype(np.uint8).tobytes()
    else:
        payload = frames.astype("<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_vad_labels(path) -> np.ndarray:
    text = Path(path).read_text().strip()
    if text and set(text) - {"0", "1"}:
        raise DataError(f"{path}: VAD label file holds characters other than 0/1")
    return np.array([int(ch) for ch in text], dtype=np.int8)


def write_vad_labels(path, labels: np.ndarray) -> None:
    Path(path).write_text("".join("1" if v else "0" for v in labels) + "\n")
