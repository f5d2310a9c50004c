"""Time-frequency conversion and complex-ratio-mask application.

Fixed framing: 16 kHz audio, 320-sample periodic Hann window, 160-sample
hop, real FFT of size 320 keeping 161 bins.  Analysis and synthesis are
both windowed; the inverse divides by the (160-periodic) sum of squared
windows, which makes interior reconstruction exact and lets the streaming
overlap-add emit samples that are bit-identical to the offline inverse.

No lookahead: output samples in hop h only require spectral frames whose
analysis windows end at or before sample 160*(h+1), so a streaming caller
runs exactly one hop (10 ms) behind its input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError

SAMPLE_RATE = 16000
FRAME_LEN = 320
HOP = 160
N_BINS = FRAME_LEN // 2 + 1


def _hann_periodic(n: int) -> np.ndarray:
    return (0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)).astype(np.float32)


WINDOW = _hann_periodic(FRAME_LEN)
# sum of squared windows overlapping each sample position, periodic in HOP
_OLA_NORM = (WINDOW[:HOP] ** 2 + WINDOW[HOP:] ** 2).astype(np.float32)


@dataclass
class AudioBuffer:
    """Mono float32 sample sequence; the only sample rate here is 16 kHz."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise ShapeError(f"audio must be mono 1-D, got shape {self.samples.shape}")
        if self.sample_rate != SAMPLE_RATE:
            raise DataError(f"sample rate {self.sample_rate} != {SAMPLE_RATE}")
        if not np.isfinite(self.samples).all():
            raise DataError("audio contains non-finite samples")

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class ComplexSpectrogram:
    """T x F real/imaginary planes of a one-sided spectrum (F = 161)."""

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        self.re = np.asarray(self.re, dtype=np.float32)
        self.im = np.asarray(self.im, dtype=np.float32)
        if self.re.shape != self.im.shape or self.re.ndim != 2:
            raise ShapeError(
                f"spectrogram planes must be matching 2-D, got {self.re.shape} / {self.im.shape}")

    @property
    def frames(self) -> int:
        return self.re.shape[0]

    @property
    def bins(self) -> int:
        return self.re.shape[1]

    def stacked(self) -> np.ndarray:
        """(2, T, F) float32 with real plane first."""
        return np.stack([self.re, self.im])


@dataclass
class CrmMask:
    """Complex ratio masks for two sources as a (4, T, F) tensor.

    Channel pairs: (0, 1) = target re/im, (2, 3) = interferer re/im.
    Entries live in [-1, 1] (tanh output range).
    """

    planes: np.ndarray
    N_SOURCES = 2

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=np.float32)
        if self.planes.ndim != 3 or self.planes.shape[0] != 4:
            raise ShapeError(f"CRM must be (4, T, F), got {self.planes.shape}")

    def re(self, source: int) -> np.ndarray:
        return self.planes[2 * source]

    def im(self, source: int) -> np.ndarray:
        return self.planes[2 * source + 1]


def num_frames(n_samples: int) -> int:
    return (n_samples - FRAME_LEN) // HOP + 1


def stft(audio: AudioBuffer) -> ComplexSpectrogram:
    """Windowed one-sided STFT; frame t covers samples [160t, 160t + 320)."""
    x = audio.samples
    if len(x) < FRAME_LEN:
        raise DataError(f"audio of {len(x)} samples is shorter than one frame")
    t = num_frames(len(x))
    frames = np.lib.stride_tricks.sliding_window_view(x, FRAME_LEN)[::HOP][:t]
    spec = np.fft.rfft(frames * WINDOW, axis=-1)
    return ComplexSpectrogram(spec.real.astype(np.float32),
                              spec.imag.astype(np.float32))


def _synth_frame(re_row: np.ndarray, im_row: np.ndarray) -> np.ndarray:
    z = re_row.astype(np.complex64)
    z.imag = im_row
    return (np.fft.irfft(z, n=FRAME_LEN) * WINDOW).astype(np.float32)


def istft(spec: ComplexSpectrogram) -> AudioBuffer:
    """Overlap-add inverse; output length (T-1)*160 + 320.

    The first and last 160 samples have a single contributing frame and are
    normalized as interior samples anyway, so only the interior (one frame
    in from each end) reconstructs exactly.
    """
    if spec.bins != N_BINS:
        raise ShapeError(f"expected {N_BINS} bins, got {spec.bins}")
    z = spec.re.astype(np.complex64)
    z.imag = spec.im
    frames = (np.fft.irfft(z, n=FRAME_LEN, axis=-1) * WINDOW).astype(np.float32)
    t = spec.frames
    out = np.zeros((t - 1) * HOP + FRAME_LEN, dtype=np.float32)
    for i in range(t):
        out[i * HOP:i * HOP + FRAME_LEN] += frames[i]
    norm = np.tile(_OLA_NORM, len(out) // HOP + 1)[:len(out)]
    return AudioBuffer(out / norm)


class StreamingIstft:
    """Frame-at-a-time inverse; outputs are sample-identical to :func:`istft`.

    ``push`` consumes one spectral frame and returns the 160 samples that
    become final once that frame is known (positions [160t, 160t + 160) for
    the t-th pushed frame).
    """

    def __init__(self):
        self.tail = np.zeros(HOP, dtype=np.float32)

    def reset(self) -> None:
        self.tail[:] = 0.0

    def push(self, re_row: np.ndarray, im_row: np.ndarray) -> np.ndarray:
        if re_row.shape != (N_BINS,) or im_row.shape != (N_BINS,):
            raise ShapeError(f"expected frame of {N_BINS} bins")
        frame = _synth_frame(re_row, im_row)
        out = (self.tail + frame[:HOP]) / _OLA_NORM
        self.tail[:] = frame[HOP:]
        return out


def apply_crm(spec: ComplexSpectrogram, mask: CrmMask, source: int = 0) -> ComplexSpectrogram:
    """Complex multiplication of one source's mask onto the spectrogram."""
    if not 0 <= source < CrmMask.N_SOURCES:
        raise ShapeError(f"source index {source} out of range")
    m_re, m_im = mask.re(source), mask.im(source)
    if m_re.shape != spec.re.shape:
        raise ShapeError(f"mask {m_re.shape} does not match spectrogram "
                         f"{spec.re.shape}")
    return ComplexSpectrogram(spec.re * m_re - spec.im * m_im,
                              spec.re * m_im + spec.im * m_re)
