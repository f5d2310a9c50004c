"""Scene synthesis: image-method room impulse responses and SIR/SNR mixing.

Rooms are shoe-boxes with uniform wall absorption derived from the target
reverberation time via Sabine's formula.  Image sources are enumerated on
the mirrored lattice, each placed with an 8-tap Hann-windowed-sinc
fractional delay and weighted by reflection_count powers of the wall
coefficient over 4*pi*distance.  Mixtures place a target and an
interferer (convolved with their own RIRs from the same room) so that a
prescribed fraction of the target's span is overlapped, always leaving a
leading solo segment, then scale interferer and noise to hit the requested
SIR (over the overlap) and SNR (over the whole file).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import DataError
from .frontend import SAMPLE_RATE, AudioBuffer

SPEED_OF_SOUND = 343.0
WALL_CLEARANCE = 0.1
SINC_TAPS = 8
VIDEO_FRAME_SAMPLES = 640  # 40 ms VAD frame at 16 kHz


@dataclass
class RoomSpec:
    length: float                 # x extent, 3..8 m
    width: float                  # y extent, 3..8 m
    t60: float                    # reverberation time, 0.1..0.6 s
    mic: tuple[float, float, float]
    source_target: tuple[float, float, float]
    source_interferer: tuple[float, float, float]
    height: float = 3.0
    max_order: int = 25

    def __post_init__(self):
        if self.t60 <= 0:
            raise DataError(f"t60 must be positive, got {self.t60}")
        for name, pos in (("mic", self.mic), ("source_target", self.source_target),
                          ("source_interferer", self.source_interferer)):
            for coord, extent in zip(pos, (self.length, self.width, self.height)):
                if not WALL_CLEARANCE <= coord <= extent - WALL_CLEARANCE:
                    raise DataError(f"{name} at {pos} violates the "
                                    f"{WALL_CLEARANCE} m wall clearance")

    @property
    def dims(self) -> np.ndarray:
        return np.array([self.length, self.width, self.height])


def sabine_beta(room: RoomSpec) -> float:
    """Uniform wall reflection coefficient matching the room's T60."""
    lx, ly, lz = room.dims
    volume = lx * ly * lz
    surface = 2 * (lx * ly + lx * lz + ly * lz)
    alpha = 0.161 * volume / (room.t60 * surface)
    if alpha >= 1.0:
        raise DataError(f"t60={room.t60} s unreachable in a "
                        f"{lx:.1f}x{ly:.1f}x{lz:.1f} m room "
                        f"(Sabine absorption {alpha:.2f} >= 1)")
    return float(np.sqrt(1.0 - alpha))


def min_t60(length: float, width: float, height: float = 3.0) -> float:
    """Smallest Sabine-feasible T60 for the box (absorption == 1)."""
    volume = length * width * height
    surface = 2 * (length * width + length * height + width * height)
    return 0.161 * volume / surface


def _fractional_impulses(ir: np.ndarray, delays: np.ndarray,
                         amps: np.ndarray) -> None:
    """Scatter windowed-sinc pulses at fractional sample positions (in place)."""
    n0 = np.floor(delays).astype(np.int64)
    offsets = np.arange(-(SINC_TAPS // 2 - 1), SINC_TAPS // 2 + 1)  # -3..4
    idx = n0[:, None] + offsets[None, :]
    u = idx - delays[:, None]
    taps = np.sinc(u) * (0.5 + 0.5 * np.cos(np.pi * u / (SINC_TAPS // 2)))
    valid = (idx >= 0) & (idx < len(ir))
    np.add.at(ir, idx[valid], (amps[:, None] * taps)[valid])


def simulate_rir(room: RoomSpec, source: tuple[float, float, float],
                 beta: float | None = None) -> np.ndarray:
    """Impulse response from ``source`` to the room microphone.

    ``beta`` overrides the Sabine-derived wall coefficient; beta=0 gives the
    anechoic response (direct path only).  Image enumeration stops at the
    per-axis lattice bound ``max_order`` or once a shell's strongest image
    falls below 1e-4 of the direct-path amplitude, whichever comes first.
    """
    src = np.asarray(source, dtype=np.float64)
    mic = np.asarray(room.mic, dtype=np.float64)
    if np.allclose(src, mic):
        raise DataError("source and microphone positions coincide")
    if beta is None:
        beta = sabine_beta(room)
    dims = room.dims
    fs = SAMPLE_RATE

    d_direct = float(np.linalg.norm(src - mic))
    duration = 1.45 * room.t60 + d_direct / SPEED_OF_SOUND + 0.01
    ir = np.zeros(int(np.ceil(duration * fs)) + SINC_TAPS, dtype=np.float64)

    max_dist = duration * SPEED_OF_SOUND
    counts = np.minimum(np.ceil(max_dist / (2 * dims)).astype(int) + 1,
                        room.max_order)
    grids = [np.arange(-n, n + 1) for n in counts]
    nx, ny, nz = np.meshgrid(*grids, indexing="ij")
    lattice = np.stack([nx.ravel(), ny.ravel(), nz.ravel()], axis=1)

    direct_amp = 1.0 / (4 * np.pi * d_direct)
    cutoff = 1e-4 * direct_amp
    for q in np.ndindex(2, 2, 2):
        qv = np.array(q)
        pos = (1 - 2 * qv) * src + 2 * lattice * dims
        dist = np.linalg.norm(pos - mic, axis=1)
        refl = (np.abs(lattice - qv) + np.abs(lattice)).sum(axis=1)
        amps = beta ** refl / (4 * np.pi * np.maximum(dist, 1e-3))
        keep = (amps >= cutoff) & (dist / SPEED_OF_SOUND < duration)
        if beta == 0.0:
            keep &= refl == 0
        _fractional_impulses(ir, dist[keep] / SPEED_OF_SOUND * fs, amps[keep])
    return ir.astype(np.float32)


@dataclass
class MixtureSpec:
    sir_db: float                # -5..5
    snr_db: float                # 0..15
    overlap_ratio: float         # 0.2..0.8, fraction of the target span
    lead: str                    # which source owns the opening solo segment
    seed: int

    def __post_init__(self):
        if self.lead not in ("target", "interferer"):
            raise DataError(f"lead must be target|interferer, got {self.lead!r}")
        if not 0.0 < self.overlap_ratio < 1.0:
            raise DataError(f"overlap_ratio {self.overlap_ratio} outside (0, 1)")


@dataclass
class MixtureSample:
    mixture: AudioBuffer
    target_reverberant: AudioBuffer
    interferer_reverberant: AudioBuffer
    noise: AudioBuffer
    target_vad: np.ndarray       # one {0,1} per 40 ms frame
    achieved_sir_db: float
    achieved_snr_db: float
    overlap_region: tuple[int, int] = field(default=(0, 0))


def _rms_db(x: np.ndarray, y: np.ndarray) -> float:
    return 10.0 * np.log10(np.sum(x.astype(np.float64) ** 2)
                           / np.sum(y.astype(np.float64) ** 2))


def make_mixture(target: AudioBuffer, interferer: AudioBuffer,
                 noise: AudioBuffer, room: RoomSpec,
                 spec: MixtureSpec) -> MixtureSample:
    """Reverberate, lay out, and scale one scene.

    The overlap ratio is defined against the target's dry active span; the
    layout always starts with a solo segment of ``spec.lead``.  Stems sum
    to the mixture exactly.
    """
    for name, clip in (("target", target), ("interferer", interferer)):
        if len(clip) < SAMPLE_RATE:
            raise DataError(f"{name} clip of {len(clip)} samples is shorter "
                            f"than 1 s")
    lt, li = len(target), len(interferer)
    overlap = int(round(spec.overlap_ratio * lt))
    if spec.lead == "target":
        onset_t, onset_i = 0, lt - overlap
        if li < overlap:
            raise DataError(f"interferer of {li} samples cannot cover a "
                            f"{overlap}-sample overlap")
    else:
        onset_i = 0
        onset_t = li - overlap
        if onset_t < 0 or lt < overlap:
            raise DataError(f"clips too short for overlap_ratio="
                            f"{spec.overlap_ratio} with interferer lead")
    ov_start, ov_end = max(onset_t, onset_i), min(onset_t + lt, onset_i + li)

    rir_t = simulate_rir(room, room.source_target)
    rir_i = simulate_rir(room, room.source_interferer)
    rev_t = fftconvolve(target.samples.astype(np.float64), rir_t)
    rev_i = fftconvolve(interferer.samples.astype(np.float64), rir_i)

    total = max(onset_t + len(rev_t), onset_i + len(rev_i))
    t_sig = np.zeros(total)
    i_sig = np.zeros(total)
    t_sig[onset_t:onset_t + len(rev_t)] = rev_t
    i_sig[onset_i:onset_i + len(rev_i)] = rev_i

    # interferer gain for the requested SIR over the overlapped region
    e_t = np.sum(t_sig[ov_start:ov_end] ** 2)
    e_i = np.sum(i_sig[ov_start:ov_end] ** 2)
    if e_i <= 0 or e_t <= 0:
        raise DataError("degenerate overlap region (a source is silent there)")
    gain_i = np.sqrt(e_t / (e_i * 10.0 ** (spec.sir_db / 10.0)))
    i_sig *= gain_i

    rng = np.random.default_rng(spec.seed)
    n = noise.samples.astype(np.float64)
    if len(n) == 0 or not np.any(n):
        raise DataError("noise clip is silent")
    if len(n) < total:
        reps = int(np.ceil(total / len(n)))
        n = np.tile(n, reps)
    start = int(rng.integers(0, len(n) - total + 1)) if len(n) > total else 0
    n = n[start:start + total].copy()
    gain_n = np.sqrt(np.sum(t_sig ** 2)
                     / (np.sum(n ** 2) * 10.0 ** (spec.snr_db / 10.0)))
    n *= gain_n

    t32 = t_sig.astype(np.float32)
    i32 = i_sig.astype(np.float32)
    n32 = n.astype(np.float32)
    mixture = t32 + i32 + n32

    dry = np.zeros(total, dtype=np.float32)
    dry[onset_t:onset_t + lt] = target.samples
    from .vadtools import energy_vad
    vad = energy_vad(AudioBuffer(dry))

    return MixtureSample(
        mixture=AudioBuffer(mixture),
        target_reverberant=AudioBuffer(t32),
        interferer_reverberant=AudioBuffer(i32),
        noise=AudioBuffer(n32),
        target_vad=vad,
        achieved_sir_db=_rms_db(t32[ov_start:ov_end], i32[ov_start:ov_end]),
        achieved_snr_db=_rms_db(t32, n32),
        overlap_region=(ov_start, ov_end))


def sample_scene(seed: int) -> tuple[RoomSpec, MixtureSpec]:
    """Draw one scene configuration; fully determined by the seed.

    Rooms: (L, W) uniform in [3, 8] m, height 3 m, T60 uniform in [0.1, 0.6] s
    (re-drawn until Sabine-feasible for the sampled box); positions uniform
    inside with wall clearance and >= 0.3 m pairwise separation.  Mixing:
    SIR uniform [-5, 5] dB, SNR uniform [0, 15] dB, overlap uniform
    [0.2, 0.8], solo lead a fair coin.
    """
    rng = np.random.default_rng(seed)
    length = float(rng.uniform(3.0, 8.0))
    width = float(rng.uniform(3.0, 8.0))
    height = 3.0
    floor_t60 = max(0.1, 1.02 * min_t60(length, width, height))
    t60 = float(rng.uniform(0.1, 0.6))
    while t60 < floor_t60:
        t60 = float(rng.uniform(0.1, 0.6))

    def draw_pos():
        return tuple(float(rng.uniform(WALL_CLEARANCE + 0.05, e - WALL_CLEARANCE - 0.05))
                     for e in (length, width, height))

    positions = [draw_pos()]
    while len(positions) < 3:
        cand = draw_pos()
        if all(np.linalg.norm(np.subtract(cand, p)) >= 0.3 for p in positions):
            positions.append(cand)
    room = RoomSpec(length=length, width=width, t60=t60, mic=positions[0],
                    source_target=positions[1], source_interferer=positions[2])
    spec = MixtureSpec(
        sir_db=float(rng.uniform(-5.0, 5.0)),
        snr_db=float(rng.uniform(0.0, 15.0)),
        overlap_ratio=float(rng.uniform(0.2, 0.8)),
        lead="target" if rng.random() < 0.5 else "interferer",
        seed=int(rng.integers(0, 2 ** 63 - 1)))
    return room, spec
