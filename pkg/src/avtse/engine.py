"""Frame-synchronous runtime binding both stages.

One call consumes 160 audio samples (plus one 32x32 lip frame on every
fourth call when a visual stream is attached) and emits 160 enhanced
samples.  The engine runs exactly one hop behind its input: the spectral
frame covering samples [160(t-1), 160(t-1)+320) is only complete once hop
t arrives, so call 0 returns zeros and call t returns output positions
[160(t-1), 160t).  Algorithmic latency is therefore one 10 ms hop on top
of the 20 ms analysis span.

Also here: analytic parameter/MAC accounting for the manifest-defined
architecture and a wall-clock benchmark for the frame loop.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import frontend as fe
from .errors import DataError, ShapeError
from .tse import TseModel, TseState, align_vad
from .vvad import VvadModel, VvadState, classify
from .weights import WeightSet

HOP = fe.HOP
FRAME_LEN = fe.FRAME_LEN
AUDIO_PER_VIDEO = 4


# ---------------------------------------------------------------------------
# streaming engine
# ---------------------------------------------------------------------------


@dataclass
class StreamState:
    input_tail: np.ndarray          # last FRAME_LEN input samples
    vvad: VvadState
    tse: TseState
    ola_tail: np.ndarray
    labels: np.ndarray              # VAD label of video frames tv-1 and tv
    audio_hops: int = 0
    video_frames: int = 0

    def reset(self) -> None:
        self.input_tail[:] = 0.0
        self.ola_tail[:] = 0.0
        self.labels[:] = 0
        self.vvad.reset()
        self.tse.reset()
        self.audio_hops = 0
        self.video_frames = 0


class StreamingEngine:
    """Single-owner streaming enhancer; share weights, not engines."""

    def __init__(self, ws: WeightSet, visual: bool = True):
        self.vvad = VvadModel(ws)
        self.tse = TseModel(ws)
        self.visual = visual
        self.state = StreamState(
            input_tail=np.zeros(FRAME_LEN, dtype=np.float32),
            vvad=self.vvad.make_state(),
            tse=self.tse.make_state(),
            ola_tail=np.zeros(HOP, dtype=np.float32),
            labels=np.zeros(2, dtype=np.int8))

    def reset(self) -> None:
        """Return to the all-zeros initial condition; idempotent."""
        self.state.reset()

    def process_frame(self, samples: np.ndarray,
                      lip: np.ndarray | None = None) -> np.ndarray:
        """Consume one 160-sample hop (+ lip frame at 25 fps phase), emit 160."""
        st = self.state
        samples = np.asarray(samples, dtype=np.float32)
        if samples.shape != (HOP,):
            raise ShapeError(f"expected {HOP} samples, got shape {samples.shape}")
        if not np.isfinite(samples).all():
            raise DataError("non-finite samples in input hop")
        lip_due = self.visual and st.audio_hops % AUDIO_PER_VIDEO == 0
        if lip_due and lip is None:
            raise DataError(f"hop {st.audio_hops}: lip frame due but missing")
        if not lip_due and lip is not None:
            raise DataError(f"hop {st.audio_hops}: lip frame supplied off-phase")

        if lip is not None:
            logits = self.vvad.step(lip, st.vvad)
            st.labels[0] = st.labels[1]
            st.labels[1] = classify(logits[np.newaxis])[0]
            st.video_frames += 1

        st.input_tail[:HOP] = st.input_tail[HOP:]
        st.input_tail[HOP:] = samples
        st.audio_hops += 1
        if st.audio_hops == 1:
            return np.zeros(HOP, dtype=np.float32)

        f = st.audio_hops - 2  # index of the newest complete spectral frame
        z = np.fft.rfft(st.input_tail * fe.WINDOW)
        y = np.empty((2, fe.N_BINS), dtype=np.float32)
        y[0], y[1] = z.real, z.imag

        if self.visual:
            tv = f // AUDIO_PER_VIDEO
            label = int(st.labels[1] if tv == st.video_frames - 1 else st.labels[0])
        else:
            label = 1
        mask = self.tse.step(y, label, st.tse)

        s_re = y[0] * mask[0] - y[1] * mask[1]
        s_im = y[0] * mask[1] + y[1] * mask[0]
        frame = fe._synth_frame(s_re, s_im)
        out = (st.ola_tail + frame[:HOP]) / fe._OLA_NORM
        st.ola_tail[:] = frame[HOP:]
        return out


def enhance_offline(ws: WeightSet, audio: fe.AudioBuffer,
                    lips: np.ndarray | None = None) -> fe.AudioBuffer:
    """Whole-utterance pipeline; the oracle the streaming engine must match.

    With ``lips`` absent the VAD gate is constantly active (audio-only
    degradation).  Output covers frames 0..T-1, i.e. (T-1)*160 + 320 samples.
    """
    spec = fe.stft(audio)
    t = spec.frames
    if lips is not None:
        need = (t + AUDIO_PER_VIDEO - 1) // AUDIO_PER_VIDEO
        if lips.shape[0] < need:
            raise DataError(f"{lips.shape[0]} lip frames cover "
                            f"{lips.shape[0] * AUDIO_PER_VIDEO} audio frames, "
                            f"need {t}")
        vvad = VvadModel(ws)
        labels = classify(vvad.forward(lips))
    else:
        labels = np.ones((t + AUDIO_PER_VIDEO - 1) // AUDIO_PER_VIDEO,
                         dtype=np.int8)
    mask = TseModel(ws).forward(spec, labels)
    return fe.istft(fe.apply_crm(spec, mask, source=0))


def stream_file(ws: WeightSet, audio: fe.AudioBuffer,
                lips: np.ndarray | None = None,
                collect_timing: bool = False):
    """Run the streaming engine over a whole file, hop by hop.

    Returns (audio_out, per_frame_ms or None).  Output sample p corresponds
    to offline output sample p - 160 (one-hop stream delay).
    """
    n_hops = len(audio) // HOP
    engine = StreamingEngine(ws, visual=lips is not None)
    if lips is not None and lips.shape[0] * AUDIO_PER_VIDEO < n_hops:
        raise DataError(f"lip stream too short: {lips.shape[0]} frames for "
                        f"{n_hops} audio hops")
    out = np.empty(n_hops * HOP, dtype=np.float32)
    times = np.empty(n_hops) if collect_timing else None
    # frame-rate matrices are tiny; BLAS thread fan-out only adds jitter
    with threadpool_limits(limits=1, user_api="blas"):
        for h in range(n_hops):
            lip = lips[h // AUDIO_PER_VIDEO] if (lips is not None
                                                 and h % AUDIO_PER_VIDEO == 0) else None
            t0 = time.perf_counter()
            out[h * HOP:(h + 1) * HOP] = engine.process_frame(
                audio.samples[h * HOP:(h + 1) * HOP], lip)
            if collect_timing:
                times[h] = (time.perf_counter() - t0) * 1e3
    return fe.AudioBuffer(out), times


# ---------------------------------------------------------------------------
# analytic complexity accounting
# ---------------------------------------------------------------------------


@dataclass
class ComplexityReport:
    params: int
    macs_per_second: int
    breakdown_params: dict[str, int] = field(default_factory=dict)
    breakdown_macs: dict[str, int] = field(default_factory=dict)

    def lines(self) -> list[str]:
        rows = [f"{'module':<16} {'params':>12} {'MACs/s':>16}"]
        for name in self.breakdown_params:
            rows.append(f"{name:<16} {self.breakdown_params[name]:>12,} "
                        f"{self.breakdown_macs[name]:>16,}")
        rows.append(f"{'total':<16} {self.params:>12,} {self.macs_per_second:>16,}")
        return rows


def _conv_macs(out_elems: int, cin: int, kernel_vol: int, cout: int) -> int:
    return out_elems * cout * cin * kernel_vol


def complexity_report(ws: WeightSet) -> ComplexityReport:
    """Exact analytic parameter and MAC counts per second of input.

    MAC conventions: conv and transposed conv count out_elems * kernel_volume
    * C_in * C_out (per frame); a linear of (in -> out) applied N times counts
    N * in * out; an LSTM step is 4*H*(H+D) per application; attention counts
    the q-k and alpha-v products per window (2 * L * d_head per head) plus its
    projections.  VVAD layers run at 25 fps, TSE layers at 100 fps.  Params
    count every learnable tensor (running stats excluded).
    """
    man = ws.manifest
    from .manifest import tensor_table
    table = tensor_table(man)

    def params_for(prefix: str) -> int:
        return sum(int(np.prod(shape)) for name, shape in table.items()
                   if name.startswith(prefix)
                   and not name.endswith((".mean", ".var")))

    v = man["vvad"]
    video_fps = man["video"]["fps"]
    audio_fps = man["audio"]["sample_rate"] // man["audio"]["hop"]
    size = man["video"]["lip_size"]

    # VVAD, per video frame
    stem = v["stem"]
    side = size // stem["stride"][1]                       # 16 after stem stride
    macs_v = stem["out"] * side * side * int(np.prod(stem["kernel"]))  # cin=1
    side = (side + 2 * stem["pool_pad"] - stem["pool_kernel"][1]) \
        // stem["pool_stride"][1] + 1                      # 8 after pooling
    for cin, cout, stride in v["blocks"]:
        side_out = (side + 2 - 3) // stride + 1
        macs_v += _conv_macs(side_out * side_out, cin, 9, cout)
        macs_v += _conv_macs(side_out * side_out, cout, 9, cout)
        if cin != cout or stride != 1:
            macs_v += _conv_macs(side_out * side_out, cin, 1, cout)
        side = side_out
    feat = v["blocks"][-1][1]
    macs_v += v["temporal"]["out"] * feat * v["temporal"]["kernel"]
    macs_v += v["classifier_hidden"] * v["temporal"]["out"]
    macs_v += 2 * v["classifier_hidden"]
    vvad_macs = macs_v * video_fps

    t = man["tse"]
    freqs = t["freq_ladder"]
    kvol = t["time_kernel"] * t["freq_kernel"]
    enc_macs = sum(_conv_macs(freqs[i + 1], cin, kvol, cout)
                   for i, (cin, cout, _s) in enumerate(t["encoder"]))
    # transposed stages mirror the encoder; every input element touches
    # kernel_volume * C_out outputs
    dec_macs = sum(_conv_macs(freqs[i + 1], t["encoder"][i][1], kvol,
                              t["encoder"][i][0])
                   for i in range(len(t["encoder"]) - 1, 0, -1))
    dec_macs += _conv_macs(freqs[1], t["encoder"][0][1], kvol, t["mask_channels"])

    f_low = freqs[-1]
    width = t["width"]
    hidden = t["crossband"]["hidden"]
    cross_macs = (2 * _conv_macs(f_low, width, t["crossband"]["fconv_kernel"], width)
                  + f_low * width * hidden      # channel expansion
                  + hidden * f_low * f_low      # per-channel frequency maps
                  + f_low * hidden * width)     # channel restore
    units = t["narrowband"]["lstm_units"]
    narrow_macs = f_low * (4 * units * (units + width)) + f_low * units * width
    heads = t["attention"]["heads"]
    d_head = width // heads
    attn_macs = (4 * f_low * width * width
                 + f_low * heads * 2 * t["attention"]["window"] * d_head)
    block_macs = (cross_macs + narrow_macs + attn_macs) * t["blocks"]

    breakdown_macs = {
        "vvad": vvad_macs,
        "tse.encoder": enc_macs * audio_fps,
        "tse.crossband": cross_macs * t["blocks"] * audio_fps,
        "tse.narrowband": narrow_macs * t["blocks"] * audio_fps,
        "tse.attention": attn_macs * t["blocks"] * audio_fps,
        "tse.decoder": dec_macs * audio_fps,
    }
    breakdown_params = {
        "vvad": params_for("vvad."),
        "tse.encoder": params_for("tse.enc"),
        "tse.crossband": sum(params_for(f"tse.block{b}.cross")
                             for b in range(t["blocks"])),
        "tse.narrowband": sum(params_for(f"tse.block{b}.narrow")
                              for b in range(t["blocks"])),
        "tse.attention": sum(params_for(f"tse.block{b}.attn")
                             for b in range(t["blocks"])),
        "tse.decoder": params_for("tse.dec"),
    }
    return ComplexityReport(
        params=sum(breakdown_params.values()),
        macs_per_second=sum(breakdown_macs.values()),
        breakdown_params=breakdown_params,
        breakdown_macs=breakdown_macs)


# ---------------------------------------------------------------------------
# latency benchmark
# ---------------------------------------------------------------------------


@dataclass
class BenchStats:
    frames: int
    mean_ms: float
    p95_ms: float
    max_ms: float
    rtf: float
    backend: str

    def lines(self) -> list[str]:
        return [
            f"frames processed : {self.frames}",
            f"mean per-frame   : {self.mean_ms:.3f} ms",
            f"p95 per-frame    : {self.p95_ms:.3f} ms",
            f"max per-frame    : {self.max_ms:.3f} ms",
            f"real-time factor : {self.rtf:.3f} (1.0 = {HOP / 16:.0f} ms budget)",
        ]

    def keyvals(self) -> list[str]:
        return [
            f"frames={self.frames}",
            f"mean_ms={self.mean_ms:.6f}",
            f"p95_ms={self.p95_ms:.6f}",
            f"max_ms={self.max_ms:.6f}",
            f"rtf={self.rtf:.6f}",
            f"backend={self.backend}",
        ]


def bench(ws: WeightSet, seconds: float, visual: bool = True,
          seed: int = 0, warmup_frames: int = 50) -> BenchStats:
    """Deterministic synthetic workload, wall-clock timed per frame."""
    from . import kernels as K
    n_frames = int(round(seconds * 16000 / HOP))
    if n_frames <= 0:
        raise DataError(f"benchmark over {seconds} s covers zero frames")
    rng = np.random.default_rng(seed)
    audio = rng.standard_normal((warmup_frames + n_frames) * HOP).astype(np.float32) * 0.1
    lips = (rng.random(((warmup_frames + n_frames + AUDIO_PER_VIDEO - 1)
                        // AUDIO_PER_VIDEO, 32, 32)) if visual else None)
    if lips is not None:
        lips = lips.astype(np.float32)
    engine = StreamingEngine(ws, visual=visual)
    times = np.empty(n_frames)
    with threadpool_limits(limits=1, user_api="blas"):
        for h in range(warmup_frames + n_frames):
            lip = (lips[h // AUDIO_PER_VIDEO]
                   if visual and h % AUDIO_PER_VIDEO == 0 else None)
            t0 = time.perf_counter()
            engine.process_frame(audio[h * HOP:(h + 1) * HOP], lip)
            dt = (time.perf_counter() - t0) * 1e3
            if h >= warmup_frames:
                times[h - warmup_frames] = dt
    mean = float(times.mean())
    return BenchStats(frames=n_frames, mean_ms=mean,
                      p95_ms=float(np.percentile(times, 95)),
                      max_ms=float(times.max()),
                      rtf=mean / (1e3 * HOP / 16000), backend=K.backend())
