"""Target speech extraction: fused VAD/spectrum input -> complex ratio mask.

Structure: channel fusion of the mixture spectrum with its VAD-gated copy,
a frequency-downsampling causal conv encoder (161 -> 81 -> 41 -> 21 bins),
N repetitions of (cross-band, narrow-band, windowed-attention) with a
residual around each sub-module, and a mirrored transposed-conv decoder
that emits a 4-channel tanh mask (target re/im, interferer re/im).

Everything is causal in time: convs are padded past-only, the narrow-band
LSTM runs forward, and attention sees a fixed 50-frame trailing window via
zero-initialized key/value caches (zeros participate as ordinary keys, so
the warm-up region is well-defined and reproducible offline).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .errors import ShapeError
from .frontend import ComplexSpectrogram, CrmMask
from .weights import WeightSet

_ATTN_CHUNK = 256  # offline attention is evaluated in time chunks of this size


def align_vad(labels: np.ndarray) -> np.ndarray:
    """Repeat each 25 fps VAD label over its four 100 fps audio frames."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] < 1:
        raise ShapeError(f"expected (Tv,) labels, got {labels.shape}")
    return np.repeat(labels.astype(np.float32), 4)


def fuse(spec: ComplexSpectrogram, aligned_vad: np.ndarray) -> np.ndarray:
    """Stack [re, im, re*vad, im*vad] into the (4, T, F) model input."""
    if aligned_vad.shape[0] != spec.frames:
        raise ShapeError(f"aligned VAD spans {aligned_vad.shape[0]} frames, "
                         f"spectrogram has {spec.frames}")
    gate = aligned_vad.astype(np.float32)[:, np.newaxis]
    return np.stack([spec.re, spec.im, spec.re * gate, spec.im * gate])


@dataclass
class BlockState:
    h: np.ndarray          # (F_low, units) narrow-band LSTM hidden
    c: np.ndarray          # (F_low, units) narrow-band LSTM cell
    k_cache: np.ndarray    # (F_low, L, C) attention key ring
    v_cache: np.ndarray    # (F_low, L, C) attention value ring
    cursor: int = 0

    def reset(self) -> None:
        self.h[:] = 0.0
        self.c[:] = 0.0
        self.k_cache[:] = 0.0
        self.v_cache[:] = 0.0
        self.cursor = 0


@dataclass
class TseState:
    enc_prev: list[np.ndarray]   # previous input column per encoder stage
    dec_prev: list[np.ndarray]   # previous input column per decoder stage
    blocks: list[BlockState]

    def reset(self) -> None:
        for a in self.enc_prev + self.dec_prev:
            a[:] = 0.0
        for b in self.blocks:
            b.reset()


class TseModel:
    def __init__(self, ws: WeightSet):
        self.w = ws
        t = ws.manifest["tse"]
        self.width = t["width"]
        self.tk, self.fk = t["time_kernel"], t["freq_kernel"]
        self.enc_stages = [tuple(s) for s in t["encoder"]]
        self.freqs = list(t["freq_ladder"])
        self.n_blocks = t["blocks"]
        self.heads = t["attention"]["heads"]
        self.window = t["attention"]["window"]
        self.units = t["narrowband"]["lstm_units"]
        self.f_low = self.freqs[-1]
        self._lstm = [K.LstmWeights.from_pair(
            ws.get(f"tse.block{b}.narrow.lstm.w_ih"),
            ws.get(f"tse.block{b}.narrow.lstm.w_hh"),
            ws.get(f"tse.block{b}.narrow.lstm.b_ih"),
            ws.get(f"tse.block{b}.narrow.lstm.b_hh")) for b in range(self.n_blocks)]
        self._bn_cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    # -- shared layer helpers (operate on (T, F, C) views) --------------------

    def _bn(self, x, prefix):
        cached = self._bn_cache.get(prefix)
        if cached is None:
            scale = (self.w.get(f"{prefix}.gain")
                     / np.sqrt(self.w.get(f"{prefix}.var") + np.float32(K.EPS)))
            shift = self.w.get(f"{prefix}.bias") - self.w.get(f"{prefix}.mean") * scale
            cached = (scale.reshape(-1, 1, 1).astype(np.float32),
                      shift.reshape(-1, 1, 1).astype(np.float32))
            self._bn_cache[prefix] = cached
        return x * cached[0] + cached[1]

    def _ln(self, x_tfc, prefix):
        return K.layer_norm(x_tfc, self.w.get(f"{prefix}.gain"),
                            self.w.get(f"{prefix}.bias"))

    def _proj(self, x_tfc, prefix):
        """Linear + PReLU + LayerNorm, the attention projection unit."""
        y = K.linear(x_tfc, self.w.get(f"{prefix}.w"), self.w.get(f"{prefix}.b"))
        y = K.prelu(y, self.w.get(f"{prefix}.prelu"), channel_axis=y.ndim - 1)
        return self._ln(y, f"{prefix}.ln")

    # -- encoder / decoder -----------------------------------------------------

    def _enc_spec(self, idx: int, streaming: bool) -> K.ConvSpec:
        cin, cout, stride = self.enc_stages[idx]
        fp = (self.fk - 1) // 2
        tpad = (0, 0) if streaming else (self.tk - 1, 0)
        return K.ConvSpec((self.tk, self.fk), (1, stride), (tpad, (fp, fp)),
                          cin, cout, causal_time=not streaming)

    def _enc_stage(self, x, idx, streaming=False):
        y = K.conv(x, self.w.get(f"tse.enc{idx}.conv.w"), None,
                   self._enc_spec(idx, streaming))
        y = self._bn(y, f"tse.enc{idx}.bn")
        return K.prelu(y, self.w.get(f"tse.enc{idx}.prelu"))

    def encode(self, x: np.ndarray) -> list[np.ndarray]:
        """(4, T, 161) -> per-stage outputs; last entry feeds the backbone."""
        if x.ndim != 3 or x.shape[0] != self.enc_stages[0][0] \
                or x.shape[2] != self.freqs[0]:
            raise ShapeError(f"encoder expects (4, T, {self.freqs[0]}), got {x.shape}")
        outs = []
        for i in range(len(self.enc_stages)):
            x = self._enc_stage(x, i)
            outs.append(x)
        return outs

    def _dec_stage(self, x, idx, streaming=False):
        tpad = (1, 1) if streaming else (0, 1)
        y = K.conv_transpose(x, self.w.get(f"tse.dec{idx}.deconv.w"), None,
                             (1, 2), (tpad, (2, 2)))
        y = self._bn(y, f"tse.dec{idx}.bn")
        return K.prelu(y, self.w.get(f"tse.dec{idx}.prelu"))

    def _dec_final(self, x, streaming=False):
        tpad = (0, 0) if streaming else (self.tk - 1, 0)
        fp = (self.fk - 1) // 2
        spec = K.ConvSpec((self.tk, self.fk), (1, 1), (tpad, (fp, fp)),
                          self.enc_stages[0][1], 4, causal_time=not streaming)
        y = K.conv(x, self.w.get("tse.dec0.conv.w"),
                   self.w.get("tse.dec0.conv.b"), spec)
        return np.tanh(y)

    def decode(self, h: np.ndarray, skips: list[np.ndarray]) -> np.ndarray:
        """Backbone output + encoder skips -> (4, T, 161) mask in [-1, 1]."""
        for i in range(len(self.enc_stages) - 1, 0, -1):
            h = self._dec_stage(h + skips[i], i)
        return self._dec_final(h + skips[0])

    # -- backbone sub-modules ---------------------------------------------------

    def _fconv(self, x, prefix):
        """LayerNorm -> Conv1D along frequency -> PReLU (per-frame)."""
        y = self._ln(x.transpose(1, 2, 0), f"{prefix}.ln").transpose(2, 0, 1)
        fp = (self.fk_cross - 1) // 2
        spec = K.ConvSpec((1, self.fk_cross), (1, 1), ((0, 0), (fp, fp)),
                          self.width, self.width)
        w = self.w.get(f"{prefix}.conv.w").reshape(self.width, self.width, 1,
                                                   self.fk_cross)
        y = K.conv(y, w, self.w.get(f"{prefix}.conv.b"), spec)
        return K.prelu(y, self.w.get(f"{prefix}.prelu"))

    @property
    def fk_cross(self) -> int:
        return self.w.manifest["tse"]["crossband"]["fconv_kernel"]

    def _fullband_linear(self, x, prefix):
        """Channel expansion, per-channel frequency maps, channel restore."""
        y = x.transpose(1, 2, 0)                                     # (T, F, C)
        y = K.silu(K.linear(y, self.w.get(f"{prefix}.in.w"),
                            self.w.get(f"{prefix}.in.b")))           # (T, F, H)
        wf = self.w.get(f"{prefix}.freq.w")                          # (H, F, F)
        bf = self.w.get(f"{prefix}.freq.b")                          # (H, F)
        # independent (F -> F) map per expanded channel, batched over H
        z = np.matmul(wf, y.transpose(2, 1, 0)) + bf[:, :, np.newaxis]
        z = z.transpose(2, 1, 0)                                     # (T, F, H)
        z = K.silu(K.linear(z, self.w.get(f"{prefix}.out.w"),
                            self.w.get(f"{prefix}.out.b")))          # (T, F, C)
        return np.ascontiguousarray(z.transpose(2, 0, 1), dtype=np.float32)

    def crossband(self, x: np.ndarray, block: int) -> np.ndarray:
        """Per-frame cross-frequency mixing; residual around the module."""
        p = f"tse.block{block}.cross"
        y = self._fconv(x, f"{p}.fconv0")
        y = self._fullband_linear(y, f"{p}.fbl")
        y = self._fconv(y, f"{p}.fconv1")
        return x + y

    def narrowband(self, x: np.ndarray, block: int,
                   state: BlockState | None = None) -> np.ndarray:
        """Per-frequency LayerNorm -> LSTM over time -> linear; residual added.

        With ``state`` the LSTM starts from (and updates) the carried (h, c),
        which is how the streaming engine runs it one frame at a time.
        """
        p = f"tse.block{block}.narrow"
        y = self._ln(x.transpose(1, 2, 0), f"{p}.ln")     # (T, F, C)
        t_len, f_len = y.shape[:2]
        if state is None:
            h = np.zeros((f_len, self.units), dtype=np.float32)
            c = np.zeros_like(h)
        else:
            h, c = state.h, state.c
        outs = np.empty((t_len, f_len, self.units), dtype=np.float32)
        lw = self._lstm[block]
        for t in range(t_len):
            h, c = K.lstm_step(y[t], h, c, lw)
            outs[t] = h
        if state is not None:
            state.h[:] = h
            state.c[:] = c
        z = K.linear(outs, self.w.get(f"{p}.fc.w"), self.w.get(f"{p}.fc.b"))
        return x + z.transpose(2, 0, 1)

    def attention(self, x: np.ndarray, block: int,
                  state: BlockState | None = None) -> np.ndarray:
        """Windowed causal attention per frequency; residual around the module."""
        p = f"tse.block{block}.attn"
        xt = np.ascontiguousarray(x.transpose(1, 2, 0), dtype=np.float32)
        q = self._proj(xt, f"{p}.q")
        k = self._proj(xt, f"{p}.k")
        v = self._proj(xt, f"{p}.v")
        if state is None:
            attn = self._windowed_attention(q, k, v)
        else:
            attn = self._cached_attention(q, k, v, state)
        y = self._proj(attn, f"{p}.out")
        return x + y.transpose(2, 0, 1)

    def _windowed_attention(self, q, k, v):
        """Offline form: every frame attends over its trailing L-frame window.

        Windows reaching before frame 0 see zero keys/values, matching the
        zero-initialized streaming cache bit for bit.
        """
        t_len, f_len, c = q.shape
        heads, L = self.heads, self.window
        d = c // heads
        scale = np.float32(1.0 / np.sqrt(d))
        kp = np.zeros((t_len + L - 1, f_len, heads, d), dtype=np.float32)
        vp = np.zeros_like(kp)
        kp[L - 1:] = k.reshape(t_len, f_len, heads, d)
        vp[L - 1:] = v.reshape(t_len, f_len, heads, d)
        qh = q.reshape(t_len, f_len, heads, d)
        out = np.empty_like(qh)
        for start in range(0, t_len, _ATTN_CHUNK):
            end = min(start + _ATTN_CHUNK, t_len)
            tc = end - start
            scores = np.empty((tc, f_len, heads, L), dtype=np.float32)
            for l in range(L):
                scores[..., l] = np.einsum("tfhd,tfhd->tfh", qh[start:end],
                                           kp[start + l:start + l + tc])
            alpha = K.softmax(scores * scale, axis=-1)
            acc = np.zeros((tc, f_len, heads, d), dtype=np.float32)
            for l in range(L):
                acc += alpha[..., l, np.newaxis] * vp[start + l:start + l + tc]
            out[start:end] = acc
        return out.reshape(t_len, f_len, c)

    def _cached_attention(self, q, k, v, state: BlockState):
        t_len, f_len, c = q.shape
        out = np.empty_like(q)
        for t in range(t_len):
            state.k_cache[:, state.cursor] = k[t]
            state.v_cache[:, state.cursor] = v[t]
            state.cursor = (state.cursor + 1) % self.window
            out[t] = K.attention_step(q[t], state.k_cache, state.v_cache,
                                      self.heads)
        return out

    # -- full forward -----------------------------------------------------------

    def backbone(self, x: np.ndarray,
                 states: list[BlockState] | None = None) -> np.ndarray:
        for b in range(self.n_blocks):
            st = states[b] if states is not None else None
            x = self.crossband(x, b)
            x = self.narrowband(x, b, st)
            x = self.attention(x, b, st)
        return x

    def forward(self, spec: ComplexSpectrogram, vad_labels: np.ndarray) -> CrmMask:
        """Offline pass over a whole utterance."""
        aligned = align_vad(vad_labels)
        if aligned.shape[0] < spec.frames:
            raise ShapeError(f"VAD covers {aligned.shape[0]} audio frames, "
                             f"spectrogram has {spec.frames}")
        x = fuse(spec, aligned[:spec.frames])
        skips = self.encode(x)
        h = self.backbone(skips[-1])
        return CrmMask(self.decode(h, skips))

    # -- streaming --------------------------------------------------------------

    def make_state(self) -> TseState:
        enc_prev = [np.zeros((cin, 1, self.freqs[i]), dtype=np.float32)
                    for i, (cin, _cout, _s) in enumerate(self.enc_stages)]
        dec_prev = [np.zeros((self.width, 1, self.freqs[i + 1]), dtype=np.float32)
                    for i in range(len(self.enc_stages))]
        blocks = [BlockState(
            h=np.zeros((self.f_low, self.units), dtype=np.float32),
            c=np.zeros((self.f_low, self.units), dtype=np.float32),
            k_cache=np.zeros((self.f_low, self.window, self.width), dtype=np.float32),
            v_cache=np.zeros((self.f_low, self.window, self.width), dtype=np.float32))
            for _ in range(self.n_blocks)]
        return TseState(enc_prev=enc_prev, dec_prev=dec_prev, blocks=blocks)

    def step(self, y_frame: np.ndarray, vad_label: float,
             state: TseState) -> np.ndarray:
        """One spectral frame (2, 161) + one VAD bit -> one (4, 161) mask row."""
        if y_frame.shape != (2, self.freqs[0]):
            raise ShapeError(f"expected (2, {self.freqs[0]}) frame, got "
                             f"{y_frame.shape}")
        gate = np.float32(vad_label)
        x = np.stack([y_frame[0], y_frame[1], y_frame[0] * gate,
                      y_frame[1] * gate])[:, np.newaxis, :]
        skips = []
        for i in range(len(self.enc_stages)):
            window = np.concatenate([state.enc_prev[i], x], axis=1)
            state.enc_prev[i][:] = x
            x = self._enc_stage(window, i, streaming=True)
            skips.append(x)
        h = self.backbone(x, states=state.blocks)
        # decoder mirrors the encoder; dec_prev[i] buffers stage i's input
        for i in range(len(self.enc_stages) - 1, 0, -1):
            z = h + skips[i]
            window = np.concatenate([state.dec_prev[i], z], axis=1)
            state.dec_prev[i][:] = z
            h = self._dec_stage(window, i, streaming=True)
        z = h + skips[0]
        window = np.concatenate([state.dec_prev[0], z], axis=1)
        state.dec_prev[0][:] = z
        return self._dec_final(window, streaming=True)[:, 0, :]
