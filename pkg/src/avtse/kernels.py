"""Dense numeric kernels every model in this package is built from.

All kernels operate on contiguous float32 numpy arrays, accumulate in
float32, are pure (inputs never mutated, no hidden state), and are safe to
call concurrently on distinct arrays.

Layout conventions:
  * feature maps are channel-first: (C, *spatial), up to 4 spatial axes;
  * the first spatial axis is the time axis wherever ``causal_time`` applies;
  * weights are (C_out, C_in, *kernel); linear weights are (out, in).

A compiled fast lane (``avtse._core``) provides drop-in versions of the
per-frame hot kernels (LSTM step, windowed attention step, row layer-norm).
Selection happens at import; set AVTSE_BACKEND=python|compiled to force a
lane, and use :func:`set_backend` from tests.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

EPS = 1e-5  # variance floor shared by every normalization


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

try:
    from . import _core  # type: ignore[attr-defined]
except ImportError:
    _core = None

_BACKEND = "python"


def available_backends() -> tuple[str, ...]:
    return ("python", "compiled") if _core is not None else ("python",)


def set_backend(name: str) -> None:
    """Select the kernel lane; 'auto' picks compiled when present."""
    global _BACKEND
    if name == "auto":
        name = "compiled" if _core is not None else "python"
    if name not in available_backends():
        raise ValueError(f"backend {name!r} unavailable (have {available_backends()})")
    _BACKEND = name


def backend() -> str:
    return _BACKEND


set_backend(os.environ.get("AVTSE_BACKEND", "auto"))


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _as_f32(x, name: str) -> np.ndarray:
    a = np.asarray(x)
    if a.dtype != np.float32:
        a = a.astype(np.float32)
    return a


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeError(msg)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # exp on the negative half-line only, stable for any finite input
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def prelu(x: np.ndarray, slope: np.ndarray, channel_axis: int = 0) -> np.ndarray:
    """Per-channel parametric ReLU: x if x>0 else slope[c]*x."""
    shape = [1] * x.ndim
    shape[channel_axis] = -1
    s = slope.reshape(shape)
    return np.where(x > 0, x, (s * x).astype(np.float32))


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of an N-dimensional convolution (N = 1, 2 or 3).

    ``pad`` holds one (leading, trailing) pair per spatial axis.  With
    ``causal_time`` set, the first spatial axis is temporal and its trailing
    pad must be zero so outputs never see future frames.
    """

    kernel: tuple[int, ...]
    stride: tuple[int, ...]
    pad: tuple[tuple[int, int], ...]
    in_channels: int
    out_channels: int
    causal_time: bool = False

    def __post_init__(self):
        n = len(self.kernel)
        _require(1 <= n <= 4, f"conv supports 1-4 spatial axes, got {n}")
        _require(len(self.stride) == n and len(self.pad) == n,
                 "kernel/stride/pad arity mismatch")
        _require(all(k >= 1 for k in self.kernel), "kernel extents must be >= 1")
        _require(all(s >= 1 for s in self.stride), "stride extents must be >= 1")
        _require(self.in_channels >= 1 and self.out_channels >= 1,
                 "channel counts must be >= 1")
        if self.causal_time:
            _require(self.pad[0][1] == 0,
                     "causal_time forbids trailing pad on the time axis")

    def out_extent(self, axis: int, in_extent: int) -> int:
        lead, trail = self.pad[axis]
        return (in_extent + lead + trail - self.kernel[axis]) // self.stride[axis] + 1


def causal_spec(kernel, stride, same_axes, in_channels, out_channels) -> ConvSpec:
    """ConvSpec with past-only padding on axis 0 and 'same' padding elsewhere.

    ``same_axes`` lists the spatial axes (by index) that get centered padding
    of (k-1)//2 each side; the time axis gets the full k-1 in front.
    """
    kernel = tuple(kernel)
    stride = tuple(stride)
    pad = [(kernel[0] - 1, 0)]
    for ax in range(1, len(kernel)):
        if ax in same_axes:
            k = kernel[ax]
            pad.append(((k - 1) // 2, k - 1 - (k - 1) // 2))
        else:
            pad.append((0, 0))
    return ConvSpec(kernel, stride, tuple(pad), in_channels, out_channels,
                    causal_time=True)


def conv(x: np.ndarray, w: np.ndarray, b: np.ndarray | None, spec: ConvSpec) -> np.ndarray:
    """N-dimensional convolution (cross-correlation), channel-first.

    x: (C_in, *S);  w: (C_out, C_in, *kernel);  returns (C_out, *S_out) with
    S_out[i] = floor((S[i] + pad - kernel[i]) / stride[i]) + 1.
    """
    x = _as_f32(x, "input")
    w = _as_f32(w, "weights")
    n = len(spec.kernel)
    _require(x.ndim == n + 1, f"input rank {x.ndim} != {n + 1} for a {n}-axis conv")
    _require(x.shape[0] == spec.in_channels,
             f"input has {x.shape[0]} channels, spec expects {spec.in_channels}")
    _require(w.shape == (spec.out_channels, spec.in_channels, *spec.kernel),
             f"weights shaped {w.shape}, expected "
             f"{(spec.out_channels, spec.in_channels, *spec.kernel)}")
    out_shape = tuple(spec.out_extent(i, x.shape[1 + i]) for i in range(n))
    _require(all(e >= 1 for e in out_shape),
             f"zero-size conv output {out_shape} from input {x.shape[1:]}")

    if any(p != (0, 0) for p in spec.pad):
        padded_dims = tuple(x.shape[1 + i] + sum(spec.pad[i]) for i in range(n))
        xp = np.zeros((x.shape[0], *padded_dims), dtype=np.float32)
        dest = tuple(slice(spec.pad[i][0], spec.pad[i][0] + x.shape[1 + i])
                     for i in range(n))
        xp[(slice(None),) + dest] = x
    else:
        xp = x
    win = np.lib.stride_tricks.sliding_window_view(xp, spec.kernel,
                                                   axis=tuple(range(1, n + 1)))
    win = win[(slice(None),) + tuple(slice(None, None, s) for s in spec.stride)]
    # (C_in, *out, *K) -> (prod_out, C_in*K) @ (C_in*K, C_out) via one GEMM
    cols = np.moveaxis(win, 0, n).reshape(-1, spec.in_channels * int(np.prod(spec.kernel)))
    out = cols @ w.reshape(spec.out_channels, -1).T
    if b is not None:
        out += _as_f32(b, "bias")
    return np.ascontiguousarray(out.T.reshape(spec.out_channels, *out_shape))


def conv_transpose(x: np.ndarray, w: np.ndarray, b: np.ndarray | None,
                   stride: tuple[int, ...], pad: tuple[tuple[int, int], ...]) -> np.ndarray:
    """Transposed N-d convolution, channel-first.

    x: (C_in, *S); w: (C_in, C_out, *kernel).  Every input element scatters
    w into the upsampled grid; ``pad`` trims (leading, trailing) from each
    full-output axis, so out[i] = (S[i]-1)*stride[i] + kernel[i] - lead - trail.
    """
    x = _as_f32(x, "input")
    w = _as_f32(w, "weights")
    n = w.ndim - 2
    _require(x.ndim == n + 1, f"input rank {x.ndim} != {n + 1}")
    _require(x.shape[0] == w.shape[0],
             f"input has {x.shape[0]} channels, weights expect {w.shape[0]}")
    kernel = w.shape[2:]
    full = tuple((x.shape[1 + i] - 1) * stride[i] + kernel[i] for i in range(n))
    clipped = tuple(full[i] - pad[i][0] - pad[i][1] for i in range(n))
    _require(all(e >= 1 for e in clipped), f"zero-size deconv output {clipped}")

    s_shape = x.shape[1:]
    # one GEMM: (prod_S, C_in) @ (C_in, C_out*K) -> (C_out, *S, *K)
    cols = x.reshape(x.shape[0], -1).T @ w.reshape(w.shape[0], -1)
    contrib = np.ascontiguousarray(
        np.moveaxis(cols.reshape(*s_shape, w.shape[1], *kernel), n, 0))
    out = np.zeros((w.shape[1], *full), dtype=np.float32)
    for kidx in np.ndindex(*kernel):
        dest = tuple(slice(kidx[i], kidx[i] + stride[i] * s_shape[i], stride[i])
                     for i in range(n))
        out[(slice(None),) + dest] += contrib[(Ellipsis,) + kidx]
    trim = tuple(slice(pad[i][0], full[i] - pad[i][1]) for i in range(n))
    out = out[(slice(None),) + trim]
    if b is not None:
        out += _as_f32(b, "bias").reshape((-1,) + (1,) * n)
    return np.ascontiguousarray(out, dtype=np.float32)


def max_pool(x: np.ndarray, kernel: tuple[int, ...], stride: tuple[int, ...],
             pad: tuple[tuple[int, int], ...]) -> np.ndarray:
    """Max pooling over the spatial axes of a channel-first map."""
    n = len(kernel)
    _require(x.ndim == n + 1, "pool rank mismatch")
    if any(p != (0, 0) for p in pad):
        x = np.pad(x, ((0, 0), *pad), constant_values=-np.inf)
    win = np.lib.stride_tricks.sliding_window_view(x, kernel,
                                                   axis=tuple(range(1, n + 1)))
    win = win[(slice(None),) + tuple(slice(None, None, s) for s in stride)]
    return np.ascontiguousarray(win.max(axis=tuple(range(n + 1, 2 * n + 1))),
                                dtype=np.float32)


def global_avg_pool(x: np.ndarray, spatial_axes: tuple[int, ...]) -> np.ndarray:
    """Average over the given axes (adaptive pool to extent 1, squeezed)."""
    return x.mean(axis=spatial_axes, dtype=np.float32)


# ---------------------------------------------------------------------------
# linear / normalization / softmax
# ---------------------------------------------------------------------------


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray | None) -> np.ndarray:
    """x: (..., in) @ w(out, in)^T + b."""
    _require(x.shape[-1] == w.shape[1],
             f"linear input dim {x.shape[-1]} != weight in-dim {w.shape[1]}")
    out = x @ w.T
    if b is not None:
        out += b
    return out


def _layer_norm_py(x2: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    mu = x2.mean(axis=-1, keepdims=True, dtype=np.float32)
    xc = x2 - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True, dtype=np.float32)
    return xc / np.sqrt(var + np.float32(EPS)) * gain + bias


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
               axis: int = -1) -> np.ndarray:
    """Zero-mean / unit-variance over one axis (population stats), then affine."""
    _require(x.shape[axis] == gain.shape[0] == bias.shape[0],
             f"layer_norm affine extent {gain.shape[0]} != axis extent {x.shape[axis]}")
    if axis in (-1, x.ndim - 1):
        flat = np.ascontiguousarray(x, dtype=np.float32)
        shape = flat.shape
        flat = flat.reshape(-1, shape[-1])
        if _BACKEND == "compiled":
            out = _core.layer_norm_rows(flat, gain, bias, EPS)
        else:
            out = _layer_norm_py(flat, gain, bias)
        return out.reshape(shape)
    xm = np.moveaxis(x, axis, -1)
    return np.moveaxis(layer_norm(xm, gain, bias, axis=-1), -1, axis)


def batch_norm_inference(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
                         mean: np.ndarray, var: np.ndarray,
                         channel_axis: int = 0) -> np.ndarray:
    """(x - mean)/sqrt(var + eps) * gain + bias with stored running stats."""
    _require(x.shape[channel_axis] == mean.shape[0],
             f"batch_norm stats extent {mean.shape[0]} != channel extent "
             f"{x.shape[channel_axis]}")
    shape = [1] * x.ndim
    shape[channel_axis] = -1
    scale = (gain / np.sqrt(var + np.float32(EPS))).astype(np.float32)
    shift = (bias - mean * scale).astype(np.float32)
    return x * scale.reshape(shape) + shift.reshape(shape)


def normalize(x: np.ndarray, kind: str, gain: np.ndarray, bias: np.ndarray,
              stats: tuple[np.ndarray, np.ndarray] | None = None,
              axis: int = -1) -> np.ndarray:
    """Dispatch for the two normalization forms used by the models."""
    if kind == "layer_norm":
        return layer_norm(x, gain, bias, axis=axis)
    if kind == "batch_norm_inference":
        if stats is None:
            raise ShapeError("batch_norm_inference requires running (mean, var)")
        return batch_norm_inference(x, gain, bias, stats[0], stats[1],
                                    channel_axis=axis)
    raise ShapeError(f"unknown normalization kind {kind!r}")


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax; rows sum to 1 for any finite input."""
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=axis, keepdims=True, dtype=np.float32)


# ---------------------------------------------------------------------------
# LSTM cell
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LstmWeights:
    """Single-layer LSTM cell parameters, gate order (i, f, g, o).

    w_ih: (4H, D) input map, w_hh: (4H, H) recurrent map, b: (4H,) combined
    bias.  ``from_pair`` accepts the common two-bias storage convention.
    """

    w_ih: np.ndarray
    w_hh: np.ndarray
    b: np.ndarray

    @classmethod
    def from_pair(cls, w_ih, w_hh, b_ih, b_hh) -> "LstmWeights":
        return cls(np.asarray(w_ih, np.float32), np.asarray(w_hh, np.float32),
                   (np.asarray(b_ih, np.float32) + np.asarray(b_hh, np.float32)))

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[1]


def _lstm_step_py(x, h, c, w: LstmWeights):
    gates = x @ w.w_ih.T + h @ w.w_hh.T + w.b
    hline = w.hidden
    i = sigmoid(gates[:, :hline])
    f = sigmoid(gates[:, hline:2 * hline])
    g = np.tanh(gates[:, 2 * hline:3 * hline])
    o = sigmoid(gates[:, 3 * hline:])
    c2 = f * c + i * g
    h2 = o * np.tanh(c2)
    return h2, c2


def lstm_step(x: np.ndarray, h: np.ndarray, c: np.ndarray,
              w: LstmWeights) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM cell update for a batch of rows.

    x: (B, D), h/c: (B, H) -> (h', c'), both (B, H) float32.
    """
    x = _as_f32(x, "x")
    h = _as_f32(h, "h")
    c = _as_f32(c, "c")
    hline = w.hidden
    _require(x.ndim == 2 and h.shape == c.shape == (x.shape[0], hline),
             f"lstm_step state shapes {h.shape}/{c.shape} do not match "
             f"(batch {x.shape[0]}, hidden {hline})")
    _require(w.w_ih.shape == (4 * hline, x.shape[1]),
             f"lstm w_ih shaped {w.w_ih.shape}, expected {(4 * hline, x.shape[1])}")
    if not (np.isfinite(x).all() and np.isfinite(h).all() and np.isfinite(c).all()):
        raise ShapeError("lstm_step requires finite inputs")
    if _BACKEND == "compiled":
        return _core.lstm_step(np.ascontiguousarray(x), np.ascontiguousarray(h),
                               np.ascontiguousarray(c), w.w_ih, w.w_hh, w.b)
    return _lstm_step_py(x, h, c, w)


# ---------------------------------------------------------------------------
# windowed attention step (the per-frame form used by the streaming cache)
# ---------------------------------------------------------------------------


def _attention_step_py(q, kwin, vwin, n_heads: int):
    b, l, c = kwin.shape
    d = c // n_heads
    qh = q.reshape(b, n_heads, d)
    kh = kwin.reshape(b, l, n_heads, d)
    vh = vwin.reshape(b, l, n_heads, d)
    scores = np.einsum("bhd,blhd->bhl", qh, kh) / np.float32(np.sqrt(d))
    alpha = softmax(scores, axis=-1)
    out = np.einsum("bhl,blhd->bhd", alpha, vh)
    return np.ascontiguousarray(out.reshape(b, c), dtype=np.float32)


def attention_step(q: np.ndarray, kwin: np.ndarray, vwin: np.ndarray,
                   n_heads: int) -> np.ndarray:
    """Scaled dot-product attention of one query frame over an L-frame window.

    q: (B, C); kwin/vwin: (B, L, C); heads split C into n_heads slices.
    Zero rows in the window act as keys/values like any others (softmax mass
    on a zero key is exp(0)), which is exactly the warm-up semantics of the
    streaming cache.
    """
    _require(q.ndim == 2 and kwin.ndim == 3 and kwin.shape[::2] == q.shape,
             f"attention_step shapes q{q.shape} kwin{kwin.shape}")
    _require(vwin.shape == kwin.shape, "k/v window shape mismatch")
    _require(q.shape[1] % n_heads == 0, "channels not divisible by head count")
    if _BACKEND == "compiled":
        return _core.attention_step(np.ascontiguousarray(q, dtype=np.float32),
                                    np.ascontiguousarray(kwin, dtype=np.float32),
                                    np.ascontiguousarray(vwin, dtype=np.float32),
                                    n_heads)
    return _attention_step_py(q, kwin, vwin, n_heads)
