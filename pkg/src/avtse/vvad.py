"""Visual voice activity detection: lip frames -> per-frame speech logits.

Pipeline: causal Conv3D stem (BN, ReLU, spatial max-pool) -> four per-frame
residual conv blocks -> global average pool -> causal temporal Conv1D ->
two-layer classifier.  All temporal receptive fields are padded past-only,
so logits[t] never depends on lip frames after t.

The streaming form keeps two small history buffers (stem input, temporal
features) and reproduces the offline pass frame by frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .errors import ShapeError
from .weights import WeightSet

LIP_SIZE = 32


@dataclass
class VvadState:
    """Per-stream recurrent state: input history for both temporal convs."""

    stem_frames: np.ndarray      # (1, stem_k - 1, 32, 32) most recent lip frames
    temporal_feats: np.ndarray   # (C_feat, temporal_k - 1) most recent pooled features

    def reset(self) -> None:
        self.stem_frames[:] = 0.0
        self.temporal_feats[:] = 0.0


class VvadModel:
    """Inference-only forward pass built from a weight archive."""

    def __init__(self, ws: WeightSet):
        self.w = ws
        v = ws.manifest["vvad"]
        stem = v["stem"]
        self.stem_k = tuple(stem["kernel"])
        sp = stem["spatial_pad"]
        self.stem_spec = K.ConvSpec(
            kernel=self.stem_k, stride=tuple(stem["stride"]),
            pad=((self.stem_k[0] - 1, 0), (sp, sp), (sp, sp)),
            in_channels=1, out_channels=stem["out"], causal_time=True)
        self.pool_kernel = tuple(stem["pool_kernel"])
        self.pool_stride = tuple(stem["pool_stride"])
        pp = stem["pool_pad"]
        self.pool_pad = ((0, 0), (pp, pp), (pp, pp))
        self.blocks = [tuple(b) for b in v["blocks"]]
        self.temporal_k = v["temporal"]["kernel"]
        self.temporal_out = v["temporal"]["out"]
        self.feat_dim = self.blocks[-1][1]
        self._bn_cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    # -- layers -------------------------------------------------------------

    def _bn(self, x, prefix, axis=0):
        cached = self._bn_cache.get(prefix)
        if cached is None:
            scale = (self.w.get(f"{prefix}.gain")
                     / np.sqrt(self.w.get(f"{prefix}.var") + np.float32(K.EPS)))
            shift = self.w.get(f"{prefix}.bias") - self.w.get(f"{prefix}.mean") * scale
            cached = (scale.astype(np.float32), shift.astype(np.float32))
            self._bn_cache[prefix] = cached
        shape = [1] * x.ndim
        shape[axis] = -1
        return x * cached[0].reshape(shape) + cached[1].reshape(shape)

    def _stem(self, lips: np.ndarray, pad_time: bool) -> np.ndarray:
        """(1, Tv, 32, 32) -> (C, Tv', 8, 8)."""
        spec = self.stem_spec
        if not pad_time:
            spec = K.ConvSpec(spec.kernel, spec.stride,
                              ((0, 0),) + spec.pad[1:],
                              spec.in_channels, spec.out_channels)
        x = K.conv(lips, self.w.get("vvad.stem.conv.w"), None, spec)
        x = K.relu(self._bn(x, "vvad.stem.bn"))
        return K.max_pool(x, self.pool_kernel, self.pool_stride, self.pool_pad)

    def _res_block(self, x: np.ndarray, idx: int) -> np.ndarray:
        """Per-frame 2-D residual block, expressed as a (1, 3, 3) conv in 3-D."""
        cin, cout, stride = self.blocks[idx]
        p = f"vvad.block{idx}"
        spec1 = K.ConvSpec((1, 3, 3), (1, stride, stride),
                           ((0, 0), (1, 1), (1, 1)), cin, cout)
        w1 = self.w.get(f"{p}.conv1.w").reshape(cout, cin, 1, 3, 3)
        y = K.relu(self._bn(K.conv(x, w1, None, spec1), f"{p}.bn1"))
        spec2 = K.ConvSpec((1, 3, 3), (1, 1, 1),
                           ((0, 0), (1, 1), (1, 1)), cout, cout)
        w2 = self.w.get(f"{p}.conv2.w").reshape(cout, cout, 1, 3, 3)
        y = self._bn(K.conv(y, w2, None, spec2), f"{p}.bn2")
        if cin != cout or stride != 1:
            dspec = K.ConvSpec((1, 1, 1), (1, stride, stride),
                               ((0, 0), (0, 0), (0, 0)), cin, cout)
            wd = self.w.get(f"{p}.down.w").reshape(cout, cin, 1, 1, 1)
            shortcut = self._bn(K.conv(x, wd, None, dspec), f"{p}.downbn")
        else:
            shortcut = x
        return K.relu(y + shortcut)

    def _trunk(self, lips: np.ndarray, pad_time: bool) -> np.ndarray:
        """(1, Tv, 32, 32) -> pooled features (C_feat, Tv')."""
        x = self._stem(lips, pad_time)
        for i in range(len(self.blocks)):
            x = self._res_block(x, i)
        return K.global_avg_pool(x, (2, 3))

    def temporal_features(self, feats: np.ndarray, pad_time: bool = True) -> np.ndarray:
        """Causal temporal conv over pooled features: (C_feat, Tv) -> (32, Tv')."""
        lead = self.temporal_k - 1 if pad_time else 0
        spec = K.ConvSpec((self.temporal_k,), (1,), ((lead, 0),),
                          self.feat_dim, self.temporal_out, causal_time=True)
        return K.relu(K.conv(feats, self.w.get("vvad.temporal.w"),
                             self.w.get("vvad.temporal.b"), spec))

    def _head(self, feats: np.ndarray, pad_time: bool) -> np.ndarray:
        """(C_feat, Tv) -> logits (Tv', 2).  Dropout is inactive at inference."""
        x = self.temporal_features(feats, pad_time)
        h = K.relu(K.linear(x.T, self.w.get("vvad.cls.fc1.w"),
                            self.w.get("vvad.cls.fc1.b")))
        return K.linear(h, self.w.get("vvad.cls.fc2.w"),
                        self.w.get("vvad.cls.fc2.b"))

    # -- public surface -----------------------------------------------------

    def forward(self, lips: np.ndarray) -> np.ndarray:
        """Offline pass: (Tv, 32, 32) lip crops in [0,1] -> logits (Tv, 2)."""
        lips = np.asarray(lips, dtype=np.float32)
        if lips.ndim != 3 or lips.shape[1:] != (LIP_SIZE, LIP_SIZE):
            raise ShapeError(f"expected (Tv, 32, 32) lip frames, got {lips.shape}")
        if lips.shape[0] < 1:
            raise ShapeError("need at least one lip frame")
        feats = self._trunk(lips[np.newaxis], pad_time=True)
        return self._head(feats, pad_time=True)

    def make_state(self) -> VvadState:
        return VvadState(
            stem_frames=np.zeros((1, self.stem_k[0] - 1, LIP_SIZE, LIP_SIZE),
                                 dtype=np.float32),
            temporal_feats=np.zeros((self.feat_dim, self.temporal_k - 1),
                                    dtype=np.float32))

    def step(self, lip: np.ndarray, state: VvadState) -> np.ndarray:
        """Streaming pass: one lip frame in, one (2,) logit row out."""
        lip = np.asarray(lip, dtype=np.float32)
        if lip.shape != (LIP_SIZE, LIP_SIZE):
            raise ShapeError(f"expected one (32, 32) lip frame, got {lip.shape}")
        window = np.concatenate([state.stem_frames, lip[np.newaxis, np.newaxis]],
                                axis=1)
        feats = self._trunk(window, pad_time=False)          # (C_feat, 1)
        fwin = np.concatenate([state.temporal_feats, feats], axis=1)
        logits = self._head(fwin, pad_time=False)            # (1, 2)
        state.stem_frames[:] = window[:, 1:]
        state.temporal_feats[:] = fwin[:, 1:]
        return logits[0]


def classify(logits: np.ndarray) -> np.ndarray:
    """Per-frame argmax with ties resolved to non-speech (label 0)."""
    logits = np.asarray(logits)
    if logits.ndim != 2 or logits.shape[1] != 2:
        raise ShapeError(f"expected (Tv, 2) logits, got {logits.shape}")
    if not np.isfinite(logits).all():
        raise ShapeError("logits must be finite")
    return (logits[:, 1] > logits[:, 0]).astype(np.int8)
