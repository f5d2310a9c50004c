"""Architecture manifest: every decided hyperparameter, in one record.

The manifest travels inside the weight archive and is the single source of
truth for tensor shapes -- models build their layer graphs from it, never
from constants, so any archive/architecture drift surfaces as a named
mismatch at load time.
"""

from __future__ import annotations

from .errors import ManifestError

FORMAT_VERSION = 1

DEFAULT_MANIFEST = {
    "format_version": FORMAT_VERSION,
    "audio": {
        "sample_rate": 16000,
        "frame_len": 320,
        "hop": 160,
        "bins": 161,
    },
    "video": {"fps": 25, "lip_size": 32, "audio_frames_per_video_frame": 4},
    "vvad": {
        # Conv3D stem -> BN -> ReLU -> max pool, then per-frame ResNet blocks
        "stem": {"out": 32, "kernel": [5, 7, 7], "stride": [1, 2, 2],
                 "spatial_pad": 3,
                 "pool_kernel": [1, 3, 3], "pool_stride": [1, 2, 2],
                 "pool_pad": 1},
        # (in, out, spatial stride); 8x8 -> 8x8 -> 4x4 -> 2x2 -> 2x2
        "blocks": [[32, 32, 1], [32, 48, 2], [48, 64, 2], [64, 128, 1]],
        "temporal": {"out": 32, "kernel": 5},
        "classifier_hidden": 64,
        "dropout": 0.3,  # inactive at inference, recorded for training
    },
    "tse": {
        "width": 64,
        "time_kernel": 2,
        "freq_kernel": 5,
        # (in, out, frequency stride); 161 -> 161 -> 81 -> 41 -> 21
        "encoder": [[4, 64, 1], [64, 64, 2], [64, 64, 2], [64, 64, 2]],
        "freq_ladder": [161, 161, 81, 41, 21],
        "blocks": 2,
        "crossband": {"fconv_kernel": 5, "hidden": 128},
        "narrowband": {"lstm_units": 64},
        "attention": {"heads": 4, "window": 50},
        "mask_channels": 4,
    },
    # the newest VAD label gates its own 4 audio frames; no lookahead
    "vad_hold": "own-4-frames",
    "augment_defaults": {"delay_frames": 5, "flip_prob": 0.05},
}


def tse_freq_bins(manifest) -> list[int]:
    return list(manifest["tse"]["freq_ladder"])


def _vvad_entries(m) -> dict[str, tuple[int, ...]]:
    v = m["vvad"]
    k = v["stem"]["kernel"]
    out = {
        "vvad.stem.conv.w": (v["stem"]["out"], 1, k[0], k[1], k[2]),
        "vvad.stem.bn.gain": (v["stem"]["out"],),
        "vvad.stem.bn.bias": (v["stem"]["out"],),
        "vvad.stem.bn.mean": (v["stem"]["out"],),
        "vvad.stem.bn.var": (v["stem"]["out"],),
    }
    for i, (cin, cout, stride) in enumerate(v["blocks"]):
        p = f"vvad.block{i}"
        out[f"{p}.conv1.w"] = (cout, cin, 3, 3)
        out[f"{p}.conv2.w"] = (cout, cout, 3, 3)
        for j in (1, 2):
            for stat in ("gain", "bias", "mean", "var"):
                out[f"{p}.bn{j}.{stat}"] = (cout,)
        if cin != cout or stride != 1:
            out[f"{p}.down.w"] = (cout, cin, 1, 1)
            for stat in ("gain", "bias", "mean", "var"):
                out[f"{p}.downbn.{stat}"] = (cout,)
    tl = v["temporal"]
    last_block_out = v["blocks"][-1][1]
    out["vvad.temporal.w"] = (tl["out"], last_block_out, tl["kernel"])
    out["vvad.temporal.b"] = (tl["out"],)
    hidden = v["classifier_hidden"]
    out["vvad.cls.fc1.w"] = (hidden, tl["out"])
    out["vvad.cls.fc1.b"] = (hidden,)
    out["vvad.cls.fc2.w"] = (2, hidden)
    out["vvad.cls.fc2.b"] = (2,)
    return out


def _tse_entries(m) -> dict[str, tuple[int, ...]]:
    t = m["tse"]
    tk, fk = t["time_kernel"], t["freq_kernel"]
    f_low = t["freq_ladder"][-1]
    width = t["width"]
    out: dict[str, tuple[int, ...]] = {}
    for i, (cin, cout, _stride) in enumerate(t["encoder"]):
        p = f"tse.enc{i}"
        out[f"{p}.conv.w"] = (cout, cin, tk, fk)
        for stat in ("gain", "bias", "mean", "var"):
            out[f"{p}.bn.{stat}"] = (cout,)
        out[f"{p}.prelu"] = (cout,)
    for b in range(t["blocks"]):
        p = f"tse.block{b}"
        ck = t["crossband"]["fconv_kernel"]
        hidden = t["crossband"]["hidden"]
        for j in (0, 1):
            out[f"{p}.cross.fconv{j}.ln.gain"] = (width,)
            out[f"{p}.cross.fconv{j}.ln.bias"] = (width,)
            out[f"{p}.cross.fconv{j}.conv.w"] = (width, width, ck)
            out[f"{p}.cross.fconv{j}.conv.b"] = (width,)
            out[f"{p}.cross.fconv{j}.prelu"] = (width,)
        out[f"{p}.cross.fbl.in.w"] = (hidden, width)
        out[f"{p}.cross.fbl.in.b"] = (hidden,)
        out[f"{p}.cross.fbl.freq.w"] = (hidden, f_low, f_low)
        out[f"{p}.cross.fbl.freq.b"] = (hidden, f_low)
        out[f"{p}.cross.fbl.out.w"] = (width, hidden)
        out[f"{p}.cross.fbl.out.b"] = (width,)
        units = t["narrowband"]["lstm_units"]
        out[f"{p}.narrow.ln.gain"] = (width,)
        out[f"{p}.narrow.ln.bias"] = (width,)
        out[f"{p}.narrow.lstm.w_ih"] = (4 * units, width)
        out[f"{p}.narrow.lstm.w_hh"] = (4 * units, units)
        out[f"{p}.narrow.lstm.b_ih"] = (4 * units,)
        out[f"{p}.narrow.lstm.b_hh"] = (4 * units,)
        out[f"{p}.narrow.fc.w"] = (width, units)
        out[f"{p}.narrow.fc.b"] = (width,)
        for proj in ("q", "k", "v", "out"):
            out[f"{p}.attn.{proj}.w"] = (width, width)
            out[f"{p}.attn.{proj}.b"] = (width,)
            out[f"{p}.attn.{proj}.prelu"] = (width,)
            out[f"{p}.attn.{proj}.ln.gain"] = (width,)
            out[f"{p}.attn.{proj}.ln.bias"] = (width,)
    n_dec = len(t["encoder"]) - 1
    for i in range(n_dec, 0, -1):
        cin, cout = t["encoder"][i][1], t["encoder"][i][0]
        p = f"tse.dec{i}"
        out[f"{p}.deconv.w"] = (cin, cout, tk, fk)  # transposed layout (in, out, kt, kf)
        for stat in ("gain", "bias", "mean", "var"):
            out[f"{p}.bn.{stat}"] = (cout,)
        out[f"{p}.prelu"] = (cout,)
    out["tse.dec0.conv.w"] = (t["mask_channels"], t["encoder"][0][1], tk, fk)
    out["tse.dec0.conv.b"] = (t["mask_channels"],)
    return out


def tensor_table(manifest) -> dict[str, tuple[int, ...]]:
    """Every tensor the manifest-defined architecture requires, name -> shape."""
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ManifestError(
            f"manifest format_version {manifest.get('format_version')!r} != {FORMAT_VERSION}")
    table = _vvad_entries(manifest)
    table.update(_tse_entries(manifest))
    return table


def fan_in(name: str, shape: tuple[int, ...]) -> int:
    """Fan-in used by the seeded test initializer (uniform +-1/sqrt(fan_in))."""
    if ".fbl.freq.w" in name:  # per-channel frequency map: last axis is the input
        return shape[-1]
    if ".lstm.w_" in name:
        return shape[1]
    if name.endswith(".w"):
        if len(shape) >= 3:  # conv kernels: in_channels * kernel volume
            receptive = 1
            for k in shape[2:]:
                receptive *= k
            cin = shape[0] if ".deconv." in name else shape[1]
            return cin * receptive
        if len(shape) == 2:
            return shape[1]
    return 1
