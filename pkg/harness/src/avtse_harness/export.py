"""State-dict -> archive name mapping and parity-vector dumps."""

from __future__ import annotations

import numpy as np
import torch

from .archive import write_archive
from .manifest import ARCHITECTURE
from .models import TseNet, VvadNet


def _np(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().numpy().astype(np.float32)


def _bn(out: dict, prefix: str, bn) -> None:
    out[f"{prefix}.gain"] = _np(bn.weight)
    out[f"{prefix}.bias"] = _np(bn.bias)
    out[f"{prefix}.mean"] = _np(bn.running_mean)
    out[f"{prefix}.var"] = _np(bn.running_var)


def _proj(out: dict, prefix: str, proj) -> None:
    out[f"{prefix}.w"] = _np(proj.lin.weight)
    out[f"{prefix}.b"] = _np(proj.lin.bias)
    out[f"{prefix}.prelu"] = _np(proj.pr.weight)
    out[f"{prefix}.ln.gain"] = _np(proj.ln.weight)
    out[f"{prefix}.ln.bias"] = _np(proj.ln.bias)


def collect_tensors(vvad: VvadNet, tse: TseNet) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    out["vvad.stem.conv.w"] = _np(vvad.stem.weight)
    _bn(out, "vvad.stem.bn", vvad.stem_bn)
    for i, block in enumerate(vvad.blocks):
        p = f"vvad.block{i}"
        out[f"{p}.conv1.w"] = _np(block.conv1.weight)
        _bn(out, f"{p}.bn1", block.bn1)
        out[f"{p}.conv2.w"] = _np(block.conv2.weight)
        _bn(out, f"{p}.bn2", block.bn2)
        if block.down is not None:
            out[f"{p}.down.w"] = _np(block.down.weight)
            _bn(out, f"{p}.downbn", block.downbn)
    out["vvad.temporal.w"] = _np(vvad.temporal.weight)
    out["vvad.temporal.b"] = _np(vvad.temporal.bias)
    out["vvad.cls.fc1.w"] = _np(vvad.fc1.weight)
    out["vvad.cls.fc1.b"] = _np(vvad.fc1.bias)
    out["vvad.cls.fc2.w"] = _np(vvad.fc2.weight)
    out["vvad.cls.fc2.b"] = _np(vvad.fc2.bias)

    for i, (conv, bn, pr) in enumerate(zip(tse.enc, tse.enc_bn, tse.enc_pr)):
        out[f"tse.enc{i}.conv.w"] = _np(conv.weight)
        _bn(out, f"tse.enc{i}.bn", bn)
        out[f"tse.enc{i}.prelu"] = _np(pr.weight)
    for b, block in enumerate(tse.blocks):
        p = f"tse.block{b}"
        cross = block["cross"]
        for j, (ln, conv, pr) in enumerate(((cross.ln0, cross.conv0, cross.pr0),
                                            (cross.ln1, cross.conv1, cross.pr1))):
            out[f"{p}.cross.fconv{j}.ln.gain"] = _np(ln.weight)
            out[f"{p}.cross.fconv{j}.ln.bias"] = _np(ln.bias)
            out[f"{p}.cross.fconv{j}.conv.w"] = _np(conv.weight)[:, :, 0, :]
            out[f"{p}.cross.fconv{j}.conv.b"] = _np(conv.bias)
            out[f"{p}.cross.fconv{j}.prelu"] = _np(pr.weight)
        out[f"{p}.cross.fbl.in.w"] = _np(cross.fbl.inp.weight)
        out[f"{p}.cross.fbl.in.b"] = _np(cross.fbl.inp.bias)
        out[f"{p}.cross.fbl.freq.w"] = _np(cross.fbl.freq_w)
        out[f"{p}.cross.fbl.freq.b"] = _np(cross.fbl.freq_b)
        out[f"{p}.cross.fbl.out.w"] = _np(cross.fbl.out.weight)
        out[f"{p}.cross.fbl.out.b"] = _np(cross.fbl.out.bias)
        narrow = block["narrow"]
        out[f"{p}.narrow.ln.gain"] = _np(narrow.ln.weight)
        out[f"{p}.narrow.ln.bias"] = _np(narrow.ln.bias)
        out[f"{p}.narrow.lstm.w_ih"] = _np(narrow.lstm.weight_ih_l0)
        out[f"{p}.narrow.lstm.w_hh"] = _np(narrow.lstm.weight_hh_l0)
        out[f"{p}.narrow.lstm.b_ih"] = _np(narrow.lstm.bias_ih_l0)
        out[f"{p}.narrow.lstm.b_hh"] = _np(narrow.lstm.bias_hh_l0)
        out[f"{p}.narrow.fc.w"] = _np(narrow.fc.weight)
        out[f"{p}.narrow.fc.b"] = _np(narrow.fc.bias)
        attn = block["attn"]
        for name in ("q", "k", "v", "out"):
            _proj(out, f"{p}.attn.{name}", getattr(attn, name))
    n = len(tse.stages)
    for j, (deconv, bn, pr) in enumerate(zip(tse.dec, tse.dec_bn, tse.dec_pr)):
        i = n - 1 - j
        out[f"tse.dec{i}.deconv.w"] = _np(deconv.weight)
        _bn(out, f"tse.dec{i}.bn", bn)
        out[f"tse.dec{i}.prelu"] = _np(pr.weight)
    out["tse.dec0.conv.w"] = _np(tse.final.weight)
    out["tse.dec0.conv.b"] = _np(tse.final.bias)
    return out


def export_weights(vvad: VvadNet, tse: TseNet, path) -> None:
    write_archive(path, ARCHITECTURE, collect_tensors(vvad, tse))


def make_probes(seed: int = 5150, count: int = 3, t_len: int = 16):
    """Deterministic probe inputs: spectra + VAD patterns + lip clips."""
    rng = np.random.default_rng(seed)
    probes = []
    for _ in range(count):
        tv = t_len // 4
        probes.append({
            "re": rng.standard_normal((t_len, 161)).astype(np.float32) * 0.5,
            "im": rng.standard_normal((t_len, 161)).astype(np.float32) * 0.5,
            "vad": (rng.random(tv) < 0.7).astype(np.float32),
            "lips": rng.random((tv + 4, 32, 32)).astype(np.float32),
        })
    return probes


@torch.no_grad()
def export_parity_vectors(vvad: VvadNet, tse: TseNet, path,
                          seed: int = 5150, count: int = 3) -> None:
    """Dump every sub-module's output on fixed probes, one tensor each."""
    vvad.eval()
    tse.eval()
    tensors: dict[str, np.ndarray] = {}
    probes = make_probes(seed, count)
    for idx, probe in enumerate(probes):
        pre = f"probe{idx}"
        tensors[f"{pre}.in.re"] = probe["re"]
        tensors[f"{pre}.in.im"] = probe["im"]
        tensors[f"{pre}.in.vad"] = probe["vad"]
        tensors[f"{pre}.in.lips"] = probe["lips"]
        spec = torch.from_numpy(np.stack([probe["re"], probe["im"]]))[None]
        gate = torch.from_numpy(np.repeat(probe["vad"], 4))[None]
        taps: dict[str, torch.Tensor] = {}
        tse(spec, gate, taps=taps)
        for name, value in taps.items():
            tensors[f"{pre}.{name}"] = _np(value[0])
        vtaps: dict[str, torch.Tensor] = {}
        vvad(torch.from_numpy(probe["lips"])[None], taps=vtaps)
        for name, value in vtaps.items():
            tensors[f"{pre}.{name}"] = _np(value[0])
    write_archive(path, {"format_version": 1, "kind": "parity-vectors",
                         "probes": count, "seed": seed}, tensors)
