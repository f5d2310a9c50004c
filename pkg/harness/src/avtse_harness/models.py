"""Torch builds of the two stages, shaped by the architecture manifest.

Layer geometry, padding conventions and activation choices replicate the
engine's inference semantics exactly (causal time pads, centered frequency
pads, zero-padded 50-frame attention windows), so eval-mode outputs here
are the parity reference for the engine's own forward passes.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


class ResBlock2d(nn.Module):
    def __init__(self, cin, cout, stride):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        if cin != cout or stride != 1:
            self.down = nn.Conv2d(cin, cout, 1, stride=stride, bias=False)
            self.downbn = nn.BatchNorm2d(cout)
        else:
            self.down = None

    def forward(self, x):
        y = F.relu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        short = self.downbn(self.down(x)) if self.down is not None else x
        return F.relu(y + short)


class VvadNet(nn.Module):
    def __init__(self, man):
        super().__init__()
        v = man["vvad"]
        stem = v["stem"]
        self.time_pad = stem["kernel"][0] - 1
        self.stem = nn.Conv3d(1, stem["out"], tuple(stem["kernel"]),
                              stride=tuple(stem["stride"]),
                              padding=(0, stem["spatial_pad"], stem["spatial_pad"]),
                              bias=False)
        self.stem_bn = nn.BatchNorm3d(stem["out"])
        self.pool = nn.MaxPool3d(tuple(stem["pool_kernel"]),
                                 stride=tuple(stem["pool_stride"]),
                                 padding=(0, stem["pool_pad"], stem["pool_pad"]))
        self.blocks = nn.ModuleList(
            [ResBlock2d(cin, cout, s) for cin, cout, s in v["blocks"]])
        t = v["temporal"]
        self.temporal_pad = t["kernel"] - 1
        self.temporal = nn.Conv1d(v["blocks"][-1][1], t["out"], t["kernel"])
        self.fc1 = nn.Linear(t["out"], v["classifier_hidden"])
        self.drop = nn.Dropout(v["dropout"])
        self.fc2 = nn.Linear(v["classifier_hidden"], 2)

    def forward(self, lips, taps=None):
        """(B, Tv, 32, 32) in [0,1] -> logits (B, Tv, 2)."""
        x = F.pad(lips.unsqueeze(1), (0, 0, 0, 0, self.time_pad, 0))
        x = self.pool(F.relu(self.stem_bn(self.stem(x))))   # (B, 32, Tv, 8, 8)
        if taps is not None:
            taps["vvad.stem"] = x
        b, c, tv, hh, ww = x.shape
        y = x.permute(0, 2, 1, 3, 4).reshape(b * tv, c, hh, ww)
        for block in self.blocks:
            y = block(y)
        feats = y.mean(dim=(2, 3)).reshape(b, tv, -1)        # (B, Tv, 128)
        if taps is not None:
            taps["vvad.feats"] = feats.transpose(1, 2)       # (B, 128, Tv)
        v3 = F.relu(self.temporal(F.pad(feats.transpose(1, 2),
                                        (self.temporal_pad, 0))))
        if taps is not None:
            taps["vvad.temporal"] = v3                       # (B, 32, Tv)
        h = self.drop(F.relu(self.fc1(v3.transpose(1, 2))))
        logits = self.fc2(h)
        if taps is not None:
            taps["vvad.logits"] = logits
        return logits


class FullBandLinear(nn.Module):
    """Channel expansion, one independent (F -> F) map per expanded channel,
    channel restore; SiLU on the two channel maps."""

    def __init__(self, width, hidden, f_low):
        super().__init__()
        self.inp = nn.Linear(width, hidden)
        self.freq_w = nn.Parameter(torch.empty(hidden, f_low, f_low))
        self.freq_b = nn.Parameter(torch.zeros(hidden, f_low))
        nn.init.uniform_(self.freq_w, -1 / math.sqrt(f_low), 1 / math.sqrt(f_low))
        self.out = nn.Linear(hidden, width)

    def forward(self, x):
        # x: (B, T, F, C)
        y = F.silu(self.inp(x))                              # (B, T, F, H)
        z = torch.einsum("hgf,btfh->btgh", self.freq_w, y) + self.freq_b.T
        return F.silu(self.out(z))                           # (B, T, F, C)


class CrossBand(nn.Module):
    def __init__(self, width, hidden, kernel, f_low):
        super().__init__()
        self.ln0 = nn.LayerNorm(width)
        self.conv0 = nn.Conv2d(width, width, (1, kernel),
                               padding=(0, kernel // 2))
        self.pr0 = nn.PReLU(width)
        self.fbl = FullBandLinear(width, hidden, f_low)
        self.ln1 = nn.LayerNorm(width)
        self.conv1 = nn.Conv2d(width, width, (1, kernel),
                               padding=(0, kernel // 2))
        self.pr1 = nn.PReLU(width)

    def _fconv(self, x, ln, conv, pr):
        # x: (B, C, T, F); LayerNorm over channels at each (t, f)
        y = ln(x.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)
        return pr(conv(y))

    def forward(self, x):
        y = self._fconv(x, self.ln0, self.conv0, self.pr0)
        y = self.fbl(y.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)
        y = self._fconv(y, self.ln1, self.conv1, self.pr1)
        return x + y


class NarrowBand(nn.Module):
    def __init__(self, width, units):
        super().__init__()
        self.ln = nn.LayerNorm(width)
        self.lstm = nn.LSTM(width, units, batch_first=True)
        self.fc = nn.Linear(units, width)

    def forward(self, x):
        # x: (B, C, T, F) -> sequences per frequency bin
        b, c, t, f = x.shape
        y = self.ln(x.permute(0, 3, 2, 1))                   # (B, F, T, C)
        y = y.reshape(b * f, t, c)
        y, _ = self.lstm(y)
        y = self.fc(y).reshape(b, f, t, c)
        return x + y.permute(0, 3, 2, 1)


class Projection(nn.Module):
    """Linear + PReLU + LayerNorm, applied channel-last."""

    def __init__(self, width):
        super().__init__()
        self.lin = nn.Linear(width, width)
        self.pr = nn.PReLU(width)
        self.ln = nn.LayerNorm(width)

    def forward(self, x):
        y = self.lin(x)
        y = torch.where(y > 0, y, self.pr.weight * y)
        return self.ln(y)


class ChunkAttention(nn.Module):
    def __init__(self, width, heads, window):
        super().__init__()
        self.heads = heads
        self.window = window
        self.q = Projection(width)
        self.k = Projection(width)
        self.v = Projection(width)
        self.out = Projection(width)

    def forward(self, x):
        # x: (B, C, T, F)
        b, c, t, f = x.shape
        xt = x.permute(0, 3, 2, 1)                           # (B, F, T, C)
        q, k, v = self.q(xt), self.k(xt), self.v(xt)
        d = c // self.heads
        qh = q.reshape(b, f, t, self.heads, d)
        pad = x.new_zeros(b, f, self.window - 1, c)
        kp = torch.cat([pad, k], dim=2).reshape(b, f, -1, self.heads, d)
        vp = torch.cat([pad, v], dim=2).reshape(b, f, -1, self.heads, d)
        scores = torch.stack(
            [(qh * kp[:, :, l:l + t]).sum(-1) for l in range(self.window)],
            dim=-1) / math.sqrt(d)                           # (B, F, T, H, L)
        alpha = torch.softmax(scores, dim=-1)
        acc = x.new_zeros(b, f, t, self.heads, d)
        for l in range(self.window):
            acc = acc + alpha[..., l].unsqueeze(-1) * vp[:, :, l:l + t]
        y = self.out(acc.reshape(b, f, t, c))
        return x + y.permute(0, 3, 2, 1)


class TseNet(nn.Module):
    def __init__(self, man):
        super().__init__()
        t = man["tse"]
        self.width = t["width"]
        self.tk, self.fk = t["time_kernel"], t["freq_kernel"]
        self.stages = [tuple(s) for s in t["encoder"]]
        f_low = t["freq_ladder"][-1]
        self.enc = nn.ModuleList()
        self.enc_bn = nn.ModuleList()
        self.enc_pr = nn.ModuleList()
        for cin, cout, stride in self.stages:
            self.enc.append(nn.Conv2d(cin, cout, (self.tk, self.fk),
                                      stride=(1, stride),
                                      padding=(0, self.fk // 2), bias=False))
            self.enc_bn.append(nn.BatchNorm2d(cout))
            self.enc_pr.append(nn.PReLU(cout))
        self.blocks = nn.ModuleList()
        for _ in range(t["blocks"]):
            self.blocks.append(nn.ModuleDict({
                "cross": CrossBand(self.width, t["crossband"]["hidden"],
                                   t["crossband"]["fconv_kernel"], f_low),
                "narrow": NarrowBand(self.width, t["narrowband"]["lstm_units"]),
                "attn": ChunkAttention(self.width, t["attention"]["heads"],
                                       t["attention"]["window"]),
            }))
        self.dec = nn.ModuleList()
        self.dec_bn = nn.ModuleList()
        self.dec_pr = nn.ModuleList()
        for i in range(len(self.stages) - 1, 0, -1):
            cin, cout = self.stages[i][1], self.stages[i][0]
            self.dec.append(nn.ConvTranspose2d(cin, cout, (self.tk, self.fk),
                                               stride=(1, 2),
                                               padding=(0, self.fk // 2),
                                               bias=False))
            self.dec_bn.append(nn.BatchNorm2d(cout))
            self.dec_pr.append(nn.PReLU(cout))
        self.final = nn.Conv2d(self.stages[0][1], t["mask_channels"],
                               (self.tk, self.fk), padding=(0, self.fk // 2))

    @staticmethod
    def fuse(spec, vad_aligned):
        """spec (B, 2, T, F) + per-audio-frame gate (B, T) -> (B, 4, T, F)."""
        gate = vad_aligned[:, None, :, None]
        return torch.cat([spec, spec * gate], dim=1)

    def forward(self, spec, vad_aligned, taps=None):
        x = self.fuse(spec, vad_aligned)
        if taps is not None:
            taps["fuse"] = x
        skips = []
        for i, (conv, bn, pr) in enumerate(zip(self.enc, self.enc_bn,
                                               self.enc_pr)):
            x = pr(bn(conv(F.pad(x, (0, 0, self.tk - 1, 0)))))
            skips.append(x)
            if taps is not None:
                taps[f"enc{i}"] = x
        h = x
        for b, block in enumerate(self.blocks):
            h = block["cross"](h)
            if taps is not None:
                taps[f"block{b}.cross"] = h
            h = block["narrow"](h)
            if taps is not None:
                taps[f"block{b}.narrow"] = h
            h = block["attn"](h)
            if taps is not None:
                taps[f"block{b}.attn"] = h
        t_len = spec.shape[2]
        for j, (deconv, bn, pr) in enumerate(zip(self.dec, self.dec_bn,
                                                 self.dec_pr)):
            skip = skips[len(self.stages) - 1 - j]
            h = pr(bn(deconv(h + skip)[:, :, :t_len]))
        mask = torch.tanh(self.final(F.pad(h + skips[0],
                                           (0, 0, self.tk - 1, 0))))
        if taps is not None:
            taps["mask"] = mask
        return mask
