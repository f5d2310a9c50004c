"""Composite training objective and its finite-difference probe.

loss = sum over both sources of MSE(|estimated|, |reference|) on magnitude
spectrograms, plus alpha * (negative SI-SNR of the reconstructed target
waveform).  SI-SNR zero-means both signals and projects the estimate onto
the reference; alpha defaults to 0.05.
"""

from __future__ import annotations

import torch

from .data import torch_istft

EPS = 1e-8


def apply_crm(spec: torch.Tensor, mask: torch.Tensor, source: int):
    """Complex multiply of mask channels (2s, 2s+1) onto spec (B, 2, T, F)."""
    m_re, m_im = mask[:, 2 * source], mask[:, 2 * source + 1]
    re = spec[:, 0] * m_re - spec[:, 1] * m_im
    im = spec[:, 0] * m_im + spec[:, 1] * m_re
    return re, im


def si_snr(est: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
    """Batched scale-invariant SNR in dB, differentiable; (B, N) inputs."""
    est = est - est.mean(dim=-1, keepdim=True)
    ref = ref - ref.mean(dim=-1, keepdim=True)
    proj = (est * ref).sum(-1, keepdim=True) / ((ref * ref).sum(-1, keepdim=True)
                                                + EPS) * ref
    noise = est - proj
    ratio = (proj * proj).sum(-1) / ((noise * noise).sum(-1) + EPS)
    return 10.0 * torch.log10(ratio + EPS)


def composite_loss(mask: torch.Tensor, mix: torch.Tensor,
                   target: torch.Tensor, interferer: torch.Tensor,
                   alpha: float = 0.05) -> tuple[torch.Tensor, dict]:
    """mask (B, 4, T, F); mix/target/interferer (B, 2, T, F) spectra."""
    total = mask.new_zeros(())
    parts = {}
    for source, ref in ((0, target), (1, interferer)):
        re, im = apply_crm(mix, mask, source)
        est_mag = torch.sqrt(re ** 2 + im ** 2 + EPS)
        ref_mag = torch.sqrt(ref[:, 0] ** 2 + ref[:, 1] ** 2 + EPS)
        mse = torch.mean((est_mag - ref_mag) ** 2)
        parts[f"mag_mse_{source}"] = float(mse.detach())
        total = total + mse
    re, im = apply_crm(mix, mask, 0)
    est_wav = torch_istft(re, im)
    ref_wav = torch_istft(target[:, 0], target[:, 1])
    snr = si_snr(est_wav, ref_wav).mean()
    parts["si_snr_db"] = float(snr.detach())
    total = total + alpha * (-snr)
    return total, parts


class ProbeModel(torch.nn.Module):
    """Five-parameter model for the finite-difference gradient check.

    Produces a (1, 4, T, F) mask from a fixed feature map via one weight per
    mask channel plus a shared bias, through tanh -- tiny but exercises the
    full composite loss graph.
    """

    def __init__(self):
        super().__init__()
        self.gains = torch.nn.Parameter(torch.tensor([0.3, -0.2, 0.15, 0.1],
                                                     dtype=torch.float64))
        self.bias = torch.nn.Parameter(torch.tensor(0.05, dtype=torch.float64))

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.gains[None, :, None, None] * feats + self.bias)


def probe_gradients(seed: int = 0):
    """Analytic vs central-difference gradients of the composite loss.

    Returns (analytic, numeric) flat float64 vectors over the 5 parameters.
    """
    g = torch.Generator().manual_seed(seed)
    t_len = 12
    feats = torch.randn(1, 4, t_len, 161, generator=g, dtype=torch.float64)
    mix = torch.randn(1, 2, t_len, 161, generator=g, dtype=torch.float64)
    target = mix * 0.6 + 0.1 * torch.randn(1, 2, t_len, 161, generator=g,
                                           dtype=torch.float64)
    interferer = mix - target
    model = ProbeModel()

    def loss_value():
        loss, _ = composite_loss(model(feats), mix, target, interferer)
        return loss

    loss = loss_value()
    loss.backward()
    analytic = torch.cat([model.gains.grad.flatten(),
                          model.bias.grad.flatten()]).clone()

    numeric = torch.zeros(5, dtype=torch.float64)
    params = [(model.gains, i) for i in range(4)] + [(model.bias, None)]
    h = 1e-6
    for out_idx, (param, idx) in enumerate(params):
        with torch.no_grad():
            if idx is None:
                param += h
            else:
                param[idx] += h
        hi = float(loss_value().detach())
        with torch.no_grad():
            if idx is None:
                param -= 2 * h
            else:
                param[idx] -= 2 * h
        lo = float(loss_value().detach())
        with torch.no_grad():
            if idx is None:
                param += h
            else:
                param[idx] += h
        numeric[out_idx] = (hi - lo) / (2 * h)
    return analytic, numeric
