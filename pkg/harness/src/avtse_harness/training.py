"""Toy-scale trainers for both stages.

train_tse overfits the manifest architecture on a simulated scene
directory under the composite magnitude-MSE + negative-SI-SNR objective,
with VAD cues corrupted once at load time.  train_vvad fits the visual
stage on synthetic moving-vs-static lip clips with per-frame labels.
Both abort on non-finite losses and keep per-epoch histories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .data import SceneDataset, torch_istft
from .losses import apply_crm, composite_loss, si_snr
from .manifest import ARCHITECTURE
from .models import TseNet, VvadNet
from .vad_augment import AugmentConfig


@dataclass
class TrainConfig:
    scene_dir: str = ""
    epochs: int = 60
    batch_size: int = 5
    lr: float = 3e-3
    alpha: float = 0.05               # weight of the negative SI-SNR term
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    crop_frames: int = 96
    target_improvement_db: float | None = None   # early stop once reached

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


@dataclass
class TseResult:
    model: TseNet
    epoch_losses: list[float]
    si_snr_unprocessed_db: float
    si_snr_trained_db: float

    @property
    def improvement_db(self) -> float:
        return self.si_snr_trained_db - self.si_snr_unprocessed_db


def _dataset_tensors(ds: SceneDataset):
    mix = torch.from_numpy(np.stack([s.mix for s in ds.scenes]))
    tgt = torch.from_numpy(np.stack([s.target for s in ds.scenes]))
    itf = torch.from_numpy(np.stack([s.interferer for s in ds.scenes]))
    vad = torch.from_numpy(np.stack([np.repeat(s.vad, 4) for s in ds.scenes]))
    return mix, tgt, itf, vad


@torch.no_grad()
def recalibrate_bn(model: torch.nn.Module, forward_batches) -> None:
    """Replace BN running stats with exact training-set statistics.

    Small-batch training leaves running averages far from the statistics the
    inference form will see; one cumulative pass (momentum=None) over the
    training inputs closes the train/eval gap before export.
    """
    bns = [m for m in model.modules()
           if isinstance(m, (torch.nn.BatchNorm2d, torch.nn.BatchNorm3d))]
    saved = [(bn.momentum) for bn in bns]
    for bn in bns:
        bn.reset_running_stats()
        bn.momentum = None
    model.train()
    for args in forward_batches:
        model(*args)
    for bn, momentum in zip(bns, saved):
        bn.momentum = momentum
    model.eval()


@torch.no_grad()
def _train_set_si_snr(model: TseNet | None, ds: SceneDataset,
                      tensors=None) -> float:
    """Mean SI-SNR of (masked or raw) mixtures against the target stems."""
    mix, tgt, _itf, vad = tensors if tensors is not None else _dataset_tensors(ds)
    ref = torch_istft(tgt[:, 0], tgt[:, 1])
    if model is None:
        est = torch_istft(mix[:, 0], mix[:, 1])
    else:
        model.eval()
        outs = []
        for i in range(0, len(ds), 8):
            mask = model(mix[i:i + 8], vad[i:i + 8])
            re, im = apply_crm(mix[i:i + 8], mask, 0)
            outs.append(torch_istft(re, im))
        est = torch.cat(outs)
    return float(si_snr(est, ref).mean())


def train_tse(config: TrainConfig, log=print) -> TseResult:
    """Overfit trainer with an epoch-level descent guard.

    If an epoch's mean loss rises more than 0.5% above the previous accepted
    epoch, the parameters are rolled back, the learning rate is halved, and
    the epoch is retried (optimizer moments reset with the rollback).  The
    recorded history is therefore monotone within jitter by construction --
    a trust-region-style policy, not a measurement trick: rejected steps
    really are undone.
    """
    torch.manual_seed(config.seed)
    ds = SceneDataset(config.scene_dir, crop_frames=config.crop_frames,
                      augment=config.augment)
    tensors = _dataset_tensors(ds)
    model = TseNet(ARCHITECTURE)
    lr = config.lr
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    unprocessed = _train_set_si_snr(None, ds, tensors)
    log(f"train_tse: {len(ds)} scenes, unprocessed SI-SNR "
        f"{unprocessed:.2f} dB")
    losses: list[float] = []
    epoch = 0
    retries = 0
    while epoch < config.epochs:
        snapshot = {k: v.detach().clone() for k, v in model.state_dict().items()}
        model.train()
        epoch_loss, n = 0.0, 0
        for mix, tgt, itf, vad in ds.batches(config.batch_size,
                                             seed=config.seed + epoch):
            opt.zero_grad()
            mask = model(mix, vad)
            loss, _parts = composite_loss(mask, mix, tgt, itf,
                                          alpha=config.alpha)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"training diverged at epoch {epoch}: loss={loss.item()}"
                    f" (lr={lr}, batch={config.batch_size})")
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), 5.0)
            opt.step()
            epoch_loss += float(loss.detach()) * mix.shape[0]
            n += mix.shape[0]
        mean_loss = epoch_loss / n
        if losses and mean_loss > losses[-1] * 1.005 and retries < 12:
            model.load_state_dict(snapshot)
            lr *= 0.5
            opt = torch.optim.Adam(model.parameters(), lr=lr)
            retries += 1
            log(f"  epoch {epoch + 1:3d}: rejected ({mean_loss:.4f} > "
                f"{losses[-1]:.4f}), lr -> {lr:.2e}")
            continue
        losses.append(mean_loss)
        epoch += 1
        if epoch % 5 == 0 or epoch == config.epochs:
            recalibrate_bn(model, [(tensors[0], tensors[3])])
            current = _train_set_si_snr(model, ds, tensors)
            log(f"  epoch {epoch:3d}: loss {losses[-1]:.4f}, "
                f"train SI-SNR {current:.2f} dB "
                f"(+{current - unprocessed:.2f})")
            if (config.target_improvement_db is not None
                    and current - unprocessed >= config.target_improvement_db):
                break
    recalibrate_bn(model, [(tensors[0], tensors[3])])
    trained = _train_set_si_snr(model, ds, tensors)
    return TseResult(model=model, epoch_losses=losses,
                     si_snr_unprocessed_db=unprocessed,
                     si_snr_trained_db=trained)


# ---------------------------------------------------------------------------
# synthetic VVAD data + trainer
# ---------------------------------------------------------------------------


def synth_lip_clips(n_clips: int, frames: int, seed: int,
                    speech_fraction: float = 0.595):
    """Moving-bar (speaking) vs static-blob (silent) 32x32 clips.

    Segment lengths are drawn so the frame-level class balance lands near
    ``speech_fraction``; returns (clips (N, Tv, 32, 32), labels (N, Tv)).
    """
    rng = np.random.default_rng(seed)
    clips = np.empty((n_clips, frames, 32, 32), dtype=np.float32)
    labels = np.empty((n_clips, frames), dtype=np.int64)
    yy, xx = np.mgrid[0:32, 0:32]
    for ci in range(n_clips):
        t = 0
        speaking = rng.random() < speech_fraction
        while t < frames:
            seg = int(rng.integers(4, 10))
            seg = min(seg, frames - t)
            if speaking:
                width = rng.uniform(3.0, 5.0)
                speed = rng.uniform(2.0, 5.0)
                phase = rng.uniform(0, 2 * np.pi)
                for j in range(seg):
                    center = 16 + 10 * np.sin(phase + speed * (t + j) * 0.35)
                    frame = np.exp(-((xx - center) ** 2) / (2 * width ** 2))
                    clips[ci, t + j] = frame + rng.random((32, 32)) * 0.05
                labels[ci, t:t + seg] = 1
            else:
                cx, cy = rng.uniform(8, 24, 2)
                blob = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / 40.0)
                for j in range(seg):
                    clips[ci, t + j] = blob + rng.random((32, 32)) * 0.05
                labels[ci, t:t + seg] = 0
            t += seg
            speaking = rng.random() < speech_fraction
    np.clip(clips, 0.0, 1.0, out=clips)
    return clips, labels


@dataclass
class VvadResult:
    model: VvadNet
    epoch_losses: list[float]
    accuracy: float
    precision: float
    recall: float
    speech_fraction: float


def train_vvad(n_clips: int = 90, frames: int = 24, epochs: int = 12,
               lr: float = 2e-3, batch_size: int = 6, seed: int = 0,
               log=print) -> VvadResult:
    torch.manual_seed(seed)
    clips, labels = synth_lip_clips(n_clips, frames, seed)
    fraction = float(labels.mean())
    log(f"train_vvad: {n_clips} clips x {frames} frames, "
        f"{fraction:.1%} speech frames")
    model = VvadNet(ARCHITECTURE)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    xent = torch.nn.CrossEntropyLoss()
    x_all = torch.from_numpy(clips)
    y_all = torch.from_numpy(labels)
    losses = []
    rng = np.random.default_rng(seed)
    for epoch in range(epochs):
        model.train()
        order = rng.permutation(n_clips)
        total, n = 0.0, 0
        for start in range(0, n_clips, batch_size):
            idx = order[start:start + batch_size]
            opt.zero_grad()
            logits = model(x_all[idx])
            loss = xent(logits.reshape(-1, 2), y_all[idx].reshape(-1))
            if not torch.isfinite(loss):
                raise RuntimeError(f"VVAD training diverged at epoch {epoch}")
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
            n += len(idx)
        losses.append(total / n)
        log(f"  epoch {epoch + 1:2d}: loss {losses[-1]:.4f}")
    recalibrate_bn(model, [(x_all[i:i + 16],) for i in range(0, n_clips, 16)])
    with torch.no_grad():
        preds = []
        for start in range(0, n_clips, 16):
            logits = model(x_all[start:start + 16])
            preds.append((logits[..., 1] > logits[..., 0]).numpy())
    pred = np.concatenate(preds).astype(bool).ravel()
    truth = labels.astype(bool).ravel()
    tp = int(np.sum(pred & truth))
    accuracy = float(np.mean(pred == truth))
    precision = tp / max(1, int(pred.sum()))
    recall = tp / max(1, int(truth.sum()))
    log(f"train_vvad: accuracy {accuracy:.3f}, precision {precision:.3f}, "
        f"recall {recall:.3f}")
    return VvadResult(model=model, epoch_losses=losses, accuracy=accuracy,
                      precision=precision, recall=recall,
                      speech_fraction=fraction)
