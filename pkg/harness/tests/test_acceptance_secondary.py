"""Secondary acceptance: overfit sanity, gradient check, artifact export.

The overfit run trains the full manifest architecture on 20 simulated
scenes until the training-set SI-SNR beats the unprocessed mixtures by
more than 5 dB, then exports the archive + parity vectors that the
engine's tests/test_parity.py replays.  This is the slow test of the
suite (several minutes of CPU training).
"""

import json

import pytest
import torch

from avtse_harness.archive import read_archive
from avtse_harness.export import export_parity_vectors, export_weights
from avtse_harness.losses import probe_gradients
from avtse_harness.training import TrainConfig, train_tse, train_vvad
from avtse_harness.vad_augment import AugmentConfig


@pytest.fixture(scope="module")
def tse_result(scene_dir):
    torch.manual_seed(0)
    return train_tse(TrainConfig(
        scene_dir=str(scene_dir), epochs=150, batch_size=5, lr=1e-3,
        alpha=1.0, augment=AugmentConfig(delay_frames=3, flip_prob=0.05, seed=1),
        seed=0, target_improvement_db=5.6))


@pytest.fixture(scope="module")
def vvad_result():
    return train_vvad(seed=0)


def test_overfit_improves_si_snr_by_5db(tse_result):
    print(f"  unprocessed {tse_result.si_snr_unprocessed_db:.2f} dB -> "
          f"trained {tse_result.si_snr_trained_db:.2f} dB "
          f"(+{tse_result.improvement_db:.2f}) in "
          f"{len(tse_result.epoch_losses)} epochs")
    assert tse_result.improvement_db > 5.0


def test_loss_never_increases_by_more_than_1pct(tse_result):
    losses = tse_result.epoch_losses
    assert len(losses) >= 5
    for prev, cur in zip(losses, losses[1:]):
        assert cur <= prev * 1.01, (prev, cur)


def test_gradient_check_against_finite_differences():
    analytic, numeric = probe_gradients(seed=0)
    rel = float((analytic - numeric).norm() / numeric.norm())
    print(f"  relative gradient error {rel:.2e}")
    assert rel < 1e-3


def test_vvad_toy_accuracy_and_balance(vvad_result):
    print(f"  accuracy {vvad_result.accuracy:.3f}, speech fraction "
          f"{vvad_result.speech_fraction:.3f}")
    assert vvad_result.accuracy > 0.95
    assert abs(vvad_result.speech_fraction - 0.595) <= 0.05
    assert vvad_result.precision > 0.9 and vvad_result.recall > 0.9


def test_export_artifacts(tse_result, vvad_result, artifacts_dir):
    archive = artifacts_dir / "trained.avtw"
    vectors = artifacts_dir / "parity_vectors.bin"
    export_weights(vvad_result.model, tse_result.model, archive)
    export_parity_vectors(vvad_result.model, tse_result.model, vectors)
    manifest, tensors = read_archive(archive)
    assert len(tensors) == 198
    assert manifest["tse"]["width"] == 64
    _, dumps = read_archive(vectors)
    assert "probe0.mask" in dumps and "probe2.vvad.logits" in dumps
    summary = {
        "improvement_db": tse_result.improvement_db,
        "epochs": len(tse_result.epoch_losses),
        "vvad_accuracy": vvad_result.accuracy,
    }
    (artifacts_dir / "summary.json").write_text(json.dumps(summary, indent=1))
    print(f"  artifacts at {artifacts_dir}")


def test_exported_masks_are_nontrivial(tse_result):
    # the trained mask must actually separate, not pass the mixture through
    assert tse_result.si_snr_trained_db > tse_result.si_snr_unprocessed_db + 5.0
    model = tse_result.model
    model.eval()
    with torch.no_grad():
        spec = torch.randn(1, 2, 12, 161) * 0.3
        mask = model(spec, torch.ones(1, 12))
    identity_gap = float((mask[:, 0] - 1.0).abs().mean() + mask[:, 1].abs().mean())
    assert identity_gap > 0.05
