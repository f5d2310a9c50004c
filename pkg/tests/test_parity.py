"""Cross-implementation parity against training-harness exports.

The harness (a separate package with its own archive writer) trains the
manifest architecture, exports a weight archive plus probe dumps of every
sub-module's input/output, and this test replays each probe through this
engine.  Skipped when no artifacts are present; produce them with:

    pytest harness/tests -q        # writes harness/artifacts/
"""

import os
from pathlib import Path

import numpy as np
import pytest

from avtse.frontend import ComplexSpectrogram
from avtse.tse import TseModel, align_vad, fuse
from avtse.vvad import VvadModel
from avtse.weights import load_archive_raw, load_weights

ARTIFACTS = Path(os.environ.get(
    "AVTSE_PARITY_DIR",
    Path(__file__).resolve().parent.parent / "harness" / "artifacts"))

TOLERANCE = 1e-4


def _require_artifacts():
    archive = ARTIFACTS / "trained.avtw"
    vectors = ARTIFACTS / "parity_vectors.bin"
    if not (archive.exists() and vectors.exists()):
        pytest.skip(f"no harness artifacts under {ARTIFACTS}")
    return archive, vectors


@pytest.fixture(scope="module")
def parity():
    archive, vectors = _require_artifacts()
    ws = load_weights(archive)  # full manifest validation of the foreign writer
    dumps = load_archive_raw(vectors)
    assert dumps.manifest.get("kind") == "parity-vectors"
    return ws, dumps.tensors, int(dumps.manifest["probes"])


def test_harness_archive_loads_cleanly():
    archive, _ = _require_artifacts()
    ws = load_weights(archive)
    assert ws.tensors


def test_tse_submodule_parity(parity):
    ws, dumps, n_probes = parity
    model = TseModel(ws)
    worst = {}
    for p in range(n_probes):
        pre = f"probe{p}"
        spec = ComplexSpectrogram(dumps[f"{pre}.in.re"], dumps[f"{pre}.in.im"])
        labels = dumps[f"{pre}.in.vad"].astype(np.int8)

        x = fuse(spec, align_vad(labels)[:spec.frames])
        worst["fuse"] = max(worst.get("fuse", 0.0),
                            np.abs(x - dumps[f"{pre}.fuse"]).max())
        skips = model.encode(x)
        for i, s in enumerate(skips):
            worst[f"enc{i}"] = max(worst.get(f"enc{i}", 0.0),
                                   np.abs(s - dumps[f"{pre}.enc{i}"]).max())
        h = skips[-1]
        for b in range(model.n_blocks):
            h = model.crossband(h, b)
            worst[f"b{b}.cross"] = max(worst.get(f"b{b}.cross", 0.0),
                                       np.abs(h - dumps[f"{pre}.block{b}.cross"]).max())
            h = model.narrowband(h, b)
            worst[f"b{b}.narrow"] = max(worst.get(f"b{b}.narrow", 0.0),
                                        np.abs(h - dumps[f"{pre}.block{b}.narrow"]).max())
            h = model.attention(h, b)
            worst[f"b{b}.attn"] = max(worst.get(f"b{b}.attn", 0.0),
                                      np.abs(h - dumps[f"{pre}.block{b}.attn"]).max())
        mask = model.decode(h, skips)
        worst["mask"] = max(worst.get("mask", 0.0),
                            np.abs(mask - dumps[f"{pre}.mask"]).max())
    print("  max abs diff per sub-module:",
          {k: f"{v:.2e}" for k, v in worst.items()})
    assert max(worst.values()) < TOLERANCE


def test_vvad_submodule_parity(parity):
    ws, dumps, n_probes = parity
    model = VvadModel(ws)
    worst = {}
    for p in range(n_probes):
        pre = f"probe{p}"
        lips = dumps[f"{pre}.in.lips"]
        stem = model._stem(lips[np.newaxis], pad_time=True)
        worst["stem"] = max(worst.get("stem", 0.0),
                            np.abs(stem - dumps[f"{pre}.vvad.stem"]).max())
        feats = model._trunk(lips[np.newaxis], pad_time=True)
        worst["feats"] = max(worst.get("feats", 0.0),
                             np.abs(feats - dumps[f"{pre}.vvad.feats"]).max())
        temporal = model.temporal_features(feats)
        worst["temporal"] = max(worst.get("temporal", 0.0),
                                np.abs(temporal - dumps[f"{pre}.vvad.temporal"]).max())
        logits = model.forward(lips)
        worst["logits"] = max(worst.get("logits", 0.0),
                              np.abs(logits - dumps[f"{pre}.vvad.logits"]).max())
    print("  max abs diff per sub-module:",
          {k: f"{v:.2e}" for k, v in worst.items()})
    assert max(worst.values()) < TOLERANCE
