import struct
import zlib

import numpy as np
import pytest
import torch

from avtse_harness.archive import read_archive, write_archive
from avtse_harness.export import collect_tensors
from avtse_harness.manifest import ARCHITECTURE
from avtse_harness.models import TseNet, VvadNet


def test_round_trip(tmp_path):
    tensors = {"a.w": np.arange(12, dtype=np.float32).reshape(3, 4),
               "b.bias": np.array([1.5], dtype=np.float32)}
    path = tmp_path / "t.avtw"
    write_archive(path, {"x": 1}, tensors)
    manifest, back = read_archive(path)
    assert manifest == {"x": 1}
    for name in tensors:
        np.testing.assert_array_equal(back[name], tensors[name])


def test_layout_starts_with_magic_and_ends_with_crc(tmp_path):
    path = tmp_path / "t.avtw"
    write_archive(path, {}, {"w": np.zeros(4, dtype=np.float32)})
    blob = path.read_bytes()
    assert blob[:4] == b"AVTW"
    assert struct.unpack("<I", blob[-4:])[0] == zlib.crc32(blob[:-4])


def test_corruption_detected(tmp_path):
    path = tmp_path / "t.avtw"
    write_archive(path, {"k": 2}, {"w": np.ones(64, dtype=np.float32)})
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0x10
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError, match="checksum"):
        read_archive(path)


def test_empty_rejected(tmp_path):
    with pytest.raises(ValueError, match="no tensors"):
        write_archive(tmp_path / "t.avtw", {}, {})


def test_collected_tensor_names_cover_architecture():
    torch.manual_seed(0)
    tensors = collect_tensors(VvadNet(ARCHITECTURE), TseNet(ARCHITECTURE))
    # spot-check the contract names and shapes the engine validates against
    assert tensors["vvad.stem.conv.w"].shape == (32, 1, 5, 7, 7)
    assert tensors["tse.block0.narrow.lstm.w_ih"].shape == (256, 64)
    assert tensors["tse.block1.cross.fbl.freq.w"].shape == (128, 21, 21)
    assert tensors["tse.dec3.deconv.w"].shape == (64, 64, 2, 5)
    assert tensors["tse.dec0.conv.b"].shape == (4,)
    assert len(tensors) == 198
