"""Portable named-tensor weight archive.

Byte layout (all integers little-endian, one flat file):

    offset  size  field
    0       4     magic b"AVTW"
    4       4     u32 format version (1)
    8       4     u32 manifest length N
    12      N     manifest, UTF-8 JSON
    ...     4     u32 tensor count K
                  K directory entries:
                      u16  name length M
                      M    name, UTF-8
                      u8   dtype code (0 = float32)
                      u8   rank R
                      R*u32 dims
                      u64  payload offset (bytes, from payload start)
    ...           payload: concatenated little-endian float32 data
    end-4   4     u32 CRC-32 (zlib) of every preceding byte

The trailing checksum covers header, manifest, directory and payload, so
any single corrupted byte is detected before tensors are handed out.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import manifest as mf
from .errors import ChecksumError, ManifestError

MAGIC = b"AVTW"
ARCHIVE_VERSION = 1
_DTYPE_F32 = 0


@dataclass
class WeightSet:
    """Immutable-by-convention bundle of named float32 tensors + manifest."""

    manifest: dict
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def get(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise ManifestError(f"weight set has no tensor {name!r}") from None

    def validate(self) -> None:
        """Cross-check tensors against the manifest-derived shape table."""
        table = mf.tensor_table(self.manifest)
        for name, shape in table.items():
            if name not in self.tensors:
                raise ManifestError(f"missing tensor {name!r} (expected shape {shape})")
            got = tuple(self.tensors[name].shape)
            if got != shape:
                raise ManifestError(
                    f"tensor {name!r} shaped {got}, manifest expects {shape}")
        extras = set(self.tensors) - set(table)
        allowed = set(self.manifest.get("extra_tensors", []))
        stray = extras - allowed
        if stray:
            raise ManifestError(f"unexpected tensors not in manifest: {sorted(stray)}")


def save_weights(ws: WeightSet, path) -> None:
    ws.validate()
    if not ws.tensors:
        raise ManifestError("refusing to save an empty weight set")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", ARCHIVE_VERSION))
    manifest_blob = json.dumps(ws.manifest, sort_keys=True).encode()
    buf.write(struct.pack("<I", len(manifest_blob)))
    buf.write(manifest_blob)

    names = sorted(ws.tensors)
    buf.write(struct.pack("<I", len(names)))
    offset = 0
    payloads = []
    for name in names:
        arr = np.ascontiguousarray(ws.tensors[name], dtype="<f4")
        nb = name.encode()
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<BB", _DTYPE_F32, arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(struct.pack("<Q", offset))
        payloads.append(arr.tobytes())
        offset += arr.nbytes
    for blob in payloads:
        buf.write(blob)
    body = buf.getvalue()
    body += struct.pack("<I", zlib.crc32(body))
    with open(path, "wb") as fh:
        fh.write(body)


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ManifestError(
                f"{self.path}: truncated archive (need {n} bytes at offset "
                f"{self.pos}, have {len(self.blob) - self.pos})")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_weights(path) -> WeightSet:
    """Parse, checksum-verify and manifest-validate an archive."""
    ws = load_archive_raw(path)
    ws.validate()
    return ws


def load_archive_raw(path) -> WeightSet:
    """Checksum-verified parse without architecture validation.

    Used for auxiliary tensor containers in the same byte format (parity
    vectors, probe dumps) whose manifests do not describe a model.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise ManifestError(f"{path}: not a weight archive (bad magic)")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    actual_crc = zlib.crc32(blob[:-4])
    if stored_crc != actual_crc:
        raise ChecksumError(
            f"{path}: checksum mismatch over bytes [0, {len(blob) - 4}): "
            f"stored {stored_crc:#010x}, computed {actual_crc:#010x}")
    r = _Reader(blob[:-4], path)
    r.take(4)  # magic
    (version,) = r.unpack("<I")
    if version != ARCHIVE_VERSION:
        raise ManifestError(f"{path}: archive version {version}, expected "
                            f"{ARCHIVE_VERSION}")
    (mlen,) = r.unpack("<I")
    try:
        man = json.loads(r.take(mlen).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ManifestError(f"{path}: unparseable manifest ({exc})") from exc
    (count,) = r.unpack("<I")
    entries = []
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode()
        dtype_code, rank = r.unpack("<BB")
        if dtype_code != _DTYPE_F32:
            raise ManifestError(f"{path}: tensor {name!r} has unknown dtype "
                                f"{dtype_code}")
        dims = r.unpack(f"<{rank}I")
        (offset,) = r.unpack("<Q")
        entries.append((name, dims, offset))
    payload = r.blob[r.pos:]
    tensors = {}
    for name, dims, offset in entries:
        n = int(np.prod(dims)) if dims else 1
        end = offset + 4 * n
        if end > len(payload):
            raise ManifestError(f"{path}: tensor {name!r} payload runs past "
                                f"end of archive")
        arr = np.frombuffer(payload[offset:end], dtype="<f4").reshape(dims)
        tensors[name] = arr.astype(np.float32)
    return WeightSet(manifest=man, tensors=tensors)


def init_random(seed: int, manifest: dict | None = None) -> WeightSet:
    """Seeded synthetic weights for tests: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).

    Normalization running stats are pinned to mean 0 / var 1 so the inference
    form stays numerically neutral under random weights.
    """
    man = manifest if manifest is not None else mf.DEFAULT_MANIFEST
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in sorted(mf.tensor_table(man).items()):
        if name.endswith(".mean"):
            tensors[name] = np.zeros(shape, dtype=np.float32)
        elif name.endswith(".var"):
            tensors[name] = np.ones(shape, dtype=np.float32)
        else:
            bound = 1.0 / np.sqrt(mf.fan_in(name, shape))
            tensors[name] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
    return WeightSet(manifest=json.loads(json.dumps(man)), tensors=tensors)
