"""Independent implementation of the weight-archive byte format.

Layout (little-endian throughout):

    b"AVTW" | u32 version (1) | u32 manifest_len | manifest JSON (UTF-8)
    | u32 tensor_count
    | per tensor: u16 name_len, name, u8 dtype (0 = f32), u8 rank,
      rank * u32 dims, u64 payload offset
    | payload (concatenated little-endian float32)
    | u32 CRC-32 of every preceding byte

Tensors are written in sorted-name order with a contiguous payload.
"""

from __future__ import annotations

import io
import json
import struct
import zlib

import numpy as np

MAGIC = b"AVTW"
VERSION = 1


def write_archive(path, manifest: dict, tensors: dict[str, np.ndarray]) -> None:
    if not tensors:
        raise ValueError("refusing to write an archive with no tensors")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    blob = json.dumps(manifest, sort_keys=True).encode()
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    names = sorted(tensors)
    buf.write(struct.pack("<I", len(names)))
    offset = 0
    payloads = []
    for name in names:
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        nb = name.encode()
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<BB", 0, arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(struct.pack("<Q", offset))
        payloads.append(arr.tobytes())
        offset += arr.nbytes
    for p in payloads:
        buf.write(p)
    body = buf.getvalue()
    with open(path, "wb") as fh:
        fh.write(body + struct.pack("<I", zlib.crc32(body)))


def read_archive(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Checksum-verifying reader (used by the harness's own tests)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic")
    stored = struct.unpack("<I", blob[-4:])[0]
    if stored != zlib.crc32(blob[:-4]):
        raise ValueError(f"{path}: checksum mismatch")
    pos = 4
    (version,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    (mlen,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    manifest = json.loads(blob[pos:pos + mlen].decode())
    pos += mlen
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    entries = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + nlen].decode()
        pos += nlen
        dtype_code, rank = struct.unpack_from("<BB", blob, pos)
        pos += 2
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        (offset,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        if dtype_code != 0:
            raise ValueError(f"{path}: unknown dtype for {name}")
        entries.append((name, dims, offset))
    payload = blob[pos:-4]
    tensors = {}
    for name, dims, offset in entries:
        n = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(payload[offset:offset + 4 * n], dtype="<f4")
        tensors[name] = arr.reshape(dims).astype(np.float32)
    return manifest, tensors
