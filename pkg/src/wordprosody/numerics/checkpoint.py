"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic       8 bytes   b"WPCKPT01"
    version     u32       1
    n_arrays    u32
    n_arrays times:
        name_len  u16, name  UTF-8 bytes
        ndim      u8,  dims  ndim x u64
        values    prod(dims) x float64 (little-endian, row-major)
    meta_len    u64
    meta        UTF-8 JSON object (sorted keys)

Arrays are written in sorted name order, so equal contents give equal bytes.
``meta`` carries the model config, symbol table or piece vocabulary, and hashes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"WPCKPT01"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    parts = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f8", order="C")  # keeps 0-d arrays 0-d
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<Q", len(blob)))
    parts.append(blob)
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    try:
        version, n = struct.unpack_from("<II", buf, 8)
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated header") from exc
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    off = 16
    arrays: dict[str, np.ndarray] = {}
    try:
        for _ in range(n):
            (ln,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off:off + ln].decode("utf-8")
            off += ln
            (ndim,) = struct.unpack_from("<B", buf, off)
            off += 1
            dims = struct.unpack_from(f"<{ndim}Q", buf, off)
            off += 8 * ndim
            count = int(np.prod(dims)) if ndim else 1
            arrays[name] = np.frombuffer(buf, dtype="<f8", count=count, offset=off).reshape(dims).astype(np.float64)
            off += 8 * count
        (mlen,) = struct.unpack_from("<Q", buf, off)
        off += 8
        meta = json.loads(buf[off:off + mlen].decode("utf-8"))
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({exc})") from exc
    if off + mlen != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - off - mlen} trailing bytes")
    return arrays, meta
