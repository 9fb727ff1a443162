"""Versioned binary parameter checkpoints.

Byte layout, all integers little-endian::

    magic       8 bytes   b"SREPCKPT"
    version     uint32    currently 1
    meta_len    uint32    length of the metadata block
    meta        bytes     UTF-8 text (config snapshot), may be empty
    count       uint32    number of parameters
    repeated count times:
        name_len    uint16
        name        UTF-8 bytes
        ndim        uint8
        shape       ndim x uint32
        values      prod(shape) x float64, row-major
"""
from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"SREPCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | os.PathLike, params: dict[str, np.ndarray], meta: str = "") -> None:
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    meta_b = meta.encode("utf-8")
    chunks += [struct.pack("<I", len(meta_b)), meta_b, struct.pack("<I", len(params))]
    for name, arr in params.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        name_b = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name_b)) + name_b)
        chunks.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], str]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    pos = 8

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise CheckpointError(f"{path}: truncated at byte {pos}")
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    (version,) = take("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (meta_len,) = take("<I")
    meta = buf[pos:pos + meta_len].decode("utf-8")
    pos += meta_len
    (count,) = take("<I")
    params = {}
    for _ in range(count):
        (name_len,) = take("<H")
        name = buf[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I") if ndim else ()
        n = int(np.prod(shape)) if shape else 1
        if pos + 8 * n > len(buf):
            raise CheckpointError(f"{path}: truncated values for {name!r}")
        params[name] = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * n
    return params, meta
