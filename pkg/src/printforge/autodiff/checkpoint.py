"""Parameter checkpoints.

Layout: magic "FPAD", version u16, parameter count u32, then for each
parameter a u16 name length, the UTF-8 name, a u8 rank, one u32 per
extent, and the row-major little-endian float32 data.  Parameters are
written sorted by name so identical dictionaries produce identical
bytes.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

MAGIC = b"FPAD"
VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path, params):
    """Write a name -> array dictionary; atomic via rename."""
    blobs = [struct.pack("<4sHI", MAGIC, VERSION, len(params))]
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise CheckpointError(f"parameter name too long: {name[:32]!r}...")
        if arr.ndim > 0xFF:
            raise CheckpointError(f"parameter {name!r} has rank {arr.ndim}")
        blobs.append(struct.pack("<H", len(raw)))
        blobs.append(raw)
        blobs.append(struct.pack("<B", arr.ndim))
        blobs.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        blobs.append(arr.tobytes())
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".fpad.tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(b"".join(blobs))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path):
    """Read back a checkpoint as a name -> float32 array dictionary."""
    with open(path, "rb") as handle:
        data = handle.read()
    view = memoryview(data)

    def take(n):
        nonlocal offset
        if offset + n > len(view):
            raise CheckpointError(f"truncated checkpoint {path}")
        chunk = view[offset : offset + n]
        offset += n
        return chunk

    offset = 0
    magic, version, count = struct.unpack("<4sHI", take(10))
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r} in {path}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    params = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape)
        params[name] = np.array(arr, dtype=np.float32)
    if offset != len(view):
        raise CheckpointError(f"{len(view) - offset} trailing bytes in {path}")
    return params
