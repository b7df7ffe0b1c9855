"""Embedding shard files: the on-disk unit of a gallery.

Layout: magic "FPGS", version u16, dim u16, count u64, then the
count x dim float32 matrix, then count u64 ids, all little-endian,
closed by a CRC32 of every preceding byte.  A torn or tampered file
fails the checksum and is rejected as a whole.
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib

import numpy as np

MAGIC = b"FPGS"
VERSION = 1
_HEADER = struct.Struct("<4sHHQ")


class ShardFormatError(Exception):
    pass


class DuplicateId(Exception):
    pass


class DimMismatch(Exception):
    pass


def write_shard(path, ids, vectors):
    """Serialize parallel id/vector arrays; atomic on POSIX renames."""
    ids = np.ascontiguousarray(ids, dtype="<u8")
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    if vectors.ndim != 2:
        raise DimMismatch(f"vectors must be 2-D, got shape {vectors.shape}")
    if ids.ndim != 1 or ids.shape[0] != vectors.shape[0]:
        raise DimMismatch(
            f"{ids.shape[0] if ids.ndim == 1 else ids.shape} ids for "
            f"{vectors.shape[0]} vectors"
        )
    if np.unique(ids).size != ids.size:
        raise DuplicateId("ids within a shard must be unique")
    count, dim = vectors.shape
    if dim > 0xFFFF:
        raise DimMismatch(f"dim {dim} exceeds the u16 field")
    payload = _HEADER.pack(MAGIC, VERSION, dim, count)
    payload += vectors.tobytes() + ids.tobytes()
    payload += struct.pack("<I", zlib.crc32(payload))
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def build_shard(records, path, dim=None):
    """Write (id, vector) records to one shard file.

    All vectors must share one dimension; ids must be unique.  ``dim``
    only matters for an empty record list, where it sizes the header.
    """
    records = list(records)
    if not records:
        width = 0 if dim is None else int(dim)
        return write_shard(
            path, np.empty(0, dtype="<u8"), np.empty((0, width), dtype="<f4")
        )
    ids = np.array([int(i) for i, _ in records], dtype="<u8")
    first = np.asarray(records[0][1], dtype="<f4").ravel()
    vectors = np.empty((len(records), first.size), dtype="<f4")
    for row, (_, vec) in enumerate(records):
        arr = np.asarray(vec, dtype="<f4").ravel()
        if arr.size != first.size:
            raise DimMismatch(
                f"record {row} has dim {arr.size}, expected {first.size}"
            )
        vectors[row] = arr
    if dim is not None and int(dim) != first.size:
        raise DimMismatch(f"records have dim {first.size}, requested {dim}")
    return write_shard(path, ids, vectors)


def load_shard(path):
    """Read one shard; returns (ids u64 array, vectors float32 matrix)."""
    with open(path, "rb") as handle:
        blob = handle.read()
    if len(blob) < _HEADER.size + 4:
        raise ShardFormatError(f"{path}: truncated header")
    magic, version, dim, count = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ShardFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ShardFormatError(f"{path}: unsupported version {version}")
    body_len = _HEADER.size + count * dim * 4 + count * 8
    if len(blob) != body_len + 4:
        raise ShardFormatError(
            f"{path}: expected {body_len + 4} bytes, found {len(blob)}"
        )
    (stored_crc,) = struct.unpack_from("<I", blob, body_len)
    if zlib.crc32(blob[:body_len]) != stored_crc:
        raise ShardFormatError(f"{path}: checksum mismatch")
    offset = _HEADER.size
    vectors = np.frombuffer(blob, dtype="<f4", count=count * dim, offset=offset)
    offset += count * dim * 4
    ids = np.frombuffer(blob, dtype="<u8", count=count, offset=offset)
    return ids.copy(), vectors.reshape(count, dim).copy()
