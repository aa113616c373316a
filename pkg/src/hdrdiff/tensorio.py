"""Bit-exact binary container for named float32 tensors.

Layout (all integers little-endian):

    magic   4 bytes  b"HDRF"
    version u16      currently 1
    count   u32      number of tensors
    per tensor:
        name_len u16, name UTF-8 bytes
        ndim     u8
        dims     u32 each
        data     float32, row-major

Checkpoints reuse this container for parameters, EMA shadows and
optimizer moments.
"""

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

__all__ = [
    "write_tensors",
    "read_tensors",
    "TensorFormatError",
    "BadMagicError",
    "BadVersionError",
    "TruncatedFileError",
    "DimOverflowError",
    "FORMAT_VERSION",
]

MAGIC = b"HDRF"
FORMAT_VERSION = 1
_MAX_DIM = 2**32 - 1
_MAX_NDIM = 255


class TensorFormatError(ValueError):
    """Base error for malformed tensor containers."""


class BadMagicError(TensorFormatError):
    pass


class BadVersionError(TensorFormatError):
    pass


class TruncatedFileError(TensorFormatError):
    pass


class DimOverflowError(TensorFormatError):
    pass


def write_tensors(path, tensors) -> None:
    """Write a name -> array mapping; arrays are stored as float32.

    Non-finite values are rejected, as are names longer than 65535 bytes,
    more than 255 dims, or any dim exceeding u32.
    """
    items = list(tensors.items())
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<HI", FORMAT_VERSION, len(items))
    for name, arr in items:
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValueError(f"tensor {name!r} contains non-finite values")
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"tensor name too long: {name!r}")
        if arr.ndim > _MAX_NDIM:
            raise DimOverflowError(f"tensor {name!r} has {arr.ndim} dims (max {_MAX_NDIM})")
        if any(d > _MAX_DIM for d in arr.shape):
            raise DimOverflowError(f"tensor {name!r} dims {arr.shape} exceed u32")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<B", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.tobytes(order="C")
    Path(path).write_bytes(bytes(blob))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"file truncated: needed {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_tensors(path) -> "OrderedDict[str, np.ndarray]":
    """Read a container back into an ordered name -> float32 array mapping."""
    reader = _Reader(Path(path).read_bytes())
    magic = reader.take(4)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = reader.unpack("<H")
    if version != FORMAT_VERSION:
        raise BadVersionError(f"unsupported format version {version}")
    (count,) = reader.unpack("<I")
    out = OrderedDict()
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        dims = reader.unpack(f"<{ndim}I") if ndim else ()
        n_elems = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        raw = reader.take(4 * n_elems)
        out[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    if reader.pos != len(reader.data):
        raise TensorFormatError(f"{len(reader.data) - reader.pos} trailing bytes after last tensor")
    return out
