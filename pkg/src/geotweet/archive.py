"""Self-describing binary container of named float64 tensors.

Layout (all integers little-endian):
  magic   b"GTPA"
  version u32 (currently 1)
  count   u32
then per tensor:
  name_len u32, name utf-8 bytes, ndim u32, dims u64 each,
  row-major little-endian IEEE-754 doubles.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"GTPA"
FORMAT_VERSION = 1


def save_archive(path, tensors):
    """Write a name -> ndarray mapping; iteration order is preserved."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(arr.astype("<f8").tobytes())


def load_archive(path):
    """Read back a name -> ndarray mapping in file order."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path}: not a parameter archive")
        version, count = struct.unpack("<II", f.read(8))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported archive version {version}")
        out = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", f.read(4))
            name = f.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{ndim}Q", f.read(8 * ndim)) if ndim else ()
            n = int(np.prod(shape, dtype=np.int64)) if shape else 1
            data = np.frombuffer(f.read(8 * n), dtype="<f8").reshape(shape)
            out[name] = data.astype(np.float64)
        return out
