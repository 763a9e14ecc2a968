"""Binary checkpoint format.

Layout: magic bytes "TEMD", format version (u32), then one record per
parameter: name length (u32), UTF-8 name, rank (u32), extents (u64 each),
raw float64 data. Everything is little-endian. Buffers (batch-norm running
statistics) are stored alongside trainable weights so a reload reproduces
evaluation outputs bit-exactly.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from tfad.tensor import ParamStore

MAGIC = b"TEMD"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save(path: str | Path, store: ParamStore) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        for name, tensor in store.items():
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", tensor.data.ndim))
            for extent in tensor.data.shape:
                f.write(struct.pack("<Q", extent))
            f.write(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())


def load_raw(path: str | Path) -> "OrderedDict[str, np.ndarray]":
    """Read every record as name -> array without needing a model."""
    out: "OrderedDict[str, np.ndarray]" = OrderedDict()
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise CheckpointError("bad magic bytes")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        while True:
            head = f.read(4)
            if not head:
                break
            (name_len,) = struct.unpack("<I", head)
            name = f.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{rank}Q", f.read(8 * rank)) if rank else ()
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(f.read(8 * count), dtype="<f8").reshape(shape)
            out[name] = data.astype(np.float64)
    return out


def load(path: str | Path, store: ParamStore) -> None:
    """Load a checkpoint into an existing parameter store, strictly."""
    records = load_raw(path)
    names = store.names()
    if list(records) != names:
        missing = [n for n in names if n not in records]
        extra = [n for n in records if n not in set(names)]
        raise CheckpointError(f"parameter set mismatch: missing={missing} extra={extra}")
    for name, arr in records.items():
        tensor = store[name]
        if arr.shape != tensor.data.shape:
            raise CheckpointError(
                f"shape mismatch for {name}: file {arr.shape} vs model {tensor.data.shape}"
            )
        tensor.data = arr.copy()
