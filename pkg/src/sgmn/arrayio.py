"""Raw little-endian float32 arrays with a fixed header, and a named-array container.

Array record::

    b"SGMA"  | uint32 ndim | uint32 dims[ndim] | float32 data (C order)

Container (checkpoints)::

    b"SGMC"  | uint32 version | uint64 manifest length | UTF-8 JSON manifest | array records

The manifest lists ``{"name", "shape", "offset"}`` for every array; offsets
count from the first byte after the manifest. All integers are little-endian.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

ARRAY_MAGIC = b"SGMA"
CONTAINER_MAGIC = b"SGMC"
CONTAINER_VERSION = 1


class FormatError(ValueError):
    pass


def pack_array(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype="<f4", order="C")  # keeps 0-d arrays 0-d
    header = ARRAY_MAGIC + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    return header + arr.tobytes()


def unpack_array(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    if buf[offset:offset + 4] != ARRAY_MAGIC:
        raise FormatError("bad array magic")
    (ndim,) = struct.unpack_from("<I", buf, offset + 4)
    dims = struct.unpack_from(f"<{ndim}I", buf, offset + 8)
    start = offset + 8 + 4 * ndim
    count = int(np.prod(dims, dtype=np.int64))
    end = start + 4 * count
    if end > len(buf):
        raise FormatError("truncated array data")
    arr = np.frombuffer(buf, dtype="<f4", count=count, offset=start).reshape(dims)
    return arr.astype(np.float32), end


def write_array(path: str | Path, arr: np.ndarray) -> None:
    Path(path).write_bytes(pack_array(arr))


def read_array(path: str | Path) -> np.ndarray:
    buf = Path(path).read_bytes()
    arr, end = unpack_array(buf)
    if end != len(buf):
        raise FormatError(f"{path}: trailing bytes after array")
    return arr


def write_container(path: str | Path, arrays: dict[str, np.ndarray], meta: dict[str, Any]) -> None:
    entries, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        blob = pack_array(arr)
        entries.append({"name": name, "shape": list(np.shape(arr)), "offset": offset})
        chunks.append(blob)
        offset += len(blob)
    manifest = json.dumps({"arrays": entries, "meta": meta}, sort_keys=True).encode()
    header = CONTAINER_MAGIC + struct.pack("<IQ", CONTAINER_VERSION, len(manifest))
    Path(path).write_bytes(header + manifest + b"".join(chunks))


def read_container(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    buf = Path(path).read_bytes()
    if buf[:4] != CONTAINER_MAGIC:
        raise FormatError(f"{path}: not a checkpoint container")
    version, length = struct.unpack_from("<IQ", buf, 4)
    if version != CONTAINER_VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    base = 16 + length
    manifest = json.loads(buf[16:base])
    arrays = {}
    for entry in manifest["arrays"]:
        arr, _ = unpack_array(buf, base + entry["offset"])
        if list(arr.shape) != entry["shape"]:
            raise FormatError(f"{path}: shape mismatch for {entry['name']}")
        arrays[entry["name"]] = arr
    return arrays, manifest["meta"]
