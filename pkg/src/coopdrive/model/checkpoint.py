"""Flat little-endian parameter checkpoint.

Layout, all integers little-endian:

    magic   4 bytes  b"CDCP"
    version u8       1
    cfg_len u32      length of the JSON config record
    cfg     bytes    UTF-8 JSON: {"model": ModelConfig fields, "extra": {...}}
    count   u32      number of parameter blocks
    blocks  repeated:
        name_len u16, name UTF-8,
        ndim u8, dims u32 each,
        data float32 raw, C order

Training runs in float64; checkpoints store float32 and load back as float64.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import IoError
from .config import ModelConfig

MAGIC = b"CDCP"
VERSION = 1


def save_checkpoint(path, cfg: ModelConfig, params: dict[str, np.ndarray],
                    extra: dict | None = None) -> None:
    record = json.dumps({"model": cfg.to_dict(), "extra": extra or {}}).encode("utf-8")
    chunks = [MAGIC, struct.pack("<BI", VERSION, len(record)), record,
              struct.pack("<I", len(params))]
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path):
    """Returns (ModelConfig, params as float64 arrays, extra dict)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read checkpoint {path}: {e}") from e
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(raw):
            raise IoError(f"truncated checkpoint {path} at byte {off}")
        out = raw[off:off + n]
        off += n
        return out

    if take(4) != MAGIC:
        raise IoError(f"{path} is not a parameter checkpoint (bad magic)")
    version, cfg_len = struct.unpack("<BI", take(5))
    if version != VERSION:
        raise IoError(f"unsupported checkpoint version {version}")
    record = json.loads(take(cfg_len).decode("utf-8"))
    cfg = ModelConfig.from_dict(record["model"])
    (count,) = struct.unpack("<I", take(4))
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(dims)) if ndim else 1
        data = np.frombuffer(take(4 * size), dtype="<f4").reshape(dims)
        params[name] = data.astype(np.float64)
    if off != len(raw):
        raise IoError(f"{path} has {len(raw) - off} trailing bytes")
    return cfg, params, record.get("extra", {})
