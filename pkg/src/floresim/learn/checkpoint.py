"""Binary checkpoint format.

Layout (all integers little-endian)::

    magic            8 bytes  b"FLORESCK"
    version          u32
    morphology tag   u16 length + utf-8
    shape table      u32 count, then per entry: u16 name length + name, u8 ndim, u32 dims
    parameters       float32 little-endian, row-major, in table order
    config echo      u32 length + utf-8 JSON
    seed             u64
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"FLORESCK"
VERSION = 1


class CheckpointError(IOError):
    pass


class CheckpointFormatError(CheckpointError):
    """Wrong magic bytes or an unsupported format version."""


class CorruptCheckpointError(CheckpointError):
    """File is truncated or internally inconsistent."""


def save_checkpoint(params: dict[str, torch.Tensor], meta: dict, path: str | Path) -> Path:
    """``meta`` needs ``morphology`` and ``seed``; everything else goes into the config echo."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = bytearray(MAGIC)
    out += struct.pack("<I", VERSION)
    tag = str(meta["morphology"]).encode()
    out += struct.pack("<H", len(tag)) + tag
    entries = [(k, v) for k, v in params.items() if torch.is_floating_point(v)]
    out += struct.pack("<I", len(entries))
    for name, t in entries:
        b = name.encode()
        out += struct.pack("<H", len(b)) + b + struct.pack("<B", t.dim())
        out += b"".join(struct.pack("<I", d) for d in t.shape)
    for _, t in entries:
        out += t.detach().cpu().numpy().astype("<f4", copy=False).tobytes(order="C")
    echo = {k: v for k, v in meta.items() if k not in ("morphology", "seed")}
    blob = json.dumps(echo, sort_keys=True, default=str).encode()
    out += struct.pack("<I", len(blob)) + blob
    out += struct.pack("<Q", int(meta["seed"]) & 0xFFFFFFFFFFFFFFFF)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(bytes(out))
    tmp.replace(path)
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptCheckpointError(
                f"checkpoint truncated: needed {n} bytes at offset {self.pos}, file has {len(self.data)}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: str | Path) -> tuple[dict[str, torch.Tensor], dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    r = _Reader(path.read_bytes())
    if len(r.data) < len(MAGIC) or r.take(len(MAGIC)) != MAGIC:
        raise CheckpointFormatError(f"{path} is not a checkpoint (bad magic bytes)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version} (expected {VERSION})")
    (n,) = r.unpack("<H")
    tag = r.take(n).decode()
    (count,) = r.unpack("<I")
    table = []
    for _ in range(count):
        (n,) = r.unpack("<H")
        name = r.take(n).decode()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        table.append((name, tuple(shape)))
    params = {}
    for name, shape in table:
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(shape)
        params[name] = torch.from_numpy(arr.astype(np.float32))
    (n,) = r.unpack("<I")
    try:
        echo = json.loads(r.take(n).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"config echo unreadable: {exc}") from exc
    (seed,) = r.unpack("<Q")
    if r.pos != len(r.data):
        raise CorruptCheckpointError(f"{len(r.data) - r.pos} trailing bytes after checkpoint")
    meta = dict(echo)
    meta.update(morphology=tag, seed=seed, version=version, shapes=table)
    return params, meta
