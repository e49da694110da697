"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"NTSD"  u32 version=1
    u32 x 8  enc_layers dec_layers d_model n_heads d_ffn vocab_size max_rel_pos flags
             flags: bit0 use_dlcl, bit1 shared embeddings
    u32      tensor count
    per tensor:
        u16 name length, UTF-8 name, u8 rank, u32 x rank dims,
        u8 dtype (0 = f32, 1 = f16), raw little-endian payload
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .config import ModelConfig, weight_shapes
from .errors import FormatError, IntegrityError
from .model import WeightStore
from .tensor import DType, convert

MAGIC = b"NTSD"
VERSION = 1
_HEADER = struct.Struct("<4sI8II")
_LE = {DType.F32: np.dtype("<f4"), DType.F16: np.dtype("<f2")}


def _flags(cfg: ModelConfig) -> int:
    return (1 if cfg.use_dlcl else 0) | (2 if cfg.shared_embeddings else 0)


def save_checkpoint(weights, config: ModelConfig, dtype: DType, path: str | Path) -> int:
    """Write ``weights`` in canonical order; returns the total tensor payload bytes."""
    store = weights if isinstance(weights, WeightStore) else WeightStore(config, weights)
    shapes = weight_shapes(config)
    payload = 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, config.enc_layers, config.dec_layers, config.d_model,
                              config.n_heads, config.d_ffn, config.vocab_size, config.max_rel_pos,
                              _flags(config), len(shapes)))
        for name, shape in shapes.items():
            raw = name.encode("utf-8")
            t = convert(store[name], dtype).astype(_LE[dtype], copy=False)
            fh.write(struct.pack("<H", len(raw)) + raw + struct.pack("<B", len(shape)))
            fh.write(struct.pack(f"<{len(shape)}I", *shape))
            fh.write(struct.pack("<B", dtype.value))
            data = np.ascontiguousarray(t).tobytes()
            payload += len(data)
            fh.write(data)
    return payload


def _read(fh: io.BufferedReader, n: int) -> bytes:
    b = fh.read(n)
    if len(b) != n:
        raise IntegrityError(f"checkpoint truncated: wanted {n} bytes, got {len(b)}")
    return b


def _read_header(fh) -> tuple[ModelConfig, int]:
    head = fh.read(_HEADER.size)
    if len(head) < 8 or head[:4] != MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    if len(head) != _HEADER.size:
        raise IntegrityError("checkpoint truncated inside the header")
    magic, version, *fields, count = _HEADER.unpack(head)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    enc, dec, d, heads, dffn, vocab, rel, flags = fields
    if not flags & 2:
        raise FormatError("checkpoint without shared embeddings is not supported")
    try:
        cfg = ModelConfig(enc, dec, d, heads, dffn, vocab, rel, use_dlcl=bool(flags & 1))
    except ValueError as exc:
        raise IntegrityError(f"checkpoint config invalid: {exc}") from None
    return cfg, count


def read_config(path: str | Path) -> ModelConfig:
    """Read only the configuration block."""
    with open(path, "rb") as fh:
        return _read_header(fh)[0]


def load_checkpoint(path: str | Path) -> tuple[WeightStore, ModelConfig]:
    with open(path, "rb") as fh:
        cfg, count = _read_header(fh)
        expected = weight_shapes(cfg)
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (n,) = struct.unpack("<H", _read(fh, 2))
            try:
                name = _read(fh, n).decode("utf-8")
            except UnicodeDecodeError:
                raise IntegrityError("tensor name is not valid UTF-8") from None
            (rank,) = struct.unpack("<B", _read(fh, 1))
            dims = struct.unpack(f"<{rank}I", _read(fh, 4 * rank))
            (code,) = struct.unpack("<B", _read(fh, 1))
            try:
                dtype = DType(code)
            except ValueError:
                raise IntegrityError(f"{name}: unknown dtype code {code}") from None
            if name in tensors:
                raise IntegrityError(f"duplicate tensor {name!r}")
            if name not in expected:
                raise IntegrityError(f"unexpected tensor {name!r}")
            if tuple(dims) != expected[name]:
                raise IntegrityError(f"{name}: stored shape {dims} != config shape {expected[name]}")
            size = int(np.prod(dims, dtype=np.int64))
            data = _read(fh, size * dtype.size)
            tensors[name] = np.frombuffer(data, dtype=_LE[dtype]).astype(dtype.np).reshape(dims)
        if fh.read(1):
            raise IntegrityError("trailing bytes after the last tensor")
    missing = [n for n in expected if n not in tensors]
    if missing:
        raise IntegrityError(f"checkpoint is missing tensors: {missing[:5]}")
    return WeightStore(cfg, tensors), cfg


def payload_bytes(path: str | Path) -> int:
    """Sum of raw tensor payload sizes stored in a checkpoint."""
    total = 0
    with open(path, "rb") as fh:
        _, count = _read_header(fh)
        for _ in range(count):
            (n,) = struct.unpack("<H", _read(fh, 2))
            _read(fh, n)
            (rank,) = struct.unpack("<B", _read(fh, 1))
            dims = struct.unpack(f"<{rank}I", _read(fh, 4 * rank))
            (code,) = struct.unpack("<B", _read(fh, 1))
            size = int(np.prod(dims, dtype=np.int64)) * DType(code).size
            fh.seek(size, io.SEEK_CUR)
            total += size
    return total
