"""Dense numeric primitives with a two-precision policy.

Tensors are plain row-major ``numpy.ndarray`` objects whose dtype is either
``float32`` or ``float16``. Every reduction (matmul accumulation, softmax
normaliser, layer-norm statistics) runs in float32 whatever the storage
precision, and results are narrowed back with a saturating conversion.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError, InvalidMaskError
from .profiler import timed

F16_MAX = float(np.finfo(np.float16).max)  # 65504.0


class DType(enum.Enum):
    F32 = 0
    F16 = 1

    @property
    def np(self) -> np.dtype:
        return np.dtype(np.float32) if self is DType.F32 else np.dtype(np.float16)

    @property
    def size(self) -> int:
        return 4 if self is DType.F32 else 2

    @classmethod
    def of(cls, x: np.ndarray) -> "DType":
        if x.dtype == np.float32:
            return cls.F32
        if x.dtype == np.float16:
            return cls.F16
        raise TypeError(f"unsupported tensor dtype {x.dtype}")

    @classmethod
    def parse(cls, name: str) -> "DType":
        try:
            return {"fp32": cls.F32, "f32": cls.F32, "fp16": cls.F16, "f16": cls.F16}[name.lower()]
        except KeyError:
            raise ValueError(f"unknown precision {name!r} (expected fp32 or fp16)") from None


@dataclass(frozen=True)
class PrecisionPolicy:
    compute: DType = DType.F32

    @property
    def reduce_in_f32(self) -> bool:
        # all reductions accumulate in float32 under either compute dtype
        return True

    @property
    def dtype(self) -> np.dtype:
        return self.compute.np


FP32 = PrecisionPolicy(DType.F32)
FP16 = PrecisionPolicy(DType.F16)

MatmulBackend = Callable[[np.ndarray, np.ndarray], np.ndarray]


def reference_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim == 2 and a.shape[0] == 1 and b.ndim == 2:
        # BLAS sends one-row products to a vector kernel with a different summation
        # order; doubling the row keeps each row's result independent of batch size
        return np.matmul(np.concatenate([a, a]), b)[:1]
    return np.matmul(a, b)


_backend: MatmulBackend = reference_matmul


def set_matmul_backend(fn: MatmulBackend | None) -> MatmulBackend:
    """Install a float32 x float32 -> float32 matmul kernel; returns the previous one.

    ``None`` restores the portable reference kernel.
    """
    global _backend
    prev = _backend
    _backend = fn or reference_matmul
    return prev


def _narrow(x: np.ndarray, dtype: np.dtype) -> np.ndarray:
    if dtype == np.float16:
        return np.clip(x, -F16_MAX, F16_MAX).astype(np.float16)
    return x.astype(dtype, copy=False)


@timed("Convert")
def convert(x: np.ndarray, to: DType) -> np.ndarray:
    """Cast between precisions.

    float32 -> float16 rounds to nearest even and saturates out-of-range
    values (including infinities) to +-65504; float16 -> float32 is exact.
    """
    if to is DType.F16:
        if x.dtype == np.float16:
            return x
        return _narrow(np.asarray(x, dtype=np.float32), np.dtype(np.float16))
    return np.asarray(x).astype(np.float32, copy=False)


@timed("MatMul")
def matmul(a: np.ndarray, b: np.ndarray, policy: PrecisionPolicy = FP32) -> np.ndarray:
    """Matrix product with float32 accumulation; supports leading batch dims."""
    if a.ndim < 1 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    want = policy.dtype
    if a.dtype != want or b.dtype != want:
        raise TypeError(f"matmul operands {a.dtype}/{b.dtype} do not match compute dtype {want}")
    if want == np.float16:
        return _narrow(_backend(a.astype(np.float32), b.astype(np.float32)), want)
    return _backend(a, b)


@timed("Softmax")
def softmax_masked(x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Row softmax over the last axis with an additive ``{0, -inf}`` mask.

    Masked entries come out as exact zeros. The result has the dtype of ``x``.
    """
    z = x.astype(np.float32)
    if mask is not None:
        z = z + mask
        if np.isneginf(z).all(axis=-1).any():
            raise InvalidMaskError("softmax row has every position masked")
    z = z - z.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    return _narrow(z, x.dtype)


def log_softmax(x: np.ndarray, dtype=np.float32) -> np.ndarray:
    z = x.astype(dtype)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@timed("LayerNorm")
def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    d = x.shape[-1] if x.ndim else 0
    if d == 0:
        raise DimensionError("layer_norm over an empty trailing dimension")
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm params {gain.shape}/{bias.shape} do not match width {d}")
    z = x.astype(np.float32)
    mean = z.mean(axis=-1, keepdims=True)
    z = z - mean
    var = np.mean(z * z, axis=-1, keepdims=True)
    z *= 1.0 / np.sqrt(var + eps)
    z = z * gain.astype(np.float32) + bias.astype(np.float32)
    return _narrow(z, x.dtype)


def argmax_rows(x: np.ndarray) -> list[int]:
    """Per-row argmax; ties go to the lowest index."""
    if x.ndim != 2 or x.shape[1] < 1:
        raise DimensionError(f"argmax_rows needs a non-empty matrix, got {x.shape}")
    return np.argmax(x, axis=1).tolist()
