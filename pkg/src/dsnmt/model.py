"""Deep-encoder / shallow-decoder Transformer forward pass.

Pre-norm residual blocks, self-attention with clipped relative position
embeddings (Shaw-style, shared across heads), optional dynamic linear
combination of encoder layers, and a tied embedding / output projection.
Incremental decoding keeps per-layer key/value projections in a
:class:`DecoderCache`; :meth:`Transformer.decoder_forward` is the uncached
whole-prefix path used as its reference.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np

from .config import ModelConfig, param_count, weight_shapes
from .errors import CorruptInputError, DimensionError, IntegrityError, InternalStateError
from .pool import Block, MemoryPool
from .profiler import op
from .tensor import FP32, DType, PrecisionPolicy, convert, layer_norm, matmul, softmax_masked
from .text import PAD

NEG_INF = np.float32(-np.inf)


class WeightStore(Mapping):
    """Named parameter tensors validated against a :class:`ModelConfig`."""

    def __init__(self, config: ModelConfig, tensors: Mapping[str, np.ndarray]):
        expected = weight_shapes(config)
        missing = [n for n in expected if n not in tensors]
        extra = [n for n in tensors if n not in expected]
        if missing or extra:
            raise IntegrityError(f"weight names do not match config: missing={missing[:5]} extra={extra[:5]}")
        for name, shape in expected.items():
            if tuple(tensors[name].shape) != shape:
                raise IntegrityError(f"{name}: shape {tuple(tensors[name].shape)} != expected {shape}")
        self.config = config
        self._t = {n: tensors[n] for n in expected}

    def __getitem__(self, name: str) -> np.ndarray:
        return self._t[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._t)

    def __len__(self) -> int:
        return len(self._t)

    @property
    def dtype(self) -> DType:
        return DType.of(self._t["embed"])

    def astype(self, dtype: DType) -> "WeightStore":
        if dtype is self.dtype:
            return self
        return WeightStore(self.config, {n: convert(t, dtype) for n, t in self._t.items()})

    def n_params(self) -> int:
        return sum(t.size for t in self._t.values())


@dataclass
class EncoderState:
    memory: np.ndarray  # [batch, src_len, d]
    src_mask: np.ndarray  # bool [batch, src_len], True on real tokens

    @property
    def additive_mask(self) -> np.ndarray:
        return padding_mask(self.src_mask)


def padding_mask(keep: np.ndarray) -> np.ndarray:
    """Additive key mask [batch, 1, 1, len] from a boolean keep-matrix."""
    m = np.where(keep, np.float32(0.0), NEG_INF)
    return m[:, None, None, :]


@lru_cache(maxsize=256)
def _causal_mask(n: int) -> np.ndarray:
    return np.triu(np.full((n, n), NEG_INF, dtype=np.float32), k=1)


@lru_cache(maxsize=1024)
def _rel_index(q0: int, tq: int, tk: int, k: int) -> np.ndarray:
    """[tq, tk] clipped distance bucket for each (query i, key j).

    Queries sit at absolute positions q0..q0+tq-1 and keys at 0..tk-1.
    """
    pq = np.arange(q0, q0 + tq)[:, None]
    pk = np.arange(tk)[None, :]
    out = np.clip(pk - pq, -k, k) + k
    out.setflags(write=False)
    return out


@lru_cache(maxsize=1024)
def _rel_onehot(q0: int, tq: int, tk: int, k: int, dtype: str) -> np.ndarray:
    """[tq, tk, 2k+1] indicator of :func:`_rel_index`."""
    out = (_rel_index(q0, tq, tk, k)[..., None] == np.arange(2 * k + 1)).astype(dtype)
    out.setflags(write=False)
    return out


def split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def attend(q, k, v, policy: PrecisionPolicy, mask=None, rel_k=None, rel_v=None, q_start: int = 0,
           max_rel: int = 8) -> np.ndarray:
    """Scaled dot-product attention over head-split tensors.

    q: [B, H, Tq, dh] at absolute positions ``q_start..``; k, v: [B, H, Tk, dh]
    at positions ``0..Tk-1``. With ``rel_k``/``rel_v`` ([2*max_rel+1, dh]) the
    clipped relative-distance embeddings are added to keys and values.
    """
    b, h, tq, dh = q.shape
    tk = k.shape[2]
    if k.shape != (b, h, tk, dh) or v.shape != k.shape:
        raise DimensionError(f"attention shapes q={q.shape} k={k.shape} v={v.shape}")
    scores = matmul(q, k.swapaxes(-1, -2), policy)
    if rel_k is not None:
        onehot = _rel_onehot(q_start, tq, tk, max_rel, policy.dtype.name)
        qa = matmul(q, rel_k.T, policy)  # [B, H, Tq, R]
        qa = qa.transpose(2, 0, 1, 3).reshape(tq, b * h, -1)
        rel = matmul(qa, onehot.transpose(0, 2, 1), policy)  # [Tq, BH, Tk]
        scores = scores + rel.reshape(tq, b, h, tk).transpose(1, 2, 0, 3)
    scores = scores * scores.dtype.type(1.0 / math.sqrt(dh))
    probs = softmax_masked(scores, mask)
    out = matmul(probs, v, policy)
    if rel_v is not None:
        pt = probs.transpose(2, 0, 1, 3).reshape(tq, b * h, tk)
        buckets = matmul(pt, onehot, policy)  # [Tq, BH, R]
        extra = matmul(buckets, rel_v, policy)
        out = out + extra.reshape(tq, b, h, dh).transpose(1, 2, 0, 3)
    return out


def linear(x, w, b, policy: PrecisionPolicy):
    # one 2-D GEMM over all rows; numpy runs [B, T, d] @ [d, n] as B separate products
    lead = x.shape[:-1]
    y = matmul(x.reshape(-1, x.shape[-1]), w, policy)
    y += b
    return y.reshape(*lead, w.shape[1])


def relative_self_attention(x, weights: Mapping[str, np.ndarray], prefix: str, mask, n_heads: int,
                            max_rel: int, policy: PrecisionPolicy = FP32) -> np.ndarray:
    """Self-attention of a full sequence ``x`` [B, T, d] with relative positions.

    Only offsets between rows matter, so the absolute start of the sequence is
    irrelevant here; incremental decoding passes absolute positions to
    :func:`attend` directly.
    """
    w = lambda n: weights[f"{prefix}.{n}"]  # noqa: E731
    q = split_heads(linear(x, w("q.weight"), w("q.bias"), policy), n_heads)
    k = split_heads(linear(x, w("k.weight"), w("k.bias"), policy), n_heads)
    v = split_heads(linear(x, w("v.weight"), w("v.bias"), policy), n_heads)
    out = attend(q, k, v, policy, mask, w("rel_k"), w("rel_v"), 0, max_rel)
    return linear(merge_heads(out), w("o.weight"), w("o.bias"), policy)


def ffn(x, w1, b1, w2, b2, policy: PrecisionPolicy = FP32) -> np.ndarray:
    h = linear(x, w1, b1, policy)
    np.maximum(h, 0, out=h)
    return linear(h, w2, b2, policy)


def prenorm_block(x, sublayer, gain, bias) -> np.ndarray:
    """Residual around a sublayer applied to the layer-normalised input."""
    return x + sublayer(layer_norm(x, gain, bias))


def dlcl_combine(outputs: list[np.ndarray], weights: np.ndarray, norms: list[tuple[np.ndarray, np.ndarray]]):
    """Weighted sum of layer-normalised earlier outputs: sum_k w[k] * LN_k(y_k)."""
    if len(outputs) != len(weights) or len(outputs) != len(norms) or not outputs:
        raise DimensionError(f"dlcl arity mismatch: {len(outputs)} outputs, {len(weights)} weights, "
                             f"{len(norms)} norms")
    acc = np.zeros(outputs[0].shape, dtype=np.float32)
    for y, wk, (g, b) in zip(outputs, weights, norms):
        acc += np.float32(wk) * layer_norm(y, g, b).astype(np.float32)
    return convert(acc, DType.of(outputs[0]))


def embed_and_scale(ids: np.ndarray, embed: np.ndarray) -> np.ndarray:
    ids = np.asarray(ids)
    v, d = embed.shape
    if ids.size and (ids.min() < 0 or ids.max() >= v):
        raise CorruptInputError(f"token id outside [0, {v}) in embedding lookup")
    out = embed[ids] * embed.dtype.type(math.sqrt(d))
    out[ids == PAD] = 0
    return out


def output_logits(x: np.ndarray, embed: np.ndarray, policy: PrecisionPolicy = FP32,
                  embed_t: np.ndarray | None = None) -> np.ndarray:
    """Project onto the vocabulary with the tied embedding (no output bias).

    ``embed_t`` is an optional C-contiguous copy of ``embed.T``. BLAS handles the
    transposed view through a path whose per-row results depend on the row count.
    """
    lead = x.shape[:-1]
    proj = embed.T if embed_t is None else embed_t
    return matmul(x.reshape(-1, x.shape[-1]), proj, policy).reshape(*lead, embed.shape[0])


class DecoderCache:
    """Per-layer key/value projections for incremental decoding.

    Self-attention buffers are ``[rows, heads, capacity, head_dim]`` and grow
    by doubling; the first ``steps`` time slots are valid. Cross-attention
    buffers hold the projected encoder memory and are filled once.
    """

    def __init__(self, n_layers: int, n_heads: int, head_dim: int, dtype, pool: MemoryPool,
                 capacity: int = 16):
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.head_dim = head_dim
        self.dtype = np.dtype(dtype)
        self.pool = pool
        self.steps = 0
        self.capacity = capacity
        self.rows = 0
        self.self_k: list[np.ndarray] = []
        self.self_v: list[np.ndarray] = []
        self.cross_k: list[np.ndarray] = []
        self.cross_v: list[np.ndarray] = []
        self.src_mask: np.ndarray | None = None  # additive [rows, 1, 1, S]
        self._blocks: dict[int, Block] = {}

    def _alloc(self, shape) -> np.ndarray:
        blk, arr = self.pool.empty(shape, self.dtype)
        self._blocks[id(arr)] = blk
        return arr

    def _free(self, arr: np.ndarray) -> None:
        blk = self._blocks.pop(id(arr), None)
        if blk is not None:
            self.pool.release(blk)

    def init_cross(self, keys: list[np.ndarray], values: list[np.ndarray], src_mask: np.ndarray) -> None:
        if self.cross_k:
            raise InternalStateError("cross-attention cache already initialised")
        self.rows = keys[0].shape[0]
        with op("Copy"):
            for k, v in zip(keys, values):
                ck, cv = self._alloc(k.shape), self._alloc(v.shape)
                ck[...] = k
                cv[...] = v
                self.cross_k.append(ck)
                self.cross_v.append(cv)
            shape = (self.rows, self.n_heads, self.capacity, self.head_dim)
            for _ in range(self.n_layers):
                self.self_k.append(self._alloc(shape))
                self.self_v.append(self._alloc(shape))
        self.src_mask = src_mask

    def write(self, layer: int, k: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Store this step's key/value for ``layer``; return the valid prefix views."""
        t = self.steps
        if layer == 0 and t == self.capacity:
            self._grow()
        self.self_k[layer][:, :, t] = k[:, :, 0]
        self.self_v[layer][:, :, t] = v[:, :, 0]
        return self.self_k[layer][:, :, : t + 1], self.self_v[layer][:, :, : t + 1]

    def advance(self) -> None:
        self.steps += 1

    def _grow(self) -> None:
        new_cap = self.capacity * 2
        shape = (self.rows, self.n_heads, new_cap, self.head_dim)
        with op("Copy"):
            for bufs in (self.self_k, self.self_v):
                for i, old in enumerate(bufs):
                    new = self._alloc(shape)
                    new[:, :, : self.capacity] = old
                    self._free(old)
                    bufs[i] = new
        self.capacity = new_cap

    def select(self, rows: np.ndarray) -> None:
        """Keep (and possibly repeat) the given rows, in the given order."""
        rows = np.asarray(rows, dtype=np.intp)
        if rows.size and (rows.min() < 0 or rows.max() >= self.rows):
            raise InternalStateError(f"row selection {rows.max()} outside live batch of {self.rows}")
        with op("Copy"):
            for bufs in (self.self_k, self.self_v, self.cross_k, self.cross_v):
                for i, old in enumerate(bufs):
                    new = self._alloc((len(rows),) + old.shape[1:])
                    np.take(old, rows, axis=0, out=new)
                    self._free(old)
                    bufs[i] = new
            self.src_mask = self.src_mask[rows]
        self.rows = len(rows)

    def release(self) -> None:
        for bufs in (self.self_k, self.self_v, self.cross_k, self.cross_v):
            for arr in bufs:
                self._free(arr)
            bufs.clear()


class Transformer:
    """Inference-only model bound to one weight set and precision policy."""

    def __init__(self, config: ModelConfig, weights: WeightStore | Mapping[str, np.ndarray],
                 policy: PrecisionPolicy = FP32):
        if not isinstance(weights, WeightStore):
            weights = WeightStore(config, weights)
        self.config = config
        self.policy = policy
        self.w = weights.astype(policy.compute)
        self._fused: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self._embed_t = np.ascontiguousarray(self.w["embed"].T)

    @property
    def n_params(self) -> int:
        return param_count(self.config)

    def _fuse(self, prefix: str, parts: str) -> tuple[np.ndarray, np.ndarray]:
        key = f"{prefix}:{parts}"
        hit = self._fused.get(key)
        if hit is None:
            w = np.concatenate([self.w[f"{prefix}.{p}.weight"] for p in parts], axis=1)
            b = np.concatenate([self.w[f"{prefix}.{p}.bias"] for p in parts])
            hit = self._fused[key] = (w, b)
        return hit

    def _ln(self, x, prefix):
        return layer_norm(x, self.w[f"{prefix}.gain"], self.w[f"{prefix}.bias"])

    def _self_attention_full(self, h, prefix, mask):
        cfg, pol = self.config, self.policy
        w, b = self._fuse(prefix, "qkv")
        qkv = linear(h, w, b, pol)
        q, k, v = (split_heads(t, cfg.n_heads) for t in np.split(qkv, 3, axis=-1))
        out = attend(q, k, v, pol, mask, self.w[f"{prefix}.rel_k"], self.w[f"{prefix}.rel_v"], 0,
                     cfg.max_rel_pos)
        return linear(merge_heads(out), self.w[f"{prefix}.o.weight"], self.w[f"{prefix}.o.bias"], pol)

    def _ffn(self, h, prefix):
        w = self.w
        return ffn(h, w[f"{prefix}.w1"], w[f"{prefix}.b1"], w[f"{prefix}.w2"], w[f"{prefix}.b2"], self.policy)

    def _dlcl(self, ys):
        n = len(ys)
        norms = [(self.w[f"enc.dlcl_ln.{k}.gain"], self.w[f"enc.dlcl_ln.{k}.bias"]) for k in range(n)]
        return dlcl_combine(ys, self.w[f"enc.dlcl.{n}.weights"].astype(np.float32), norms)

    def encode(self, src_ids: np.ndarray) -> EncoderState:
        """Encode a PAD-padded id matrix [batch, src_len]."""
        cfg = self.config
        src_ids = np.asarray(src_ids)
        if src_ids.ndim != 2:
            raise DimensionError(f"encode expects [batch, len] ids, got {src_ids.shape}")
        keep = src_ids != PAD
        mask = padding_mask(keep)
        x = embed_and_scale(src_ids, self.w["embed"])
        ys = [x]
        if cfg.use_dlcl:
            x = self._dlcl(ys)
        for i in range(cfg.enc_layers):
            p = f"enc.{i}"
            x = x + self._self_attention_full(self._ln(x, f"{p}.ln_attn"), f"{p}.self_attn", mask)
            x = x + self._ffn(self._ln(x, f"{p}.ln_ffn"), f"{p}.ffn")
            if cfg.use_dlcl:
                ys.append(x)
                x = self._dlcl(ys)
        return EncoderState(self._ln(x, "enc.ln_final"), keep)

    def _cross_kv(self, memory, layer: int):
        w, b = self._fuse(f"dec.{layer}.cross_attn", "kv")
        kv = linear(memory, w, b, self.policy)
        k, v = np.split(kv, 2, axis=-1)
        return split_heads(k, self.config.n_heads), split_heads(v, self.config.n_heads)

    def _cross_attention(self, h, layer, k, v, mask):
        p = f"dec.{layer}.cross_attn"
        q = split_heads(linear(h, self.w[f"{p}.q.weight"], self.w[f"{p}.q.bias"], self.policy),
                        self.config.n_heads)
        out = attend(q, k, v, self.policy, mask)
        return linear(merge_heads(out), self.w[f"{p}.o.weight"], self.w[f"{p}.o.bias"], self.policy)

    def decoder_forward(self, tgt_ids: np.ndarray, enc: EncoderState) -> np.ndarray:
        """Uncached decoder over whole prefixes [batch, T] -> logits [batch, T, vocab]."""
        cfg = self.config
        tgt_ids = np.asarray(tgt_ids)
        t = tgt_ids.shape[1]
        x = embed_and_scale(tgt_ids, self.w["embed"])
        causal = _causal_mask(t)
        src_mask = enc.additive_mask
        for i in range(cfg.dec_layers):
            p = f"dec.{i}"
            x = x + self._self_attention_full(self._ln(x, f"{p}.ln_attn"), f"{p}.self_attn", causal)
            k, v = self._cross_kv(enc.memory, i)
            x = x + self._cross_attention(self._ln(x, f"{p}.ln_cross"), i, k, v, src_mask)
            x = x + self._ffn(self._ln(x, f"{p}.ln_ffn"), f"{p}.ffn")
        return output_logits(self._ln(x, "dec.ln_final"), self.w["embed"], self.policy, self._embed_t)

    def new_cache(self, enc: EncoderState, pool: MemoryPool | None = None) -> DecoderCache:
        cfg = self.config
        cache = DecoderCache(cfg.dec_layers, cfg.n_heads, cfg.head_dim, self.policy.dtype, pool or MemoryPool())
        keys, values = zip(*(self._cross_kv(enc.memory, i) for i in range(cfg.dec_layers)))
        cache.init_cross(list(keys), list(values), enc.additive_mask)
        return cache

    def decode_step(self, prev_ids, step: int, cache: DecoderCache) -> np.ndarray:
        """One cached decoder step for every live row -> logits [rows, vocab]."""
        cfg, pol, w = self.config, self.policy, self.w
        if cache.steps != step:
            raise InternalStateError(f"decoder cache holds {cache.steps} steps, asked for step {step}")
        prev_ids = np.asarray(prev_ids).reshape(-1, 1)
        if prev_ids.shape[0] != cache.rows:
            raise InternalStateError(f"{prev_ids.shape[0]} tokens for a cache of {cache.rows} rows")
        x = embed_and_scale(prev_ids, w["embed"])
        for i in range(cfg.dec_layers):
            p = f"dec.{i}"
            h = self._ln(x, f"{p}.ln_attn")
            fw, fb = self._fuse(f"{p}.self_attn", "qkv")
            q, k, v = (split_heads(t, cfg.n_heads) for t in np.split(linear(h, fw, fb, pol), 3, axis=-1))
            keys, values = cache.write(i, k, v)
            att = attend(q, keys, values, pol, None, w[f"{p}.self_attn.rel_k"], w[f"{p}.self_attn.rel_v"],
                         step, cfg.max_rel_pos)
            x = x + linear(merge_heads(att), w[f"{p}.self_attn.o.weight"], w[f"{p}.self_attn.o.bias"], pol)
            x = x + self._cross_attention(self._ln(x, f"{p}.ln_cross"), i, cache.cross_k[i], cache.cross_v[i],
                                          cache.src_mask)
            x = x + self._ffn(self._ln(x, f"{p}.ln_ffn"), f"{p}.ffn")
        cache.advance()
        logits = output_logits(self._ln(x, "dec.ln_final"), w["embed"], pol, self._embed_t)
        return logits[:, 0, :]

    def start(self, src_ids: np.ndarray, pool: MemoryPool | None = None) -> "DecodeSession":
        return DecodeSession(self, src_ids, pool)


class DecodeSession:
    """Encoder output plus decoder cache for one batch, addressed by live rows."""

    def __init__(self, model: Transformer, src_ids: np.ndarray, pool: MemoryPool | None = None):
        self.model = model
        self.enc = model.encode(src_ids)
        self.cache = model.new_cache(self.enc, pool)
        self.steps = 0

    @property
    def rows(self) -> int:
        return self.cache.rows

    @property
    def vocab_size(self) -> int:
        return self.model.config.vocab_size

    def step(self, prev_ids) -> np.ndarray:
        logits = self.model.decode_step(prev_ids, self.steps, self.cache)
        self.steps += 1
        return logits

    def select(self, rows) -> None:
        self.cache.select(rows)

    def close(self) -> None:
        self.cache.release()


def decode_step(prev_ids, step: int, cache: DecoderCache, model: Transformer) -> np.ndarray:
    return model.decode_step(prev_ids, step, cache)


def encode(src_ids, model: Transformer) -> EncoderState:
    return model.encode(src_ids)
