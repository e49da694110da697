"""Model hyperparameters, presets, and the canonical parameter layout."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ModelConfig:
    enc_layers: int
    dec_layers: int
    d_model: int = 512
    n_heads: int = 8
    d_ffn: int = 2048
    vocab_size: int = 32000
    max_rel_pos: int = 8
    use_dlcl: bool = False
    shared_embeddings: bool = True
    max_src_len: int = 120
    max_tgt_len: int = 200

    def __post_init__(self) -> None:
        for name in ("enc_layers", "dec_layers", "d_model", "n_heads", "d_ffn", "vocab_size",
                     "max_rel_pos", "max_src_len", "max_tgt_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not self.shared_embeddings:
            raise ValueError("only tied source/target/output embeddings are supported")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


PRESETS: dict[str, ModelConfig] = {
    "35-6": ModelConfig(35, 6),
    "35-1": ModelConfig(35, 1),
    "18-1": ModelConfig(18, 1),
    "9-1": ModelConfig(9, 1),
    "9-1-tiny": ModelConfig(9, 1, d_model=256),
}


def preset(name: str, **overrides) -> ModelConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    return base.replace(**overrides) if overrides else base


def _attention(prefix: str, d: int, rel: int | None, dh: int) -> dict[str, tuple[int, ...]]:
    out: dict[str, tuple[int, ...]] = {}
    for p in "qkvo":
        out[f"{prefix}.{p}.weight"] = (d, d)
        out[f"{prefix}.{p}.bias"] = (d,)
    if rel is not None:
        out[f"{prefix}.rel_k"] = (2 * rel + 1, dh)
        out[f"{prefix}.rel_v"] = (2 * rel + 1, dh)
    return out


def _norm(prefix: str, d: int) -> dict[str, tuple[int, ...]]:
    return {f"{prefix}.gain": (d,), f"{prefix}.bias": (d,)}


def _ffn(prefix: str, d: int, f: int) -> dict[str, tuple[int, ...]]:
    return {f"{prefix}.w1": (d, f), f"{prefix}.b1": (f,), f"{prefix}.w2": (f, d), f"{prefix}.b2": (d,)}


def weight_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every parameter tensor the config implies, in canonical (checkpoint) order.

    Linear weights are stored as ``[d_in, d_out]`` and applied as ``x @ W + b``.
    """
    d, f, k, dh = cfg.d_model, cfg.d_ffn, cfg.max_rel_pos, cfg.head_dim
    shapes: dict[str, tuple[int, ...]] = {"embed": (cfg.vocab_size, d)}
    for i in range(cfg.enc_layers):
        p = f"enc.{i}"
        shapes.update(_norm(f"{p}.ln_attn", d))
        shapes.update(_attention(f"{p}.self_attn", d, k, dh))
        shapes.update(_norm(f"{p}.ln_ffn", d))
        shapes.update(_ffn(f"{p}.ffn", d, f))
    if cfg.use_dlcl:
        # combination weights feeding layer l+1 (l = 0..L), the last one feeds the final norm
        for l in range(cfg.enc_layers + 1):
            shapes[f"enc.dlcl.{l + 1}.weights"] = (l + 1,)
        for kk in range(cfg.enc_layers + 1):
            shapes.update(_norm(f"enc.dlcl_ln.{kk}", d))
    shapes.update(_norm("enc.ln_final", d))
    for i in range(cfg.dec_layers):
        p = f"dec.{i}"
        shapes.update(_norm(f"{p}.ln_attn", d))
        shapes.update(_attention(f"{p}.self_attn", d, k, dh))
        shapes.update(_norm(f"{p}.ln_cross", d))
        shapes.update(_attention(f"{p}.cross_attn", d, None, dh))
        shapes.update(_norm(f"{p}.ln_ffn", d))
        shapes.update(_ffn(f"{p}.ffn", d, f))
    shapes.update(_norm("dec.ln_final", d))
    return shapes


def param_count(cfg: ModelConfig) -> int:
    """Exact number of stored parameters (the tied embedding counted once)."""
    return int(sum(int(np.prod(s)) for s in weight_shapes(cfg).values()))


def format_count(n: int) -> str:
    if n >= 10_000_000:
        return f"{n / 1e6:.0f}M"
    return f"{n / 1e6:.2f}M"
