"""Seeded random models, vocabularies and corpora for desk-scale testing."""

from __future__ import annotations

import string
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .config import ModelConfig, preset, weight_shapes
from .model import WeightStore
from .tensor import DType
from .text import EOS, RESERVED, SEP, BpeCodec, Vocabulary, write_merges, write_vocab


def toy_weights(config: ModelConfig, seed: int = 0, eos_scale: float = 1.0) -> WeightStore:
    """Random float32 weights: matrices ~ N(0, 1/sqrt(d_model)) std, unit layer norms.

    The final decoder norm gain is standard normal instead of one.

    ``eos_scale`` multiplies the EOS embedding row; values above 1 make random
    models stop earlier, which gives search tests varied lengths.
    """
    rng = np.random.default_rng(seed)
    std = np.float32(config.d_model ** -0.5)
    out: dict[str, np.ndarray] = {}
    for name, shape in weight_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        is_norm = ".ln_" in name or ".dlcl_ln." in name
        if name == "dec.ln_final.gain":
            # random signs keep the tied projection from just echoing the input token
            t = rng.standard_normal(shape, dtype=np.float32)
        elif is_norm and leaf == "gain":
            t = np.ones(shape, np.float32)
        elif is_norm:
            t = np.zeros(shape, np.float32)
        elif leaf == "weights":  # dlcl combination
            n = shape[0]
            t = (np.full(shape, 1.0 / n) + 0.05 * rng.standard_normal(shape)).astype(np.float32)
        elif leaf in ("bias", "b1", "b2"):
            t = rng.standard_normal(shape, dtype=np.float32) * np.float32(0.02)
        else:
            t = rng.standard_normal(shape, dtype=np.float32) * std
        out[name] = t
    if eos_scale != 1.0:
        out["embed"][EOS] *= np.float32(eos_scale)
    return WeightStore(config, out)


def toy_vocab(vocab_size: int, seed: int = 0) -> tuple[list[str], list[tuple[str, str]]]:
    """Synthetic token list (for the vocab file) and merge table of matching size.

    Every BPE symbol contributes two tokens, ``sym`` and ``sym@@``, so any word
    over the alphabet segments into in-vocabulary tokens.
    """
    n_tokens = vocab_size - len(RESERVED)
    if n_tokens < 2:
        raise ValueError(f"vocab_size {vocab_size} leaves no room for content tokens")
    n_symbols = n_tokens // 2
    symbols = list(string.ascii_lowercase[: min(26, n_symbols)])
    known = set(symbols)
    merges: list[tuple[str, str]] = []
    rng = np.random.default_rng(seed)
    while len(symbols) < n_symbols:
        a = symbols[int(rng.integers(len(symbols)))]
        b = symbols[int(rng.integers(len(symbols)))]
        ab = a + b
        if len(ab) > 8 or ab in known:
            continue
        known.add(ab)
        symbols.append(ab)
        merges.append((a, b))
    tokens = []
    for s in symbols:
        tokens.extend((s, s + SEP))
    for i in range(n_tokens - len(tokens)):
        tokens.append(f"<extra{i}>")
    return tokens, merges


def gen_toy_model(config: ModelConfig | str, seed: int, path: str | Path, vocab_size: int | None = None,
                  dtype: DType = DType.F32, eos_scale: float = 1.0) -> dict[str, Path]:
    """Write a random checkpoint plus matching ``.vocab`` and ``.codes`` files.

    Returns the three paths keyed by ``model``, ``vocab`` and ``codes``.
    """
    if isinstance(config, str):
        config = preset(config)
    if vocab_size is not None:
        config = config.replace(vocab_size=vocab_size)
    path = Path(path)
    weights = toy_weights(config, seed, eos_scale)
    save_checkpoint(weights, config, dtype, path)
    tokens, merges = toy_vocab(config.vocab_size, seed)
    vocab_path = path.with_suffix(".vocab")
    codes_path = path.with_suffix(".codes")
    write_vocab(tokens, vocab_path)
    write_merges(merges, codes_path)
    return {"model": path, "vocab": vocab_path, "codes": codes_path}


def toy_text_assets(vocab_size: int, seed: int = 0) -> tuple[Vocabulary, BpeCodec]:
    tokens, merges = toy_vocab(vocab_size, seed)
    return Vocabulary(tokens), BpeCodec(merges)


def toy_corpus(n_lines: int, seed: int = 0, min_words: int = 10, max_words: int = 50,
               max_word_len: int = 1, alphabet: str = string.ascii_lowercase) -> list[str]:
    """Random lines of short words. With ``max_word_len=1`` each word is one token."""
    rng = np.random.default_rng(seed)
    letters = np.array(list(alphabet))
    lines = []
    for _ in range(n_lines):
        n = int(rng.integers(min_words, max_words + 1))
        lens = rng.integers(1, max_word_len + 1, size=n)
        words = ["".join(letters[rng.integers(len(letters), size=k)]) for k in lens]
        lines.append(" ".join(words))
    return lines


def random_src_batch(rng: np.random.Generator, vocab_size: int, n: int, min_len: int = 1,
                     max_len: int = 8) -> list[list[int]]:
    """Random id sequences over content tokens, each terminated by EOS."""
    lo = len(RESERVED)
    return [rng.integers(lo, vocab_size, size=int(rng.integers(min_len, max_len + 1))).tolist() + [EOS]
            for _ in range(n)]
