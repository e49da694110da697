"""Vocabulary and BPE codec (fastBPE ``@@`` convention)."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import CorruptInputError, ParseError

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<s>", "</s>")
SEP = "@@"


class Vocabulary:
    """Token <-> id tables with ids 0..3 reserved for PAD/UNK/BOS/EOS."""

    def __init__(self, tokens: list[str]):
        self.id_to_token = list(RESERVED) + list(tokens)
        self.token_to_id: dict[str, int] = {}
        for i, tok in enumerate(tokens, start=len(RESERVED)):
            if tok in self.token_to_id:
                raise ValueError(f"duplicate token {tok!r}")
            self.token_to_id[tok] = i

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def encode_ids(self, tokens: list[str]) -> list[int]:
        return [self.token_to_id.get(t, UNK) for t in tokens] + [EOS]

    def decode_ids(self, ids) -> list[str]:
        out = []
        n = len(self.id_to_token)
        for i in ids:
            i = int(i)
            if i < 0 or i >= n:
                raise CorruptInputError(f"token id {i} outside vocabulary of size {n}")
            if i == EOS:
                break
            if i >= len(RESERVED):
                out.append(self.id_to_token[i])
        return out


def encode_ids(tokens: list[str], vocab: Vocabulary) -> list[int]:
    return vocab.encode_ids(tokens)


def decode_ids(ids, vocab: Vocabulary) -> list[str]:
    return vocab.decode_ids(ids)


@dataclass
class BpeCodec:
    merges: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.ranks: dict[tuple[str, str], int] = {}
        for i, pair in enumerate(self.merges):
            if pair in self.ranks:
                raise ValueError(f"duplicate merge {pair}")
            self.ranks[pair] = i
        self._cache: dict[str, tuple[str, ...]] = {}

    def segment(self, word: str) -> tuple[str, ...]:
        """Split one word into BPE symbols (without separators)."""
        hit = self._cache.get(word)
        if hit is not None:
            return hit
        symbols = list(word)
        ranks = self.ranks
        while len(symbols) > 1:
            best, best_rank = -1, None
            for i in range(len(symbols) - 1):
                r = ranks.get((symbols[i], symbols[i + 1]))
                if r is not None and (best_rank is None or r < best_rank):
                    best, best_rank = i, r
            if best < 0:
                break
            pair = (symbols[best], symbols[best + 1])
            merged, i = [], 0
            # merge every occurrence of the winning pair, left to right
            while i < len(symbols):
                if i < len(symbols) - 1 and (symbols[i], symbols[i + 1]) == pair:
                    merged.append(pair[0] + pair[1])
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            symbols = merged
        out = tuple(symbols)
        if len(self._cache) < 1 << 16:
            self._cache[word] = out
        return out

    def apply(self, line: str) -> list[str]:
        tokens: list[str] = []
        for word in line.split():
            pieces = self.segment(word)
            tokens.extend(p + SEP for p in pieces[:-1])
            tokens.append(pieces[-1])
        return tokens


def bpe_apply(line: str, codec: BpeCodec) -> list[str]:
    return codec.apply(line)


def bpe_remove(tokens: list[str]) -> str:
    return " ".join(tokens).replace(SEP + " ", "")


def load_vocab(path: str | Path) -> Vocabulary:
    tokens: list[str] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            tok = raw.rstrip("\n").rstrip("\r")
            if not tok or any(c.isspace() for c in tok):
                raise ParseError(f"malformed vocabulary entry {tok!r}", lineno)
            if tok in seen:
                raise ParseError(f"duplicate token {tok!r} (first on line {seen[tok]})", lineno)
            seen[tok] = lineno
            tokens.append(tok)
    return Vocabulary(tokens)


def load_merges(path: str | Path) -> BpeCodec:
    merges: list[tuple[str, str]] = []
    seen: dict[tuple[str, str], int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if line.startswith("#version"):
                continue
            parts = line.split(" ")
            # fastBPE codes files may carry a trailing frequency column
            if len(parts) == 3 and parts[2].isdigit():
                parts = parts[:2]
            if len(parts) != 2 or not all(parts):
                raise ParseError(f"expected two space-separated symbols, got {line!r}", lineno)
            pair = (parts[0], parts[1])
            if pair in seen:
                raise ParseError(f"duplicate merge {pair} (first on line {seen[pair]})", lineno)
            seen[pair] = lineno
            merges.append(pair)
    return BpeCodec(merges)


def write_vocab(tokens: list[str], path: str | Path) -> None:
    Path(path).write_text("".join(t + "\n" for t in tokens), encoding="utf-8")


def write_merges(merges: list[tuple[str, str]], path: str | Path) -> None:
    Path(path).write_text("".join(f"{a} {b}\n" for a, b in merges), encoding="utf-8")
