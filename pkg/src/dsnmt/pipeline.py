"""Translation pipeline: BPE -> ids -> dynamic batches -> decode -> text.

Parallel runs split the input into contiguous line shards, one per worker.
Workers are threads sharing the read-only weights; each owns its memory pool,
decoder caches and profiler shard, so no mutable state crosses workers.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .batching import plan_batches, restore_order
from .checkpoint import load_checkpoint
from .errors import IntegrityError
from .model import Transformer
from .pool import MemoryPool
from .profiler import Profiler, ProfileReport
from .search import beam_decode, greedy_decode
from .tensor import DType, PrecisionPolicy
from .text import EOS, PAD, BpeCodec, Vocabulary, bpe_remove, load_merges, load_vocab

log = logging.getLogger(__name__)


@dataclass
class WorkerConfig:
    workers: int = 1
    batch_size: int = 64
    max_tokens: int = 4096
    precision: DType = DType.F32
    beam: int = 1
    max_src_len: int = 120
    max_tgt_len: int = 200
    prune: bool = True
    early_stop: bool = True

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.beam < 1 or self.batch_size < 1 or self.max_tokens < 1:
            raise ValueError("beam, batch_size and max_tokens must be >= 1")

    @classmethod
    def cpu(cls, **kw) -> "WorkerConfig":
        return cls(**{"workers": 24, "batch_size": 64, **kw})

    @classmethod
    def gpu(cls, **kw) -> "WorkerConfig":
        return cls(**{"workers": 1, "batch_size": 512, **kw})


@dataclass
class RunStats:
    sentences: int = 0
    source_tokens: int = 0
    wall: float = 0.0
    profile: ProfileReport | None = field(default=None, repr=False)

    @property
    def tokens_per_sec(self) -> float:
        return self.source_tokens / self.wall if self.wall > 0 else 0.0


def pad_batch(seqs: list[list[int]]) -> np.ndarray:
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


def decode_batch(model: Transformer, seqs: list[list[int]], cfg: WorkerConfig,
                 pool: MemoryPool | None = None) -> list[list[int]]:
    """Decode one batch of id sequences; returns output ids per sequence."""
    session = model.start(pad_batch(seqs), pool)
    try:
        if cfg.beam == 1:
            return greedy_decode(session, cfg.max_tgt_len, prune=cfg.prune)
        hyps = beam_decode(session, cfg.beam, cfg.max_tgt_len, early_stop=cfg.early_stop, prune=cfg.prune)
        return [h.tokens for h in hyps]
    finally:
        session.close()


def translate_ids(model: Transformer, seqs: list[list[int]], cfg: WorkerConfig,
                  pool: MemoryPool | None = None) -> list[list[int]]:
    """Dynamic-batch and decode; outputs come back in input order."""
    if not seqs:
        return []
    pool = pool if pool is not None else MemoryPool()
    plan = plan_batches([len(s) for s in seqs], cfg.max_tokens, cfg.batch_size)
    outputs: list[list[int]] = []
    for batch in plan.batches:
        outputs.extend(decode_batch(model, [seqs[i] for i in batch], cfg, pool))
        pool.reset()
    return restore_order(outputs, plan)


class Translator:
    """A model bundled with its vocabulary and BPE codes."""

    def __init__(self, model: Transformer, vocab: Vocabulary, codec: BpeCodec):
        if vocab.size != model.config.vocab_size:
            raise IntegrityError(f"vocabulary has {vocab.size} entries, model expects "
                                 f"{model.config.vocab_size}")
        self.model = model
        self.vocab = vocab
        self.codec = codec

    @classmethod
    def load(cls, model_path, vocab_path, codes_path, precision: DType = DType.F32) -> "Translator":
        weights, config = load_checkpoint(model_path)
        model = Transformer(config, weights, PrecisionPolicy(precision))
        return cls(model, load_vocab(vocab_path), load_merges(codes_path))

    def preprocess(self, line: str, max_src_len: int) -> list[int]:
        ids = self.vocab.encode_ids(self.codec.apply(line))
        if len(ids) > max_src_len:
            log.warning("source sentence of %d tokens truncated to %d", len(ids), max_src_len)
            ids = ids[: max_src_len - 1] + [EOS]
        return ids

    def postprocess(self, ids: list[int]) -> str:
        return bpe_remove(self.vocab.decode_ids(ids))

    def translate_lines(self, lines: list[str], cfg: WorkerConfig, pool: MemoryPool | None = None,
                        profiler: Profiler | None = None) -> tuple[list[str], int]:
        """Translate a list of lines; returns (translations, source token count)."""
        seqs = [self.preprocess(line, cfg.max_src_len) for line in lines]
        with profiler.record() if profiler is not None and seqs else nullcontext():
            out = translate_ids(self.model, seqs, cfg, pool)
        return [self.postprocess(o) for o in out], sum(len(s) for s in seqs)


def split_shards(n_lines: int, workers: int) -> list[tuple[int, int]]:
    """Contiguous [start, stop) ranges whose sizes differ by at most one line."""
    base, extra = divmod(n_lines, workers)
    shards, start = [], 0
    for w in range(workers):
        size = base + (1 if w < extra else 0)
        shards.append((start, start + size))
        start += size
    return shards


def read_lines(path: str | Path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    if not text:
        return []
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    return lines


def write_lines(path: str | Path, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join(line + "\n" for line in lines))


def translate_corpus(translator: Translator, lines: list[str], cfg: WorkerConfig,
                     profile: bool = False) -> tuple[list[str], RunStats]:
    shards = [lines[a:b] for a, b in split_shards(len(lines), cfg.workers)]
    profilers = [Profiler() if profile else None for _ in shards]

    def work(i: int):
        return translator.translate_lines(shards[i], cfg, MemoryPool(), profilers[i])

    start = time.perf_counter()
    if cfg.workers == 1:
        results = [work(0)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            futures = [ex.submit(work, i) for i in range(len(shards))]
            errors = [f.exception() for f in futures]  # waits for every worker
            first = next((e for e in errors if e is not None), None)
            if first is not None:
                raise first
            results = [f.result() for f in futures]
    wall = time.perf_counter() - start
    out = [line for r in results for line in r[0]]
    stats = RunStats(len(lines), sum(r[1] for r in results), wall)
    if profile:
        merged = Profiler()
        for p in profilers:
            merged.merge(p)
        stats.profile = merged.report()
    return out, stats


def translate_file(input_path, output_path, translator: Translator, cfg: WorkerConfig,
                   profile: bool = False) -> RunStats:
    lines = read_lines(input_path)
    out, stats = translate_corpus(translator, lines, cfg, profile)
    write_lines(output_path, out)
    return stats


def parallel_translate(input_path, output_path, workers: int, translator: Translator,
                       cfg: WorkerConfig | None = None, profile: bool = False) -> RunStats:
    cfg = cfg or WorkerConfig()
    cfg = WorkerConfig(**{**cfg.__dict__, "workers": workers})
    return translate_file(input_path, output_path, translator, cfg, profile)


def profile_run(input_path, translator: Translator, cfg: WorkerConfig, tsv_path=None,
                output_path=None) -> ProfileReport:
    """Translate with profiling on; prints the table to stderr and optionally writes TSV."""
    lines = read_lines(input_path)
    out, stats = translate_corpus(translator, lines, cfg, profile=True)
    if output_path is not None:
        write_lines(output_path, out)
    report = stats.profile
    report.print_table()
    if tsv_path is not None:
        report.write_tsv(tsv_path)
    return report
