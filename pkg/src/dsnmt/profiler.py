"""Operation-level wall-clock profiling.

Tensor primitives report their time under a fixed label set. Whatever is not
covered by a label during a recorded region is reported as ``Other``, so the
shares of one report always add up to the full recorded time.
"""

from __future__ import annotations

import functools
import sys
import time
from collections import Counter, defaultdict
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, TextIO

LABELS = ("MatMul", "Softmax", "LayerNorm", "Copy", "Convert")
OTHER = "Other"

_active: ContextVar["Profiler | None"] = ContextVar("dsnmt_profiler", default=None)


@dataclass
class OpStat:
    calls: int
    total: float  # seconds
    share: float  # percent of recorded time


@dataclass
class ProfileReport:
    ops: dict[str, OpStat] = field(default_factory=dict)
    wall: float = 0.0

    def largest(self, include_other: bool = False) -> str:
        names = [n for n in self.ops if include_other or n != OTHER]
        return max(names, key=lambda n: self.ops[n].total)

    def to_tsv(self) -> str:
        lines = ["label\tcalls\ttotal_ms\tpercent"]
        for name, st in self.ops.items():
            lines.append(f"{name}\t{st.calls}\t{st.total * 1e3:.3f}\t{st.share:.2f}")
        return "\n".join(lines) + "\n"

    def write_tsv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_tsv(), encoding="utf-8")

    def print_table(self, stream: TextIO | None = None) -> None:
        stream = stream or sys.stderr
        print(f"{'op':<10} {'calls':>9} {'total ms':>12} {'share':>7}", file=stream)
        for name, st in sorted(self.ops.items(), key=lambda kv: -kv[1].total):
            print(f"{name:<10} {st.calls:>9} {st.total * 1e3:>12.2f} {st.share:>6.1f}%", file=stream)
        print(f"{'wall':<10} {'':>9} {self.wall * 1e3:>12.2f}", file=stream)


class Profiler:
    """Accumulates per-label time for the regions run under :meth:`record`.

    One profiler belongs to exactly one decode stream; parallel workers each
    get their own and the shards are combined with :meth:`merge`.
    """

    def __init__(self) -> None:
        self.calls: Counter[str] = Counter()
        self.totals: defaultdict[str, float] = defaultdict(float)
        self.wall = 0.0
        self._depth = 0

    @contextmanager
    def record(self) -> Iterator["Profiler"]:
        token = _active.set(self)
        start = time.perf_counter()
        try:
            yield self
        finally:
            self.wall += time.perf_counter() - start
            _active.reset(token)

    def merge(self, other: "Profiler") -> None:
        self.calls.update(other.calls)
        for k, v in other.totals.items():
            self.totals[k] += v
        self.wall += other.wall

    def report(self) -> ProfileReport:
        labelled = sum(self.totals[k] for k in LABELS)
        other = max(self.wall - labelled, 0.0)
        denom = labelled + other
        ops = {}
        for name in LABELS:
            t = self.totals[name]
            ops[name] = OpStat(self.calls[name], t, 100.0 * t / denom if denom > 0 else 0.0)
        ops[OTHER] = OpStat(0, other, 100.0 * other / denom if denom > 0 else 0.0)
        return ProfileReport(ops=ops, wall=self.wall)


@contextmanager
def op(label: str) -> Iterator[None]:
    """Time the enclosed block under ``label`` if a profiler is recording.

    Nested labelled regions are charged to the outermost one only.
    """
    prof = _active.get()
    if prof is None or prof._depth:
        yield
        return
    prof._depth += 1
    start = time.perf_counter()
    try:
        yield
    finally:
        prof.totals[label] += time.perf_counter() - start
        prof.calls[label] += 1
        prof._depth -= 1


def timed(label: str):
    def wrap(fn):
        @functools.wraps(fn)
        def inner(*args, **kwargs):
            prof = _active.get()
            if prof is None or prof._depth:
                return fn(*args, **kwargs)
            prof._depth += 1
            start = time.perf_counter()
            try:
                return fn(*args, **kwargs)
            finally:
                prof.totals[label] += time.perf_counter() - start
                prof.calls[label] += 1
                prof._depth -= 1

        return inner

    return wrap
