"""Token-budgeted dynamic batching and order restoration."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InternalStateError


@dataclass
class BatchPlan:
    batches: list[list[int]]  # input indices per batch, longest first

    @property
    def original_index(self) -> list[int]:
        """Input position of each sentence, in plan order."""
        return [i for b in self.batches for i in b]

    def __len__(self) -> int:
        return sum(len(b) for b in self.batches)


def plan_batches(lengths: list[int], max_tokens: int, max_sentences: int | None = None) -> BatchPlan:
    """Group sentences so each batch's padded size stays within ``max_tokens``.

    Sentences are taken longest first (stable on ties). A batch keeps growing
    while ``(size + 1) * longest <= max_tokens`` and ``size + 1 <= max_sentences``;
    a sentence longer than the budget on its own gets a batch to itself.
    """
    cap = max_sentences if max_sentences is not None else float("inf")
    if cap < 1:
        raise ValueError("max_sentences must be >= 1")
    order = sorted(range(len(lengths)), key=lambda i: -lengths[i])
    batches: list[list[int]] = []
    cur: list[int] = []
    longest = 0
    for i in order:
        if cur and ((len(cur) + 1) * longest > max_tokens or len(cur) + 1 > cap):
            batches.append(cur)
            cur = []
        if not cur:
            longest = lengths[i]
        cur.append(i)
    if cur:
        batches.append(cur)
    return BatchPlan(batches)


def restore_order(outputs: list, plan: BatchPlan) -> list:
    """Undo the plan's permutation: ``outputs`` are in plan order."""
    index = plan.original_index
    if len(outputs) != len(index):
        raise InternalStateError(f"{len(outputs)} outputs for a plan of {len(index)} sentences")
    restored: list = [None] * len(index)
    for out, i in zip(outputs, index):
        restored[i] = out
    return restored
