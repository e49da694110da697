"""Greedy and beam search over a decode session.

A session is anything with ``rows``, ``vocab_size``, ``step(prev_ids) ->
logits[rows, vocab]`` and ``select(rows)`` (keep/repeat rows of every live
tensor). :class:`dsnmt.model.DecodeSession` is the real one; tests plug in
small hand-built ones.

Beam scores are unnormalised sums of log-probabilities, so they never
increase as a hypothesis grows. That is what makes the early stop exact: once
a finished hypothesis scores at least as well as every active one, nothing
reachable later can beat it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InternalStateError
from .tensor import argmax_rows, log_softmax
from .text import BOS, EOS

PRUNE_RATIO = 0.25


@dataclass
class Hypothesis:
    tokens: list[int] = field(default_factory=list)
    score: float = 0.0
    finished: bool = False


@dataclass
class Beam:
    width: int
    active: list[Hypothesis] = field(default_factory=list)
    best_finished: Hypothesis | None = None

    def __post_init__(self) -> None:
        if self.width < 1:
            raise ValueError(f"beam width must be >= 1, got {self.width}")

    def best(self) -> Hypothesis:
        if self.best_finished is not None:
            return self.best_finished
        if self.active:
            return self.active[0]
        return Hypothesis([], 0.0, True)


def should_stop(beam: Beam) -> bool:
    """True once the best finished hypothesis is at least as good as every active one."""
    if beam.best_finished is None:
        return False
    if not beam.active:
        return True
    return beam.best_finished.score >= max(h.score for h in beam.active)


@dataclass
class BatchState:
    """Live rows of a greedy batch: which sentence each row is, and whether it is done."""

    sentence: np.ndarray  # original slot of each live row
    finished: np.ndarray  # bool per live row
    prev: np.ndarray  # last emitted token per live row


def prune_finished(state: BatchState, session) -> tuple[BatchState, dict[int, int]]:
    """Drop finished rows from the state and from every live tensor of ``session``.

    Returns the compacted state and a map from surviving original slot to its
    new row.
    """
    n = len(state.sentence)
    if session.rows != n or len(state.finished) != n or len(state.prev) != n:
        raise InternalStateError(f"batch state has {n} rows but session has {session.rows}")
    keep = np.flatnonzero(~state.finished)
    session.select(keep)
    new = BatchState(state.sentence[keep], state.finished[keep], state.prev[keep])
    return new, {int(s): i for i, s in enumerate(new.sentence)}


def greedy_decode(session, max_len: int, prune: bool = True) -> list[list[int]]:
    """Argmax decoding straight on the logits (no log-softmax needed).

    A sentence stops after emitting EOS or after ``max_len`` tokens. With
    ``prune`` the finished rows are compacted away once they make up a quarter
    of the live batch; otherwise they keep being fed EOS and their outputs are
    ignored.
    """
    n = session.rows
    outputs: list[list[int]] = [[] for _ in range(n)]
    state = BatchState(np.arange(n), np.zeros(n, dtype=bool), np.full(n, BOS, dtype=np.int64))
    for _ in range(max_len):
        if state.finished.all():
            break
        nxt = argmax_rows(session.step(state.prev))
        for r, s in enumerate(state.sentence.tolist()):
            if state.finished[r]:
                continue
            tok = nxt[r]
            outputs[s].append(tok)
            if tok == EOS or len(outputs[s]) >= max_len:
                state.finished[r] = True
        state.prev = np.where(state.finished, EOS, np.asarray(nxt, dtype=np.int64))
        done = int(state.finished.sum())
        if prune and done and not state.finished.all() and done >= PRUNE_RATIO * len(state.finished):
            state, _ = prune_finished(state, session)
    return outputs


def _top_candidates(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` best entries, score-descending, ties to lower index."""
    if k < scores.size:
        idx = np.argpartition(-scores, k - 1)[:k]
    else:
        idx = np.arange(scores.size)
    return idx[np.lexsort((idx, -scores[idx]))]


def beam_decode(session, width: int, max_len: int, early_stop: bool = True,
                prune: bool = True) -> list[Hypothesis]:
    """Beam search for every sentence of the session (one row each at entry).

    Each step ranks the ``2 * width`` best continuations of a sentence; EOS
    continuations in the first ``width`` ranks become finished candidates, and
    the best non-EOS continuations refill the active set up to ``width``. A
    sentence finishes when :func:`should_stop` fires (if ``early_stop``), when
    no active hypothesis remains, or after ``max_len`` tokens.
    """
    n = session.rows
    V = session.vocab_size
    beams = [Beam(width, [Hypothesis()]) for _ in range(n)]
    done = [False] * n
    results: list[Hypothesis | None] = [None] * n
    # sentence id owning each live row, in row order; rows of one sentence are contiguous
    owners = list(range(n))
    prev = np.full(n, BOS, dtype=np.int64)

    for step in range(max_len):
        if all(done):
            break
        # float64 so a score does not drift with rounding as hypotheses grow
        logp = log_softmax(session.step(prev), np.float64)
        new_rows: list[int] = []
        new_owners: list[int] = []
        new_prev: list[int] = []
        i = 0
        while i < len(owners):
            s = owners[i]
            r1 = i
            while r1 < len(owners) and owners[r1] == s:
                r1 += 1
            rows = range(i, r1)
            beam = beams[s]
            if done[s]:
                # parked sentence kept in the batch when pruning is off
                new_rows.extend(rows)
                new_owners.extend([s] * len(rows))
                new_prev.extend([EOS] * len(rows))
                i = r1
                continue
            base = np.array([h.score for h in beam.active], dtype=np.float64)
            flat = (base[:, None] + logp[i:r1]).ravel()
            active: list[Hypothesis] = []
            for rank, c in enumerate(_top_candidates(flat, 2 * width).tolist()):
                parent, tok = divmod(c, V)
                score = float(flat[c])
                hyp = beam.active[parent]
                if tok == EOS:
                    if rank < width and (beam.best_finished is None or score > beam.best_finished.score):
                        beam.best_finished = Hypothesis(hyp.tokens + [EOS], score, True)
                elif len(active) < width:
                    active.append(Hypothesis(hyp.tokens + [tok], score))
                    new_rows.append(i + parent)
                    new_owners.append(s)
                    new_prev.append(tok)
                if len(active) == width and rank >= width - 1:
                    break
            beam.active = active
            if not active or step + 1 >= max_len or (early_stop and should_stop(beam)):
                done[s] = True
                results[s] = beam.best()
                if prune:
                    del new_rows[len(new_rows) - len(active):]
                    del new_owners[len(new_owners) - len(active):]
                    del new_prev[len(new_prev) - len(active):]
            i = r1
        if all(done):
            break
        session.select(np.asarray(new_rows, dtype=np.intp))
        owners = new_owners
        prev = np.asarray(new_prev, dtype=np.int64)

    for s in range(n):
        if results[s] is None:
            results[s] = beams[s].best()
    return results  # type: ignore[return-value]
