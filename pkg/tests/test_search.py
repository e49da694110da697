import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_config
from fakes import TableSession
from dsnmt.errors import InternalStateError
from dsnmt.model import Transformer
from dsnmt.pipeline import pad_batch
from dsnmt.search import (
    BatchState,
    Beam,
    Hypothesis,
    beam_decode,
    greedy_decode,
    prune_finished,
    should_stop,
)
from dsnmt.text import EOS
from dsnmt.toy import random_src_batch, toy_weights


def always(token, V=7):
    def fn(sentence, prefix):
        x = np.zeros(V, np.float32)
        x[token] = 10
        return x
    return fn


class TestShouldStop:
    def test_finished_beats_active(self):
        assert should_stop(Beam(2, [Hypothesis([5], -1.5), Hypothesis([6], -2.0)], Hypothesis([3], -1.2, True)))

    def test_active_still_better(self):
        assert not should_stop(Beam(2, [Hypothesis([5], -1.0)], Hypothesis([3], -1.2, True)))

    def test_tie_stops(self):
        assert should_stop(Beam(1, [Hypothesis([5], -1.0)], Hypothesis([3], -1.0, True)))

    def test_nothing_finished(self):
        assert not should_stop(Beam(1, [Hypothesis([5], -1.0)]))

    def test_no_active(self):
        assert should_stop(Beam(1, [], Hypothesis([3], -4.0, True)))

    def test_width_validated(self):
        with pytest.raises(ValueError):
            Beam(0)


class TestGreedy:
    def test_always_eos(self):
        assert greedy_decode(TableSession(3, logit_fn=always(EOS)), 10) == [[EOS]] * 3

    def test_never_eos_hits_max_len(self):
        out = greedy_decode(TableSession(2, logit_fn=always(5)), 4)
        assert out == [[5, 5, 5, 5]] * 2

    def test_argmax_path(self):
        sess = TableSession(1, seed=3)
        out = greedy_decode(sess, 6)[0]
        ref = TableSession(1, seed=3)
        for i, t in enumerate(out):
            assert t == int(np.argmax(ref.logits(0, tuple(out[:i]))))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 9), st.integers(1, 12), st.integers(0, 10_000), st.floats(-2, 3))
    def test_prune_does_not_change_output(self, n, max_len, seed, bias):
        a = greedy_decode(TableSession(n, seed=seed, eos_bias=bias), max_len, prune=True)
        b = greedy_decode(TableSession(n, seed=seed, eos_bias=bias), max_len, prune=False)
        assert a == b
        for out in a:
            assert 1 <= len(out) <= max_len
            assert EOS not in out[:-1]

    def test_prune_shrinks_batch(self):
        fn_len = {0: 1, 1: 1, 2: 6, 3: 6}

        def fn(s, prefix):
            x = np.zeros(7, np.float32)
            x[EOS if len(prefix) + 1 >= fn_len[s] else 5] = 5
            return x

        pruned = TableSession(4, logit_fn=fn)
        greedy_decode(pruned, 10)
        kept = TableSession(4, logit_fn=fn)
        greedy_decode(kept, 10, prune=False)
        assert pruned.row_log == [4, 2, 2, 2, 2, 2]
        assert kept.row_log == [4] * 6


class TestPruneFinished:
    def test_bookkeeping(self):
        sess = TableSession(3)
        state = BatchState(np.arange(3), np.array([False, True, False]), np.array([5, EOS, 6]))
        new, slots = prune_finished(state, sess)
        assert slots == {0: 0, 2: 1}
        assert new.prev.tolist() == [5, 6] and sess.rows == 2
        assert [s for s, _ in sess.prefixes] == [0, 2]

    def test_all_finished(self):
        sess = TableSession(2)
        new, slots = prune_finished(BatchState(np.arange(2), np.ones(2, bool), np.full(2, EOS)), sess)
        assert slots == {} and sess.rows == 0 and len(new.sentence) == 0

    def test_row_mismatch(self):
        with pytest.raises(InternalStateError):
            prune_finished(BatchState(np.arange(2), np.zeros(2, bool), np.zeros(2)), TableSession(3))


def brute_force_best(sess, sentence, max_len, content=(3, 4, 5, 6)):
    best = None
    for n in range(1, max_len + 1):
        for body in itertools.product([t for t in content if t != EOS], repeat=n - 1):
            toks = list(body) + [EOS]
            s = sess.logprob(sentence, toks)
            if best is None or s > best[1]:
                best = (toks, s)
    return best


class TestBeam:
    def test_width_one_is_greedy(self):
        for seed in range(20):
            g = greedy_decode(TableSession(3, seed=seed), 8)
            b = beam_decode(TableSession(3, seed=seed), 1, 8)
            assert [h.tokens for h in b] == g

    @pytest.mark.parametrize("seed", range(6))
    def test_exhaustive_width_is_exact(self, seed):
        sess = TableSession(2, seed=seed)
        hyps = beam_decode(sess, 64, 3)
        ref = TableSession(2, seed=seed)
        for s, h in enumerate(hyps):
            toks, score = brute_force_best(ref, s, 3)
            assert h.finished and h.tokens == toks
            assert h.score == pytest.approx(score, abs=1e-5)

    def test_score_is_sum_of_logprobs(self):
        sess = TableSession(4, seed=11, eos_bias=1.0)
        ref = TableSession(4, seed=11, eos_bias=1.0)
        for s, h in enumerate(beam_decode(sess, 3, 10)):
            assert h.score == pytest.approx(ref.logprob(s, h.tokens), abs=1e-5)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 5), st.sampled_from([2, 3, 4]), st.integers(2, 10), st.integers(0, 10_000),
           st.floats(-2, 2))
    def test_early_stop_and_prune_are_exact(self, n, width, max_len, seed, bias):
        def run(**kw):
            return beam_decode(TableSession(n, seed=seed, eos_bias=bias), width, max_len, **kw)

        ref = run(early_stop=False, prune=False)
        for kw in (dict(), dict(prune=False), dict(early_stop=False)):
            got = run(**kw)
            assert [h.tokens for h in got] == [h.tokens for h in ref]
            assert all(abs(a.score - b.score) <= 1e-9 for a, b in zip(got, ref))
        for h in ref:
            assert 1 <= len(h.tokens) <= max_len
            assert EOS not in h.tokens[:-1]

    def test_early_stop_saves_steps(self):
        stopped = TableSession(1, logit_fn=always(EOS))
        beam_decode(stopped, 2, 20)
        full = TableSession(1, logit_fn=always(EOS))
        beam_decode(full, 2, 20, early_stop=False)
        assert len(stopped.row_log) == 1 < len(full.row_log)

    def test_beam_on_real_model(self, rng):
        cfg = small_config()
        m = Transformer(cfg, toy_weights(cfg, 5, eos_scale=2.5))
        src = pad_batch(random_src_batch(rng, cfg.vocab_size, 3))
        a = beam_decode(m.start(src), 3, 12)
        b = beam_decode(m.start(src), 3, 12, early_stop=False, prune=False)
        assert [h.tokens for h in a] == [h.tokens for h in b]
