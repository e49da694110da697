# %% [markdown]
# # Beam search that stops early
#
# Scores are sums of log-probabilities, so they only go down as a hypothesis
# grows. Once the best finished hypothesis is at least as good as every live
# one, continuing cannot change the answer.

# %%
import numpy as np

from dsnmt.config import ModelConfig
from dsnmt.model import Transformer
from dsnmt.pipeline import pad_batch
from dsnmt.search import beam_decode, greedy_decode
from dsnmt.toy import random_src_batch, toy_weights

cfg = ModelConfig(4, 1, d_model=64, n_heads=4, d_ffn=128, vocab_size=150)
model = Transformer(cfg, toy_weights(cfg, seed=3, eos_scale=2.0))
src = pad_batch(random_src_batch(np.random.default_rng(1), cfg.vocab_size, 4, 3, 9))


class Counting:
    """Wrap a session to count decode steps."""

    def __init__(self, s):
        self.s, self.steps = s, 0
        self.vocab_size = s.vocab_size

    @property
    def rows(self):
        return self.s.rows

    def step(self, prev):
        self.steps += 1
        return self.s.step(prev)

    def select(self, rows):
        self.s.select(rows)


for i in range(src.shape[0]):
    row = src[i:i + 1]
    for early in (True, False):
        sess = Counting(model.start(row))
        (h,) = beam_decode(sess, 4, 60, early_stop=early)
        print(f"sentence {i} early_stop={early!s:5}: {sess.steps:2d} steps  {h.score:9.4f} {h.tokens[:8]}")

print("greedy:", greedy_decode(model.start(src), 60))
