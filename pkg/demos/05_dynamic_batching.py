# %% [markdown]
# # Dynamic batching under a token budget
#
# Sentences are sorted longest first and packed while `batch * longest` stays
# within the budget. Fewer, fuller batches mean fewer decoder steps in total.

# %%
import time

import numpy as np

from dsnmt.batching import plan_batches
from dsnmt.config import ModelConfig
from dsnmt.model import Transformer
from dsnmt.pipeline import WorkerConfig, translate_ids
from dsnmt.toy import random_src_batch, toy_weights

print(plan_batches([3, 5, 2, 4], max_tokens=10).batches)

cfg = ModelConfig(9, 1, d_model=64, n_heads=4, d_ffn=256, vocab_size=1000)
model = Transformer(cfg, toy_weights(cfg, 0))
seqs = random_src_batch(np.random.default_rng(0), cfg.vocab_size, 96, 9, 49)

for label, wc in (("budget 4096", WorkerConfig(max_tokens=4096, batch_size=4096, max_tgt_len=60)),
                  ("one at a time", WorkerConfig(batch_size=1, max_tgt_len=60))):
    start = time.perf_counter()
    out = translate_ids(model, seqs, wc)
    print(f"{label:>14}: {time.perf_counter() - start:.2f}s")
