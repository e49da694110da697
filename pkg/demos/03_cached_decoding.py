# %% [markdown]
# # Incremental decoding with a key/value cache
#
# A decode step only projects the newest token; earlier keys and values come
# from the cache. The uncached path recomputes the whole prefix and must give
# the same logits.

# %%
import numpy as np

from dsnmt.config import ModelConfig
from dsnmt.model import Transformer
from dsnmt.pipeline import pad_batch
from dsnmt.text import BOS
from dsnmt.toy import random_src_batch, toy_weights

cfg = ModelConfig(6, 2, d_model=64, n_heads=4, d_ffn=256, vocab_size=200, use_dlcl=True)
model = Transformer(cfg, toy_weights(cfg, seed=0))
src = pad_batch(random_src_batch(np.random.default_rng(0), cfg.vocab_size, 3, 4, 10))

enc = model.encode(src)
cache = model.new_cache(enc)
prefix = np.full((3, 1), BOS)
for step in range(8):
    cached = model.decode_step(prefix[:, -1], step, cache)
    full = model.decoder_forward(prefix, enc)[:, -1]
    print(f"step {step}: max |cached - full| = {np.abs(cached - full).max():.1e}")
    prefix = np.concatenate([prefix, cached.argmax(-1)[:, None]], axis=1)
print(prefix[:, 1:])
