# %% [markdown]
# # Storing weights in half precision
#
# The same model written as float16 takes exactly half the tensor bytes, and
# decoding from it stays close to the float32 model.

# %%
import tempfile
from pathlib import Path

import numpy as np

from dsnmt.checkpoint import load_checkpoint, payload_bytes
from dsnmt.config import preset
from dsnmt.model import Transformer
from dsnmt.pipeline import pad_batch
from dsnmt.tensor import FP16, DType
from dsnmt.toy import gen_toy_model, random_src_batch

cfg = preset("9-1-tiny", vocab_size=4000)
tmp = Path(tempfile.mkdtemp())
gen_toy_model(cfg, 0, tmp / "f32.bin")
gen_toy_model(cfg, 0, tmp / "f16.bin", dtype=DType.F16)
print(payload_bytes(tmp / "f32.bin"), payload_bytes(tmp / "f16.bin"))

w32, _ = load_checkpoint(tmp / "f32.bin")
w16, _ = load_checkpoint(tmp / "f16.bin")
src = pad_batch(random_src_batch(np.random.default_rng(0), cfg.vocab_size, 4, 5, 20))
a = Transformer(cfg, w32).start(src).step(np.full(4, 2))
b = Transformer(cfg, w16, FP16).start(src).step(np.full(4, 2)).astype(np.float32)
print("max |logit diff| fp16 vs fp32:", np.abs(a - b).max())
