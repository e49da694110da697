# %% [markdown]
# # Parallel workers and the op profile
#
# The input is cut into contiguous shards, one per worker; outputs are joined
# in shard order so the file is the same whatever the worker count.
# Profiling charges time to MatMul, Softmax, LayerNorm, Copy and Convert and
# reports everything else as Other.

# %%
import tempfile
from pathlib import Path

from dsnmt.config import ModelConfig
from dsnmt.pipeline import Translator, WorkerConfig, translate_file, write_lines
from dsnmt.toy import gen_toy_model, toy_corpus

tmp = Path(tempfile.mkdtemp())
paths = gen_toy_model(ModelConfig(6, 1, d_model=128, n_heads=4, d_ffn=512, vocab_size=400), 0,
                      tmp / "m.bin", eos_scale=2.0)
tr = Translator.load(paths["model"], paths["vocab"], paths["codes"])
write_lines(tmp / "in.txt", toy_corpus(60, seed=1, min_words=3, max_words=15, max_word_len=3))

blobs = []
for workers in (1, 3):
    out = tmp / f"out{workers}.txt"
    stats = translate_file(tmp / "in.txt", out, tr, WorkerConfig(workers=workers, max_tgt_len=40),
                           profile=True)
    blobs.append(out.read_bytes())
    print(f"{workers} workers: {stats.tokens_per_sec:.0f} source tokens/s")
print("identical:", blobs[0] == blobs[1])
stats.profile.print_table()
