# %% [markdown]
# # Subword segmentation
#
# Merges are applied lowest rank first; every piece but the last of a word
# carries the `@@` continuation marker, so removing `"@@ "` restores the text.

# %%
from dsnmt.text import BpeCodec, Vocabulary, bpe_apply, bpe_remove

codec = BpeCodec([("l", "o"), ("lo", "w"), ("e", "r")])
pieces = bpe_apply("lower lowest", codec)
print(pieces)
print(bpe_remove(pieces))

# %% [markdown]
# Token ids: four reserved ids come first (PAD, UNK, BOS, EOS), then the vocab file.

# %%
vocab = Vocabulary(["low", "er", "low@@", "e@@", "s@@", "t"])
ids = vocab.encode_ids(pieces)
print(ids)
print(bpe_remove(vocab.decode_ids(ids)))
