# %% [markdown]
# # Tensor primitives
#
# Every op in the engine bottoms out in four numpy-backed primitives: `matmul`,
# `softmax_masked`, `layer_norm` and `convert`. They all take a precision
# policy, and reductions always run in float32 even when storage is float16.

# %%
import numpy as np

from dsnmt.tensor import FP16, DType, convert, layer_norm, matmul, softmax_masked

a = np.array([[1, 2], [3, 4]], np.float32)
print(matmul(a, np.eye(2, dtype=np.float32)))

# %% [markdown]
# A fully masked row has no valid distribution, so it is an error rather than NaN.

# %%
x = np.array([[0.0, np.log(2)], [5.0, 1.0]], np.float32)
mask = np.array([[0, 0], [0, -np.inf]], np.float32)
print(softmax_masked(x, mask))  # [[1/3, 2/3], [1, 0]]

# %% [markdown]
# Half precision: values past 65504 saturate instead of becoming inf, and a
# dot product whose partial sums overflow fp16 still comes out right.

# %%
print(convert(np.array([70000.0, 1 + 2 ** -11], np.float32), DType.F16))
big = np.full((1, 4096), 16, np.float16)
small = np.full((4096, 1), 1 / 256, np.float16)
print(matmul(big, small, FP16))  # 256, with partial sums up to 1e6 kept in float32

row = np.array([[-20000, 20000, 0, 10000]], np.float16)
print(layer_norm(row, np.ones(4, np.float16), np.zeros(4, np.float16)))
