import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dsnmt.errors import DimensionError, InvalidMaskError
from dsnmt.tensor import (
    FP16,
    FP32,
    DType,
    argmax_rows,
    convert,
    layer_norm,
    log_softmax,
    matmul,
    set_matmul_backend,
    softmax_masked,
)

finite = st.floats(-50, 50, allow_nan=False, width=32)


def naive_matmul(a, b):
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            out[i, j] = sum(float(a[i, t]) * float(b[t, j]) for t in range(k))
    return out


class TestMatmul:
    def test_identity(self):
        b = np.array([[1, 2], [3, 4]], np.float32)
        np.testing.assert_array_equal(matmul(np.eye(2, dtype=np.float32), b), b)

    def test_scalar_product(self):
        out = matmul(np.array([[1, 2]], np.float32), np.array([[3], [4]], np.float32))
        assert out.tolist() == [[11.0]]

    def test_fp16_against_fp32_oracle(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((8, 8)).astype(np.float16)
        b = rng.standard_normal((8, 8)).astype(np.float16)
        got = matmul(a, b, FP16)
        assert got.dtype == np.float16
        ref = naive_matmul(a.astype(np.float32), b.astype(np.float32))
        big = np.abs(ref) > 1e-3
        rel = np.abs(got.astype(np.float64) - ref)[big] / np.abs(ref)[big]
        assert rel.max() < 1e-2

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(np.zeros((2, 3), np.float32), np.zeros((2, 3), np.float32))

    def test_dtype_must_match_policy(self):
        with pytest.raises(TypeError):
            matmul(np.zeros((2, 2), np.float32), np.zeros((2, 2), np.float32), FP16)

    def test_bit_deterministic(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((33, 65)).astype(np.float32)
        b = rng.standard_normal((65, 17)).astype(np.float32)
        assert matmul(a, b).tobytes() == matmul(a, b).tobytes()

    def test_backend_seam(self):
        calls = []

        def spy(a, b):
            calls.append((a.shape, b.shape))
            return np.matmul(a, b)

        prev = set_matmul_backend(spy)
        try:
            matmul(np.ones((2, 3), np.float32), np.ones((3, 4), np.float32))
        finally:
            set_matmul_backend(prev)
        assert calls == [((2, 3), (3, 4))]

    def test_fp16_accumulates_in_fp32(self):
        # 4096 * 16 * 16 = 1048576 overflows fp16 if summed in fp16
        a = np.full((1, 4096), 16, np.float16)
        b = np.full((4096, 1), 1 / 256, np.float16)
        assert float(matmul(a, b, FP16)[0, 0]) == 256.0


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax_masked(np.zeros(4, np.float32)), [0.25] * 4)

    def test_single_survivor(self):
        out = softmax_masked(np.array([5, 0], np.float32), np.array([0, -np.inf], np.float32))
        assert out.tolist() == [1.0, 0.0]

    def test_closed_form(self):
        np.testing.assert_allclose(softmax_masked(np.array([0, math.log(2)], np.float32)), [1 / 3, 2 / 3],
                                   rtol=1e-6)

    def test_fully_masked_row(self):
        with pytest.raises(InvalidMaskError):
            softmax_masked(np.zeros((2, 2), np.float32), np.array([[0, 0], [-np.inf, -np.inf]], np.float32))

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float32, (3, 7), elements=finite), arrays(np.bool_, (3, 7)))
    def test_rows_sum_to_one_masked_zero(self, x, masked):
        masked[:, 0] = False
        mask = np.where(masked, -np.inf, 0).astype(np.float32)
        p = softmax_masked(x, mask)
        np.testing.assert_allclose(p.sum(-1), 1.0, atol=1e-5)
        assert (p[masked] == 0).all()

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float32, (4, 9), elements=finite))
    def test_fp16_rows(self, x):
        p = softmax_masked(x.astype(np.float16))
        assert p.dtype == np.float16
        np.testing.assert_allclose(p.astype(np.float32).sum(-1), 1.0, atol=1e-2)


class TestLayerNorm:
    def test_constant_row(self):
        out = layer_norm(np.ones(3, np.float32), np.ones(3, np.float32), np.zeros(3, np.float32))
        assert out.tolist() == [0.0, 0.0, 0.0]

    def test_two_values(self):
        out = layer_norm(np.array([1, -1], np.float32), np.ones(2, np.float32), np.zeros(2, np.float32))
        expect = 1 / math.sqrt(1 + 1e-6)
        np.testing.assert_allclose(out, [expect, -expect], rtol=1e-6)

    def test_zero_gain(self):
        out = layer_norm(np.array([2, 4], np.float32), np.zeros(2, np.float32), np.full(2, 7, np.float32))
        assert out.tolist() == [7.0, 7.0]

    def test_empty_dim(self):
        with pytest.raises(DimensionError):
            layer_norm(np.zeros((2, 0), np.float32), np.zeros(0, np.float32), np.zeros(0, np.float32))

    def test_fp16_large_values_stable(self):
        # the variance of these rows (1e8) is far outside fp16 range
        x = np.array([[-20000, 20000, 0, 10000]], np.float16)
        out = layer_norm(x, np.ones(4, np.float16), np.zeros(4, np.float16))
        ref = layer_norm(x.astype(np.float32), np.ones(4, np.float32), np.zeros(4, np.float32))
        assert np.isfinite(out).all()
        np.testing.assert_allclose(out.astype(np.float32), ref, rtol=1e-2)


class TestConvert:
    def test_exact_one(self):
        h = convert(np.array([1.0], np.float32), DType.F16)
        assert h.dtype == np.float16
        assert convert(h, DType.F32).tolist() == [1.0]

    def test_saturates(self):
        h = convert(np.array([65520.0, -1e9, np.inf], np.float32), DType.F16)
        assert h.astype(np.float32).tolist() == [65504.0, -65504.0, 65504.0]

    def test_last_mantissa_step(self):
        assert float(convert(np.array([1.0009765625], np.float32), DType.F16)[0]) == 1.0009765625

    def test_round_to_nearest_even(self):
        # 1 + 2^-11 is halfway between 1 and 1 + 2^-10: ties to the even mantissa (1.0)
        assert float(convert(np.array([1 + 2 ** -11], np.float32), DType.F16)[0]) == 1.0

    @settings(max_examples=200)
    @given(arrays(np.uint16, 16))
    def test_f16_round_trip(self, bits):
        h = bits.view(np.float16)
        h = h[np.isfinite(h)]
        assert convert(convert(h, DType.F32), DType.F16).tobytes() == h.tobytes()

    def test_byte_length(self):
        x = np.zeros((3, 5), np.float32)
        assert x.nbytes == 15 * DType.F32.size
        assert convert(x, DType.F16).nbytes == 15 * DType.F16.size


class TestArgmax:
    def test_basic(self):
        assert argmax_rows(np.array([[1, 3, 2]], np.float32)) == [1]

    def test_tie_lowest(self):
        assert argmax_rows(np.array([[5, 5]], np.float32)) == [0]

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.int32, (3, 11), elements=st.integers(-400, 400)), st.integers(-1000, 1000))
    def test_matches_log_softmax_and_shift(self, xi, c):
        # values on a 1/8 grid: near-ties below float resolution are not meaningful here
        x = (xi / 8).astype(np.float32)
        assert argmax_rows(x) == np.argmax(log_softmax(x), axis=1).tolist()
        shifted = x.astype(np.float64) + c
        assert argmax_rows(x.astype(np.float64)) == argmax_rows(shifted)


def test_fp32_policy_default():
    assert FP32.compute is DType.F32 and FP16.reduce_in_f32


def test_single_row_matches_batched_row():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((5, 64)).astype(np.float32)
    b = rng.standard_normal((64, 200)).astype(np.float32)
    full = matmul(a, b)
    for i in range(5):
        assert matmul(a[i:i + 1], b).tobytes() == full[i:i + 1].tobytes()
