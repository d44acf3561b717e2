import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gsraster.half import (
    CANONICAL_NAN,
    f16_to_f32,
    f32_to_f16,
    fragment_mma,
    half_bits,
    quantize,
    to_half,
)
from oracles import lattice_round_to_half

ALL_PATTERNS = np.arange(1 << 16, dtype=np.uint32)
finite32 = st.floats(width=32, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize(
    "x, bits",
    [(1.0, 0x3C00), (0.1, 0x2E66), (65520.0, 0x7C00), (65504.0, 0x7BFF), (-2.0, 0xC000), (math.inf, 0x7C00), (-math.inf, 0xFC00)],
)
def test_f32_to_f16_examples(x, bits):
    assert f32_to_f16(x) == bits


def test_point_one_value():
    assert f16_to_f32(f32_to_f16(0.1)) == 0.0999755859375


@pytest.mark.parametrize("bits, value", [(0x3C00, 1.0), (0x0001, 2.0**-24), (0xFC00, -math.inf), (0x7BFF, 65504.0), (0x0400, 2.0**-14)])
def test_f16_to_f32_examples(bits, value):
    assert f16_to_f32(bits) == value


def test_nan_is_canonical_quiet():
    assert f32_to_f16(math.nan) == CANONICAL_NAN
    assert f32_to_f16(-math.nan) == CANONICAL_NAN
    assert half_bits(np.array([np.nan, -np.nan], np.float32)).tolist() == [CANONICAL_NAN] * 2
    assert math.isnan(f16_to_f32(0x7C01))


def test_widening_is_lossless_for_every_pattern():
    for h in range(1 << 16):
        v = f16_to_f32(h)
        if math.isnan(v):
            continue
        assert f32_to_f16(v) == h


def test_array_path_matches_bit_level_on_all_half_values():
    halves = ALL_PATTERNS.astype(np.uint16).view(np.float16)
    widened = halves.astype(np.float32)
    expected = np.array([f16_to_f32(int(h)) for h in ALL_PATTERNS], np.float32)
    finite = ~np.isnan(expected)
    assert np.array_equal(widened[finite], expected[finite])
    assert np.array_equal(half_bits(widened)[finite], ALL_PATTERNS[finite].astype(np.uint16))


def test_array_path_matches_bit_level_on_random_floats():
    rng = np.random.default_rng(3)
    raw = rng.integers(0, 1 << 32, 20000, dtype=np.uint64).astype(np.uint32)
    # bias toward the binary16 range so rounding and subnormal paths are hit
    exps = rng.integers(100, 145, 20000).astype(np.uint32)
    biased = (raw & np.uint32(0x807FFFFF)) | (exps << np.uint32(23))
    for pats in (raw, biased):
        xs = pats.view(np.float32)
        got = half_bits(xs)
        want = np.array([f32_to_f16(float(x)) for x in xs], np.uint16)
        assert np.array_equal(got, want)


def test_bit_level_matches_lattice_oracle():
    rng = np.random.default_rng(11)
    exps = rng.integers(95, 145, 3000).astype(np.uint32)
    mant = rng.integers(0, 1 << 23, 3000).astype(np.uint32)
    xs = ((exps << np.uint32(23)) | mant).view(np.float32)
    # exact ties at the rounding boundary between consecutive halves
    ties = (np.arange(1, 2000, dtype=np.float32) + np.float32(0.5)) * np.float32(2.0**-10) + np.float32(1.0)
    special = np.array([65519.99, 65520.0, 2.0**-25, 2.0**-25 * 1.0000001, 6.1e-5, 0.0, -0.0], np.float32)
    for x in np.concatenate([xs, -xs, ties, special]):
        assert f32_to_f16(float(x)) == lattice_round_to_half(float(x)), float(x)


@given(finite32, finite32)
def test_conversion_is_monotone(x, y):
    lo, hi = min(x, y), max(x, y)
    assert f16_to_f32(f32_to_f16(lo)) <= f16_to_f32(f32_to_f16(hi))


@given(st.floats(width=16, allow_nan=False))
def test_exactly_representable_values_are_unchanged(x):
    assert f16_to_f32(f32_to_f16(x)) == x
    assert quantize(np.float32(x)) == np.float32(x)


def test_to_half_shape_and_dtype():
    h = to_half(np.zeros((3, 2)))
    assert h.dtype == np.float16 and h.shape == (3, 2)


class TestFragmentMma:
    def test_unit_entry(self):
        a = np.zeros((16, 16), np.float16)
        b = np.zeros((16, 16), np.float16)
        a[0, 0], b[0, 0] = 1, 2
        c = fragment_mma(a, b)
        assert c[0, 0] == 2.0
        assert np.count_nonzero(c) == 1

    def test_zero_operands_leave_accumulator(self):
        c0 = np.arange(256, dtype=np.float32).reshape(16, 16)
        z = np.zeros((16, 16), np.float16)
        assert np.array_equal(fragment_mma(z, z, c0), c0)

    def test_power_example(self):
        # conic (2, 1, 4), offset (2, 3): -1*4 - 1*6 - 2*9
        a = np.zeros((16, 16), np.float16)
        b = np.zeros((16, 16), np.float16)
        a[0, :3] = [-1, -1, -2]
        b[:3, 0] = [4, 6, 9]
        assert fragment_mma(a, b)[0, 0] == -28.0

    def test_per_row_operand(self):
        a = np.zeros((16, 16), np.float32)
        a[:, 0] = np.arange(16)
        b = np.zeros((16, 16, 16), np.float32)
        b[:, 0, :] = 2.0
        out = fragment_mma(a, b)
        assert np.array_equal(out, np.repeat(2.0 * np.arange(16, dtype=np.float32)[:, None], 16, axis=1))

    def test_batched_matches_single(self):
        rng = np.random.default_rng(0)
        a = to_half(rng.normal(size=(5, 16, 16)))
        b = to_half(rng.normal(size=(5, 16, 16)))
        batched = fragment_mma(a, b)
        for i in range(5):
            assert np.array_equal(batched[i], fragment_mma(a[i], b[i]))

    def test_ascending_k_without_contraction(self):
        # 1 + 2**-24 - 1 in ascending order loses the small term; any other order keeps it
        a = np.zeros((16, 16), np.float32)
        b = np.zeros((16, 16), np.float32)
        a[0, :3] = 1.0
        b[:3, 0] = [1.0, 2.0**-24, -1.0]
        assert fragment_mma(a, b)[0, 0] == 0.0

    def test_half_products_are_exact(self):
        rng = np.random.default_rng(5)
        a = to_half(rng.normal(size=(16, 16)))
        b = to_half(rng.normal(size=(16, 16)))
        a[:, 1:] = 0
        b[1:, :] = 0
        exact = a[:, :1].astype(np.float64) * b[:1, :].astype(np.float64)
        assert np.array_equal(fragment_mma(a, b).astype(np.float64), exact)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            fragment_mma(np.zeros((8, 16)), np.zeros((16, 16)))
        with pytest.raises(ValueError):
            fragment_mma(np.zeros((16, 16)), np.zeros((16, 8)))
