"""IEEE 754 binary16 emulation and the fp16-in / fp32-accumulate fragment multiply.

Scalar conversions work on raw bit patterns and are the reference; the array
helpers go through numpy's float16 cast (round-to-nearest-even with subnormals)
and canonicalize NaN so results are reproducible.
"""

from __future__ import annotations

import math

import numpy as np

FRAG = 16
"""Edge length of an m16n16k16 fragment."""

CANONICAL_NAN = 0x7E00
POS_INF = 0x7C00
NEG_INF = 0xFC00


def f32_to_f16(x: float) -> int:
    """Round a single-precision value to the nearest binary16 bit pattern (ties to even)."""
    with np.errstate(over="ignore"):
        bits = int(np.float32(x).view(np.uint32))
    sign = (bits >> 16) & 0x8000
    exp = (bits >> 23) & 0xFF
    man = bits & 0x7FFFFF

    if exp == 0xFF:
        return CANONICAL_NAN if man else sign | POS_INF

    if exp <= 112:
        # half subnormal range (or zero); count in units of 2**-24
        if exp == 0:
            return sign
        m = man | 0x800000
        shift = 126 - exp
        if shift > 24:
            return sign
        q = m >> shift
        rem = m & ((1 << shift) - 1)
        halfway = 1 << (shift - 1)
        if rem > halfway or (rem == halfway and q & 1):
            q += 1
        return sign | q

    e = exp - 112
    if e >= 31:
        return sign | POS_INF
    q = man >> 13
    rem = man & 0x1FFF
    h = (e << 10) | q
    if rem > 0x1000 or (rem == 0x1000 and q & 1):
        h += 1  # carry may roll into the exponent, which is the correct result
    if h >= POS_INF:
        return sign | POS_INF
    return sign | h


def f16_to_f32(h: int) -> float:
    """Widen a binary16 bit pattern to its exact value."""
    h &= 0xFFFF
    sign = -1.0 if h & 0x8000 else 1.0
    exp = (h >> 10) & 0x1F
    man = h & 0x3FF
    if exp == 0x1F:
        return math.nan if man else sign * math.inf
    if exp == 0:
        return sign * math.ldexp(man, -24)
    return sign * math.ldexp(man | 0x400, exp - 25)


def to_half(x) -> np.ndarray:
    """Vectorized float32 -> float16 with NaNs canonicalized."""
    with np.errstate(over="ignore"):
        h = np.asarray(x, dtype=np.float32).astype(np.float16)
    nan = np.isnan(h)
    if nan.any():
        h = h.copy()
        h.view(np.uint16)[nan] = CANONICAL_NAN
    return h


def quantize(x) -> np.ndarray:
    """Round values through binary16 and widen back to float32."""
    return to_half(x).astype(np.float32)


def half_bits(x) -> np.ndarray:
    return to_half(x).view(np.uint16)


def mma_rows(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Ordered k-loop multiply-accumulate, ``c + a @ b`` without contraction.

    ``a`` is (rows, K). ``b`` is either a shared (K, N) operand or a per-row
    (rows, K, N) stack. Every product is rounded to float32 before the add, and
    lanes are summed strictly in ascending k.
    """
    out = np.array(c, dtype=np.float32, copy=True)
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    per_row = b.ndim == 3
    for k in range(a.shape[-1]):
        lane = b[:, k, :] if per_row else b[k]
        out = out + a[:, k, None] * lane
    return out


def fragment_mma(a, b, c=None) -> np.ndarray:
    """16x16x16 fragment multiply-accumulate, optionally over leading batch axes.

    Operands are widened to float32 (exact for float16 inputs, so every product
    is exact too) and accumulated in ascending k order onto ``c``. ``b`` may be
    a plain 16x16 fragment or carry one extra axis with a B fragment per row of
    ``a``, i.e. (..., 16, 16, 16), which is how the pixel-side operand is staged
    when each Gaussian row has its own offsets.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-2:] != (FRAG, FRAG):
        raise ValueError(f"A fragment must be 16x16, got {a.shape}")
    batch = a.shape[:-2]
    per_row = b.shape == batch + (FRAG, FRAG, FRAG)
    if not per_row and b.shape != batch + (FRAG, FRAG):
        raise ValueError(f"B fragment shape {b.shape} does not match A {a.shape}")
    if c is None:
        c = np.zeros(batch + (FRAG, FRAG), dtype=np.float32)
    elif np.shape(c) != batch + (FRAG, FRAG):
        raise ValueError(f"C fragment shape {np.shape(c)} does not match A {a.shape}")

    a32 = a.astype(np.float32)
    if per_row:
        lanes = b.astype(np.float32).reshape(-1, FRAG, FRAG)
        out = mma_rows(a32.reshape(-1, FRAG), lanes, np.asarray(c, np.float32).reshape(-1, FRAG))
        return out.reshape(batch + (FRAG, FRAG))
    b32 = b.astype(np.float32)
    out = np.array(c, dtype=np.float32, copy=True)
    for k in range(FRAG):
        out = out + a32[..., :, k, None] * b32[..., None, k, :]
    return out
