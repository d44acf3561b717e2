"""Per-pixel math shared by both rasterizers.

Both backends evaluate the power term in the same association,
``((q0*xx) + (q1*xy)) + (q2*yy)``, and run the same float32 alpha/blend code,
so images from the two backends can be compared for bitwise equality.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .half import quantize
from .projection import ProjectedGaussians

F32 = np.float32


class PrecisionMode(str, Enum):
    FP32 = "fp32"
    FP16 = "fp16"


@dataclass(frozen=True)
class RasterConstants:
    alpha_skip: float = 1.0 / 255.0
    alpha_clamp: float = 0.99
    t_terminate: float = 1e-4

    def __post_init__(self):
        if not 0 < self.alpha_skip < self.alpha_clamp < 1:
            raise ValueError("need 0 < alpha_skip < alpha_clamp < 1")
        if not 0 < self.t_terminate < 1:
            raise ValueError("need 0 < t_terminate < 1")


DEFAULT_CONSTANTS = RasterConstants()


@dataclass
class Operands:
    """Rasterizer inputs at operand precision, indexed like the projected list."""

    coeffs: np.ndarray  # (n, 3): -a/2, -b, -c/2
    mean: np.ndarray  # (n, 2)
    opacity: np.ndarray  # (n,)
    color: np.ndarray  # (n, 3)
    mode: PrecisionMode


def conic_coeffs(conic: np.ndarray) -> np.ndarray:
    conic = np.asarray(conic, F32).reshape(-1, 3)
    half = F32(0.5)
    return np.stack([-(half * conic[:, 0]), -conic[:, 1], -(half * conic[:, 2])], axis=1)


def stage_operands(projected: ProjectedGaussians, mode: PrecisionMode) -> Operands:
    mode = PrecisionMode(mode)
    coeffs = conic_coeffs(projected.conic)
    mean = projected.mean2d.astype(F32)
    opacity = projected.opacity.astype(F32)
    if mode is PrecisionMode.FP16:
        coeffs, mean, opacity = quantize(coeffs), quantize(mean), quantize(opacity)
    return Operands(coeffs, mean, opacity, projected.color.astype(F32), mode)


def basis_terms(px: np.ndarray, py: np.ndarray, mean: np.ndarray, mode: PrecisionMode):
    """(dx^2, dx*dy, dy^2), each (m, n), for m centers against n pixels."""
    mean = np.asarray(mean, F32).reshape(-1, 2)
    dx = np.asarray(px, F32)[None, :] - mean[:, 0:1]
    dy = np.asarray(py, F32)[None, :] - mean[:, 1:2]
    if mode is PrecisionMode.FP16:
        dx, dy = quantize(dx), quantize(dy)
        return quantize(dx * dx), quantize(dx * dy), quantize(dy * dy)
    return dx * dx, dx * dy, dy * dy


def power_from_basis(coeffs: np.ndarray, xx, xy, yy) -> np.ndarray:
    q = np.asarray(coeffs, F32)
    return (q[:, 0:1] * xx + q[:, 1:2] * xy) + q[:, 2:3] * yy


def power_scalar(conic, d, mode: PrecisionMode = PrecisionMode.FP32) -> float:
    """-(a dx^2)/2 - b dx dy - (c dy^2)/2 in the canonical float32 association."""
    mode = PrecisionMode(mode)
    q = conic_coeffs(conic)
    if mode is PrecisionMode.FP16:
        q = quantize(q)
    xx, xy, yy = basis_terms(np.array([d[0]]), np.array([d[1]]), np.zeros((1, 2)), mode)
    return F32(power_from_basis(q, xx, xy, yy)[0, 0])


def alpha_values(power, opacity, k: RasterConstants = DEFAULT_CONSTANTS):
    """Returns (alpha, keep); skipped entries get alpha 0.

    Positive powers are clamped to 0. A NaN power (possible when fp16 basis
    terms overflow against a zero coefficient) is skipped.
    """
    p = np.asarray(power, F32)
    p = np.where(p > 0, F32(0), p)
    alpha = np.minimum(F32(k.alpha_clamp), np.asarray(opacity, F32) * np.exp(p))
    keep = alpha >= F32(k.alpha_skip)
    return np.where(keep, alpha, F32(0)), keep


def alpha_of(power: float, opacity: float, k: RasterConstants = DEFAULT_CONSTANTS) -> float | None:
    """Scalar form of :func:`alpha_values`; ``None`` means skip."""
    alpha, keep = alpha_values(np.array([power], F32), np.array([opacity], F32), k)
    return float(alpha[0]) if keep[0] else None


@dataclass
class PixelState:
    T: float = 1.0
    accum: tuple[float, float, float] = (0.0, 0.0, 0.0)
    done: bool = False


def blend_step(T, accum, done, alpha, keep, color, k: RasterConstants = DEFAULT_CONSTANTS):
    """Blend one Gaussian into n pixels; returns new (T, accum, done)."""
    act = keep & ~done
    weight = T * alpha
    accum = np.where(act[:, None], accum + weight[:, None] * np.asarray(color, F32)[None, :], accum)
    T = np.where(act, T * (F32(1) - alpha), T)
    done = done | (act & (T < F32(k.t_terminate)))
    return T, accum, done


def blend(state: PixelState, alpha: float, color, k: RasterConstants = DEFAULT_CONSTANTS) -> PixelState:
    T, accum, done = blend_step(
        np.array([state.T], F32),
        np.array([state.accum], F32),
        np.array([state.done]),
        np.array([alpha], F32),
        np.array([True]),
        color,
        k,
    )
    return PixelState(float(T[0]), tuple(accum[0].tolist()), bool(done[0]))


def blend_chunk(T, accum, done, alpha, colors, k: RasterConstants = DEFAULT_CONSTANTS):
    """Blend m depth-ordered Gaussians into n pixels at once.

    ``alpha`` is (m, n) with skipped pairs already zeroed. Running products and
    sums are formed with ``accumulate``, which evaluates strictly in row order,
    so the result is bitwise identical to m calls of :func:`blend_step`.
    """
    m, n = alpha.shape
    a = np.where(done[None, :], F32(0), alpha)
    trans = np.multiply.accumulate(np.concatenate([T[None, :], F32(1) - a]), axis=0)
    hit = (trans[1:] < F32(k.t_terminate)) & ~done[None, :]
    term = hit.any(axis=0)
    first = np.argmax(hit, axis=0)
    valid = ~term[None, :] | (np.arange(m)[:, None] <= first[None, :])
    weight = np.where(valid, trans[:-1] * a, F32(0))
    contrib = weight[:, :, None] * np.asarray(colors, F32)[:, None, :]
    accum = np.add.accumulate(np.concatenate([accum[None], contrib]), axis=0)[-1]
    T = np.where(term, trans[first + 1, np.arange(n)], trans[-1])
    return T, accum, done | term


def tile_pixels(tx: int, ty: int, width: int, height: int, tile: int = 16):
    """Pixel coordinates of one tile in row-major order, plus an in-image flag."""
    local = np.arange(tile * tile)
    x = tx * tile + local % tile
    y = ty * tile + local // tile
    return x.astype(F32), y.astype(F32), (x < width) & (y < height)


def paste_tile(rgb: np.ndarray, tx: int, ty: int, accum: np.ndarray, tile: int = 16) -> None:
    h, w, _ = rgb.shape
    block = accum.reshape(tile, tile, 3)
    y0, x0 = ty * tile, tx * tile
    rgb[y0 : min(y0 + tile, h), x0 : min(x0 + tile, w)] = block[: h - y0, : w - x0]
