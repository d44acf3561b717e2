"""Image quality, Gaussian reuse, storage overhead and operation counters."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .binning import ENTRY, PAYLOAD, GroupConfig, GroupEntries, popcount, tiles_overlapped
from .errors import ConfigError, ValidationError
from .projection import ProjectedGaussians
from .scene import ImageBuffer

PSNR_CAP = 99.0


def _check_dims(a: ImageBuffer, b: ImageBuffer) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise ValidationError(f"image sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}")


def psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    """PSNR in dB with peak 1.0; identical images report ``PSNR_CAP``."""
    _check_dims(a, b)
    diff = a.rgb.astype(np.float64) - b.rgb.astype(np.float64)
    mse = float(np.mean(diff * diff)) if diff.size else 0.0
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def max_abs_diff(a: ImageBuffer, b: ImageBuffer) -> tuple[float, tuple[int, int, int]]:
    """Largest per-channel difference and its first (x, y, channel) in row-major order."""
    _check_dims(a, b)
    diff = np.abs(a.rgb.astype(np.float64) - b.rgb.astype(np.float64))
    if diff.size == 0:
        return 0.0, (0, 0, 0)
    flat = int(np.argmax(diff))
    y, x, ch = np.unravel_index(flat, diff.shape)
    return float(diff.flat[flat]), (int(x), int(y), int(ch))


@dataclass
class ReuseReport:
    n_total: int
    n_group: int
    mask_histogram: dict[int, int] = field(default_factory=dict)

    @property
    def load_reduction(self) -> float:
        return 1.0 - self.n_group / self.n_total

    def as_dict(self) -> dict:
        return {
            "n_total": self.n_total,
            "n_group": self.n_group,
            "load_reduction": self.load_reduction,
            "mask_histogram": dict(sorted(self.mask_histogram.items())),
        }


def load_reduction(entries: GroupEntries) -> ReuseReport:
    """Gaussian loading reduction ``1 - N_group / N_total`` over a list of group entries."""
    if len(entries) == 0:
        raise ValidationError("load reduction is undefined for an empty entry list")
    counts = popcount(entries.mask)
    hist = Counter(counts.tolist())
    return ReuseReport(int(counts.sum()), len(entries), dict(hist))


def recount_appearances(projected: ProjectedGaussians, cfg: GroupConfig) -> tuple[int, int]:
    """Brute-force (N_total, N_group): walk each Gaussian's tiles one by one."""
    n_total = 0
    n_group = 0
    for i in range(len(projected)):
        rect = tiles_overlapped(projected[i], cfg)
        if rect.empty:
            continue
        groups = set()
        for ty in range(rect.y0, rect.y1 + 1):
            for tx in range(rect.x0, rect.x1 + 1):
                n_total += 1
                groups.add((ty // cfg.group_h, tx // cfg.group_w))
        n_group += len(groups)
    return n_total, n_group


def entry_overhead(cfg: GroupConfig) -> tuple[int, int, float]:
    """(payload bytes, mask bytes, overhead fraction) of one serialized group entry."""
    payload = PAYLOAD.size
    mask = ENTRY.size - PAYLOAD.size
    if cfg.mask_bits > 8 * mask:
        raise ConfigError(f"{cfg.group_h}x{cfg.group_w} group needs {cfg.mask_bits} mask bits; the entry stores {8 * mask}")
    return payload, mask, mask / payload


@dataclass
class OpReport:
    """Hardware-independent work counters for one render."""

    backend: str = ""
    group: int = 1
    precision: str = "fp32"
    entry_loads: int = 0
    chunk_loads: int = 0
    fragment_mma: int = 0
    skipped_pairs: int = 0
    useful_lanes: int = 0
    total_lanes: int = 0

    @property
    def padding_waste(self) -> float:
        return 0.0 if self.total_lanes == 0 else 1.0 - self.useful_lanes / self.total_lanes

    def merge(self, other: "OpReport") -> None:
        for name in ("entry_loads", "chunk_loads", "fragment_mma", "skipped_pairs", "useful_lanes", "total_lanes"):
            setattr(self, name, getattr(self, name) + getattr(other, name))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["padding_waste"] = self.padding_waste
        return d
