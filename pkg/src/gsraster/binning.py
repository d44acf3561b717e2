"""Tile and tile-group binning with tile-membership masks, plus (group, depth) sorting."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ValidationError
from .half import to_half
from .projection import ProjectedGaussian, ProjectedGaussians

TILE = 16
SUPPORTED_GROUPS = (1, 2, 4)


@dataclass(frozen=True)
class GroupConfig:
    width: int
    height: int
    group_h: int = 2
    group_w: int = 2
    tile_size: int = TILE
    wide_masks: bool = False
    """Allow 8x8 groups (64-bit masks)."""

    def __post_init__(self):
        if self.tile_size != TILE:
            raise ConfigError(f"tile_size must be {TILE}")
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("image dimensions must be positive")
        if self.group_h < 1 or self.group_w < 1:
            raise ConfigError("group dimensions must be positive")
        limit = 64 if self.wide_masks else 32
        if self.group_h * self.group_w > limit:
            raise ConfigError(f"{self.group_h}x{self.group_w} group needs more than {limit} mask bits")

    @classmethod
    def square(cls, g: int, width: int, height: int, **kw) -> "GroupConfig":
        if g not in SUPPORTED_GROUPS and not (g == 8 and kw.get("wide_masks")):
            raise ConfigError(f"unsupported group size {g}; choose from {SUPPORTED_GROUPS}")
        return cls(width, height, g, g, **kw)

    @property
    def tiles_x(self) -> int:
        return -(-self.width // self.tile_size)

    @property
    def tiles_y(self) -> int:
        return -(-self.height // self.tile_size)

    @property
    def groups_x(self) -> int:
        return -(-self.tiles_x // self.group_w)

    @property
    def groups_y(self) -> int:
        return -(-self.tiles_y // self.group_h)

    @property
    def n_groups(self) -> int:
        return self.groups_x * self.groups_y

    @property
    def mask_bits(self) -> int:
        return self.group_h * self.group_w

    def group_tiles(self, group_id: int) -> list[tuple[int, int, int]]:
        """(bit, tile_x, tile_y) for every member tile that lies inside the image."""
        gy, gx = divmod(group_id, self.groups_x)
        out = []
        for r in range(self.group_h):
            for c in range(self.group_w):
                tx, ty = gx * self.group_w + c, gy * self.group_h + r
                if tx < self.tiles_x and ty < self.tiles_y:
                    out.append((r * self.group_w + c, tx, ty))
        return out


@dataclass(frozen=True)
class TileRect:
    """Inclusive tile-coordinate rectangle; empty when x1 < x0 or y1 < y0."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def empty(self) -> bool:
        return self.x1 < self.x0 or self.y1 < self.y0

    @property
    def count(self) -> int:
        return 0 if self.empty else (self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)


def tile_rects(projected: ProjectedGaussians, cfg: GroupConfig) -> np.ndarray:
    """(n, 4) int64 array of x0, y0, x1, y1; rows with x1 < x0 or y1 < y0 are empty."""
    m = projected.mean2d.astype(np.float64)
    r = projected.radius.astype(np.float64)[:, None]
    lo = np.floor((m - r) / cfg.tile_size).astype(np.int64)
    hi = np.floor((m + r) / cfg.tile_size).astype(np.int64)
    limit = np.array([cfg.tiles_x - 1, cfg.tiles_y - 1])
    off = np.any((hi < 0) | (lo > limit), axis=1)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, limit)
    rects = np.concatenate([lo, hi], axis=1)
    rects[off] = (0, 0, -1, -1)
    return rects


def tiles_overlapped(p: ProjectedGaussian, cfg: GroupConfig) -> TileRect:
    if p.radius < 1:
        raise ValidationError("radius must be at least 1")
    rect = tile_rects(ProjectedGaussians.from_list([p]), cfg)[0]
    return TileRect(*(int(v) for v in rect))


@dataclass
class GroupEntries:
    """Parallel arrays, one element per (Gaussian, group) entry."""

    group_id: np.ndarray  # uint32
    gaussian_index: np.ndarray  # uint32, into the projected list
    depth: np.ndarray  # float32
    mask: np.ndarray  # uint64

    def __len__(self) -> int:
        return len(self.group_id)

    def __iter__(self):
        for i in range(len(self)):
            yield int(self.group_id[i]), int(self.gaussian_index[i]), float(self.depth[i]), int(self.mask[i])

    def take(self, idx) -> "GroupEntries":
        return GroupEntries(self.group_id[idx], self.gaussian_index[idx], self.depth[idx], self.mask[idx])

    def popcounts(self) -> np.ndarray:
        return popcount(self.mask)

    @classmethod
    def from_records(cls, records) -> "GroupEntries":
        records = list(records)
        if not records:
            return cls(np.zeros(0, np.uint32), np.zeros(0, np.uint32), np.zeros(0, np.float32), np.zeros(0, np.uint64))
        g, i, d, m = zip(*records)
        return cls(np.array(g, np.uint32), np.array(i, np.uint32), np.array(d, np.float32), np.array(m, np.uint64))


def popcount(mask: np.ndarray) -> np.ndarray:
    m = np.asarray(mask, np.uint64)
    return np.unpackbits(m.view(np.uint8).reshape(-1, 8), axis=1).sum(axis=1).astype(np.int64)


def build_group_entries(projected: ProjectedGaussians, cfg: GroupConfig) -> GroupEntries:
    """One entry per (Gaussian, touched group), ordered by Gaussian then group id."""
    rects = tile_rects(projected, cfg)
    valid = (rects[:, 2] >= rects[:, 0]) & (rects[:, 3] >= rects[:, 1])
    gidx = np.flatnonzero(valid)
    rects = rects[valid]
    gx0, gy0 = rects[:, 0] // cfg.group_w, rects[:, 1] // cfg.group_h
    gx1, gy1 = rects[:, 2] // cfg.group_w, rects[:, 3] // cfg.group_h
    nx, ny = gx1 - gx0 + 1, gy1 - gy0 + 1
    per = nx * ny
    total = int(per.sum())

    owner = np.repeat(np.arange(len(gidx)), per)
    start = np.cumsum(per) - per
    local = np.arange(total) - np.repeat(start, per)
    # row-major over the touched group rectangle
    gy = gy0[owner] + local // nx[owner]
    gx = gx0[owner] + local % nx[owner]

    r = rects[owner]
    mask = np.zeros(total, np.uint64)
    for row in range(cfg.group_h):
        ty = gy * cfg.group_h + row
        in_y = (ty >= r[:, 1]) & (ty <= r[:, 3])
        for col in range(cfg.group_w):
            tx = gx * cfg.group_w + col
            hit = in_y & (tx >= r[:, 0]) & (tx <= r[:, 2])
            mask |= hit.astype(np.uint64) << np.uint64(row * cfg.group_w + col)

    g = gidx[owner]
    return GroupEntries(
        group_id=(gy * cfg.groups_x + gx).astype(np.uint32),
        gaussian_index=g.astype(np.uint32),
        depth=projected.depth[g].astype(np.float32),
        mask=mask,
    )


@dataclass
class SortedGroupLists:
    entries: GroupEntries
    offsets: np.ndarray  # (n_groups,) int64
    lengths: np.ndarray  # (n_groups,) int64

    def group(self, group_id: int) -> GroupEntries:
        lo = int(self.offsets[group_id])
        return self.entries.take(slice(lo, lo + int(self.lengths[group_id])))

    @property
    def n_groups(self) -> int:
        return len(self.offsets)


def sort_keys(entries: GroupEntries) -> np.ndarray:
    """64-bit keys: group id in the high word, float32 depth bits in the low word."""
    depth = np.ascontiguousarray(entries.depth, np.float32)
    return (entries.group_id.astype(np.uint64) << np.uint64(32)) | depth.view(np.uint32).astype(np.uint64)


def sort_entries(entries: GroupEntries, n_groups: int | None = None) -> SortedGroupLists:
    """Stable sort by (group id, depth); ties keep their incoming order.

    ``build_group_entries`` emits entries by Gaussian index, so equal depths
    end up ordered by Gaussian index.
    """
    depth = np.asarray(entries.depth, np.float32)
    bad = np.flatnonzero(~(np.isfinite(depth) & (depth > 0)))
    if bad.size:
        i = int(bad[0])
        raise ValidationError(f"entry {i}: depth {depth[i]} must be positive and finite")
    order = np.argsort(sort_keys(entries), kind="stable")
    ordered = entries.take(order)
    if n_groups is None:
        n_groups = int(entries.group_id.max()) + 1 if len(entries) else 0
    lengths = np.bincount(ordered.group_id.astype(np.int64), minlength=n_groups).astype(np.int64)
    offsets = np.cumsum(lengths) - lengths
    return SortedGroupLists(ordered, offsets, lengths)


def bin_projected(projected: ProjectedGaussians, cfg: GroupConfig) -> SortedGroupLists:
    return sort_entries(build_group_entries(projected, cfg), cfg.n_groups)


# Serialized entry: mean2d 2xf16, conic (a, b, c) + opacity 4xf16, gaussian id u32, mask u8.
PAYLOAD = struct.Struct("<2e4eI")
ENTRY = struct.Struct("<2e4eIB")
MASK_BYTES = ENTRY.size - PAYLOAD.size


def serialize_entry(gaussian_index: int, mask: int, projected: ProjectedGaussians) -> bytes:
    if mask >= 1 << (8 * MASK_BYTES):
        raise ConfigError(f"mask {mask:#x} does not fit the {MASK_BYTES}-byte mask field")
    mx, my = (float(v) for v in to_half(projected.mean2d[gaussian_index]))
    a, b, c = (float(v) for v in to_half(projected.conic[gaussian_index]))
    o = float(to_half(projected.opacity[gaussian_index]))
    return ENTRY.pack(mx, my, a, b, c, o, gaussian_index, mask)


def deserialize_entry(data: bytes) -> tuple[tuple[float, float], tuple[float, float, float], float, int, int]:
    mx, my, a, b, c, o, gid, mask = ENTRY.unpack(data)
    return (mx, my), (a, b, c), o, gid, mask
