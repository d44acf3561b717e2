"""Grouped rasterizer with the power term evaluated as padded 16x16x16 fragment products.

Each tile group walks its (group, depth)-sorted list in chunks of at most 16
entries. A chunk is staged once and reused by every member tile: the tile
selects the rows whose mask bit is set, packs their conic coefficients into
an A fragment, builds one B fragment per row for each of its 16 pixel panels,
and blends the resulting power block in list order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .binning import GroupConfig, GroupEntries, SortedGroupLists
from .half import FRAG, mma_rows, to_half
from .kernel import (
    DEFAULT_CONSTANTS,
    F32,
    Operands,
    PrecisionMode,
    RasterConstants,
    alpha_values,
    basis_terms,
    blend_chunk,
    paste_tile,
    stage_operands,
    tile_pixels,
)
from .metrics import OpReport
from .projection import ProjectedGaussians
from .scene import ImageBuffer

PANEL = 16
BASIS_LANES = 3


@dataclass(frozen=True)
class GaussianChunk:
    index: np.ndarray
    coeffs: np.ndarray
    mean: np.ndarray
    opacity: np.ndarray
    color: np.ndarray
    depth: np.ndarray
    mask: np.ndarray
    mode: PrecisionMode

    def __len__(self) -> int:
        return len(self.index)

    @classmethod
    def stage(cls, entries: GroupEntries, ops: Operands) -> "GaussianChunk":
        if len(entries) > FRAG:
            raise ValueError(f"a chunk holds at most {FRAG} entries")
        idx = entries.gaussian_index.astype(np.int64)
        return cls(
            index=idx,
            coeffs=ops.coeffs[idx],
            mean=ops.mean[idx],
            opacity=ops.opacity[idx],
            color=ops.color[idx],
            depth=entries.depth,
            mask=entries.mask,
            mode=ops.mode,
        )


def _operand_dtype(mode: PrecisionMode):
    return np.float16 if mode is PrecisionMode.FP16 else np.float32


def select_rows(chunk: GaussianChunk, bit: int) -> np.ndarray:
    return np.flatnonzero((chunk.mask >> np.uint64(bit)) & np.uint64(1))


def build_q_operand(chunk: GaussianChunk, bit: int) -> tuple[np.ndarray, np.ndarray]:
    """A fragment for the member tile at mask ``bit``, and the row -> chunk-entry map."""
    rows = select_rows(chunk, bit)
    a = np.zeros((FRAG, FRAG), _operand_dtype(chunk.mode))
    a[: len(rows), :BASIS_LANES] = chunk.coeffs[rows]
    return a, rows


def _phi_stack(px, py, means, mode) -> np.ndarray:
    """(m, 16, n) per-row pixel operands; lanes 3..15 stay zero."""
    means = np.asarray(means, F32).reshape(-1, 2)
    b = np.zeros((len(means), FRAG, len(px)), F32)
    b[:, 0], b[:, 1], b[:, 2] = basis_terms(px, py, means, mode)
    return b


def build_phi_operand(tile: tuple[int, int], panel: int, means, mode: PrecisionMode = PrecisionMode.FP32) -> np.ndarray:
    """Per-row B fragments, shape (rows, 16, 16), for the 16 pixels of one tile panel.

    Panel ``p`` is pixel row ``p`` of the tile; column ``j`` of each fragment
    holds ``[dx^2, dx*dy, dy^2, 0, ...]`` for pixel ``(16*tx + j, 16*ty + p)``.
    """
    if not 0 <= panel < PANEL:
        raise ValueError(f"panel must be in [0, {PANEL})")
    mode = PrecisionMode(mode)
    tx, ty = tile
    px = (tx * PANEL + np.arange(PANEL)).astype(F32)
    py = np.full(PANEL, ty * PANEL + panel, F32)
    b = _phi_stack(px, py, means, mode)
    return to_half(b) if mode is PrecisionMode.FP16 else b


def _tile_power(a: np.ndarray, rows: int, px, py, means, mode) -> np.ndarray:
    # all 16 panels of the tile side by side; every column is an independent fragment column
    b = _phi_stack(px, py, means, mode)
    return mma_rows(a[:rows].astype(F32), b, np.zeros((rows, len(px)), F32))


def rasterize_group(
    group: int,
    lists: SortedGroupLists,
    ops: Operands,
    cfg: GroupConfig,
    k: RasterConstants = DEFAULT_CONSTANTS,
    chunk_size: int = FRAG,
    report: OpReport | None = None,
) -> list[tuple[int, int, np.ndarray]]:
    """Render one tile group; returns (tile_x, tile_y, accum) for each member tile."""
    if not 1 <= chunk_size <= FRAG:
        raise ValueError(f"chunk_size must be in [1, {FRAG}]")
    report = report if report is not None else OpReport()
    tiles = []
    for bit, tx, ty in cfg.group_tiles(group):
        px, py, inside = tile_pixels(tx, ty, cfg.width, cfg.height, cfg.tile_size)
        tiles.append(
            {
                "bit": bit,
                "tx": tx,
                "ty": ty,
                "px": px,
                "py": py,
                "T": np.ones(len(px), F32),
                "accum": np.zeros((len(px), 3), F32),
                "done": ~inside,
            }
        )
    entries = lists.group(group)
    for start in range(0, len(entries), chunk_size):
        live = [t for t in tiles if not t["done"].all()]
        if not live:
            break
        chunk = GaussianChunk.stage(entries.take(slice(start, start + chunk_size)), ops)
        report.chunk_loads += 1
        report.entry_loads += len(chunk)
        for t in live:
            a, rows = build_q_operand(chunk, t["bit"])
            report.skipped_pairs += len(chunk) - len(rows)
            if len(rows) == 0:
                continue
            power = _tile_power(a, len(rows), t["px"], t["py"], chunk.mean[rows], chunk.mode)
            npix = len(t["px"])
            report.fragment_mma += npix // PANEL
            report.useful_lanes += BASIS_LANES * len(rows) * npix
            report.total_lanes += FRAG * FRAG * npix
            alpha, _ = alpha_values(power, chunk.opacity[rows, None], k)
            t["T"], t["accum"], t["done"] = blend_chunk(t["T"], t["accum"], t["done"], alpha, chunk.color[rows], k)
    return [(t["tx"], t["ty"], t["accum"]) for t in tiles]


def rasterize_grouped(
    lists: SortedGroupLists,
    projected: ProjectedGaussians,
    cfg: GroupConfig,
    mode: PrecisionMode = PrecisionMode.FP32,
    k: RasterConstants = DEFAULT_CONSTANTS,
    chunk_size: int = FRAG,
    workers: int = 1,
    report: OpReport | None = None,
) -> ImageBuffer:
    ops = stage_operands(projected, PrecisionMode(mode))
    image = ImageBuffer(cfg.width, cfg.height)

    def work(group):
        local = OpReport()
        return rasterize_group(group, lists, ops, cfg, k, chunk_size, local), local

    groups = range(cfg.n_groups)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, groups))
    else:
        results = [work(g) for g in groups]

    for tiles, local in results:
        for tx, ty, accum in tiles:
            paste_tile(image.rgb, tx, ty, accum, cfg.tile_size)
        if report is not None:
            report.merge(local)
    return image
