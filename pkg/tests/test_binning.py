import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gsraster.binning import (
    ENTRY,
    GroupConfig,
    GroupEntries,
    TileRect,
    build_group_entries,
    deserialize_entry,
    popcount,
    serialize_entry,
    sort_entries,
    tile_rects,
    tiles_overlapped,
)
from gsraster.errors import ConfigError, ValidationError
from gsraster.projection import ProjectedGaussian, ProjectedGaussians, project_scene
from gsraster.scene import canonical_camera, gen_synthetic_scene
from oracles import mask_bits_brute


def splat(x, y, r, depth=1.0):
    return ProjectedGaussian((x, y), (1.0, 0.0, 1.0), (1.0, 1.0, 1.0), 0.5, depth, r)


def splats(*items):
    return ProjectedGaussians.from_list(list(items))


CFG256 = GroupConfig(256, 256, 2, 2)


class TestTilesOverlapped:
    def test_inside_one_tile(self):
        assert tiles_overlapped(splat(24, 24, 5), CFG256) == TileRect(1, 1, 1, 1)

    def test_straddles_boundary(self):
        assert tiles_overlapped(splat(16, 16, 1), CFG256) == TileRect(0, 0, 1, 1)

    def test_off_grid(self):
        assert tiles_overlapped(splat(-100, -100, 2), CFG256).empty

    def test_clipped_to_grid(self):
        assert tiles_overlapped(splat(250, 5, 20), CFG256) == TileRect(14, 0, 15, 1)

    def test_radius_validated(self):
        with pytest.raises(ValidationError):
            tiles_overlapped(splat(5, 5, 0), CFG256)


class TestGroupEntries:
    def test_full_group(self):
        e = build_group_entries(splats(splat(16, 16, 8)), CFG256)
        assert len(e) == 1 and int(e.mask[0]) == 0b1111 and int(e.group_id[0]) == 0

    def test_top_row_of_group(self):
        e = build_group_entries(splats(splat(16, 8, 4)), CFG256)
        assert len(e) == 1 and int(e.mask[0]) == 0b0011

    def test_group_ids_row_major(self):
        # tiles x 1..2, y 3..4 -> groups (row 1, col 0), (1, 1), (2, 0), (2, 1)
        e = build_group_entries(splats(splat(32, 64, 8)), CFG256)
        assert e.group_id.tolist() == [8, 9, 16, 17]
        assert e.mask.tolist() == [0b1000, 0b0100, 0b0010, 0b0001]

    def test_g1_matches_tile_duplication(self):
        proj, _ = project_scene(gen_synthetic_scene(3, 800), canonical_camera(256, 256))
        cfg = GroupConfig(256, 256, 1, 1)
        rects = tile_rects(proj, cfg)
        dup = np.clip(rects[:, 2] - rects[:, 0] + 1, 0, None) * np.clip(rects[:, 3] - rects[:, 1] + 1, 0, None)
        e = build_group_entries(proj, cfg)
        assert len(e) == dup.sum()
        assert np.all(e.mask == 1)

    @pytest.mark.parametrize("g", [1, 2, 4])
    def test_masks_match_brute_force(self, g):
        proj, _ = project_scene(gen_synthetic_scene(5, 150, scale_range=(0.01, 0.1)), canonical_camera(100, 72))
        cfg = GroupConfig.square(g, 100, 72)
        e = build_group_entries(proj, cfg)
        got = {(int(i), int(gid)): int(m) for gid, i, _, m in e}
        want = {}
        for i in range(len(proj)):
            for gid in range(cfg.n_groups):
                m = mask_bits_brute(proj, i, gid, cfg)
                if m:
                    want[(i, gid)] = m
        assert got == want

    @pytest.mark.parametrize("g", [2, 4])
    def test_merging_conserves_tile_appearances(self, g):
        proj, _ = project_scene(gen_synthetic_scene(6, 1000, scale_range=(0.01, 0.06)), canonical_camera(256, 256))
        n_tile = len(build_group_entries(proj, GroupConfig(256, 256, 1, 1)))
        grouped = build_group_entries(proj, GroupConfig.square(g, 256, 256))
        assert popcount(grouped.mask).sum() == n_tile
        assert np.all(grouped.mask != 0)


class TestSort:
    def test_groups_ordered(self):
        e = GroupEntries.from_records([(1, 0, 1.0, 1), (0, 1, 5.0, 1)])
        lists = sort_entries(e)
        assert lists.entries.group_id.tolist() == [0, 1]
        assert lists.offsets.tolist() == [0, 1] and lists.lengths.tolist() == [1, 1]

    def test_depth_ordered(self):
        e = GroupEntries.from_records([(0, 0, 2.0, 1), (0, 1, 1.0, 1)])
        assert sort_entries(e).entries.depth.tolist() == [1.0, 2.0]

    def test_matches_comparison_sort(self):
        rng = np.random.default_rng(1)
        n = 100_000
        gids = rng.integers(0, 300, n)
        # a coarse depth lattice forces many ties
        depths = rng.integers(1, 200, n).astype(np.float32) * np.float32(0.125)
        idx = np.arange(n)
        e = GroupEntries(gids.astype(np.uint32), idx.astype(np.uint32), depths, np.ones(n, np.uint64))
        got = sort_entries(e).entries
        want = sorted(range(n), key=lambda i: (gids[i], float(depths[i]), i))
        assert np.array_equal(got.gaussian_index, np.array(want, np.uint32))

    @pytest.mark.parametrize("bad", [0.0, -1.0, np.inf, np.nan])
    def test_bad_depth_rejected(self, bad):
        e = GroupEntries.from_records([(0, 0, 1.0, 1), (0, 1, bad, 1)])
        with pytest.raises(ValidationError, match="entry 1"):
            sort_entries(e)

    @pytest.mark.parametrize("g", [2, 4])
    def test_filtered_lists_equal_tile_lists(self, g):
        proj, _ = project_scene(gen_synthetic_scene(8, 2000, scale_range=(0.01, 0.06)), canonical_camera(256, 192))
        per_tile = sort_entries(build_group_entries(proj, GroupConfig(256, 192, 1, 1)), GroupConfig(256, 192, 1, 1).n_groups)
        cfg = GroupConfig.square(g, 256, 192)
        grouped = sort_entries(build_group_entries(proj, cfg), cfg.n_groups)
        tiles_x = GroupConfig(256, 192, 1, 1).tiles_x
        for gid in range(cfg.n_groups):
            entries = grouped.group(gid)
            for bit, tx, ty in cfg.group_tiles(gid):
                sel = (entries.mask >> np.uint64(bit)) & np.uint64(1) == 1
                d = entries.depth[sel]
                assert np.all(np.diff(d) >= 0)
                assert np.array_equal(entries.gaussian_index[sel], per_tile.group(ty * tiles_x + tx).gaussian_index)


class TestConfig:
    def test_defaults(self):
        cfg = GroupConfig(512, 512)
        assert (cfg.group_h, cfg.group_w, cfg.tile_size, cfg.n_groups, cfg.mask_bits) == (2, 2, 16, 256, 4)

    def test_partial_groups(self):
        cfg = GroupConfig(100, 40, 2, 2)
        assert (cfg.tiles_x, cfg.tiles_y, cfg.groups_x, cfg.groups_y) == (7, 3, 4, 2)
        assert [b for b, _, _ in cfg.group_tiles(7)] == [0]

    def test_limits(self):
        with pytest.raises(ConfigError):
            GroupConfig(64, 64, tile_size=32)
        with pytest.raises(ConfigError):
            GroupConfig.square(8, 64, 64)
        assert GroupConfig.square(8, 256, 256, wide_masks=True).mask_bits == 64
        with pytest.raises(ConfigError):
            GroupConfig.square(3, 64, 64)

    def test_wide_masks(self):
        cfg = GroupConfig.square(8, 256, 256, wide_masks=True)
        e = build_group_entries(splats(splat(127.5, 127.5, 120)), cfg)
        assert int(e.mask[0]) == (1 << 64) - 1


class TestSerialization:
    def test_entry_size(self):
        assert ENTRY.size == 17

    def test_round_trip(self):
        proj = splats(splat(100.25, 7.5, 3))
        blob = serialize_entry(0, 0b1010, proj)
        assert len(blob) == 17
        mean, conic, opacity, gid, mask = deserialize_entry(blob)
        assert mean == (100.25, 7.5) and conic == (1.0, 0.0, 1.0) and opacity == 0.5 and gid == 0 and mask == 0b1010

    def test_mask_too_wide(self):
        with pytest.raises(ConfigError):
            serialize_entry(0, 1 << 8, splats(splat(1, 1, 1)))


@given(st.lists(st.integers(0, (1 << 64) - 1), max_size=50))
def test_popcount(masks):
    assert popcount(np.array(masks, np.uint64)).tolist() == [bin(m).count("1") for m in masks]
