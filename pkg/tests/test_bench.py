"""Benchmark patterns and the level-by-level driver."""

import random

import pytest

from sievio.bench import (
    BenchRow,
    PatternSpec,
    dims_create,
    feasible_levels,
    gen_btio,
    gen_unstruc,
    pattern_file_size,
    pattern_rank_segments,
    run_bench,
    segments_to_filetype,
    trace_pattern,
)
from sievio.errors import InvalidArgumentError
from sievio.layout import merge_segments, segments_nbytes
from sievio.storage import STAT_FIELDS


def coverage_union(spec: PatternSpec):
    all_segs = [s for r in range(spec.nprocs) for s in pattern_rank_segments(spec, r)]
    return merge_segments(all_segs)  # raises if any two ranks overlap


class TestDimsCreate:
    @pytest.mark.parametrize(
        "nprocs,ndims,grid",
        [
            (8, 3, (2, 2, 2)),
            (4, 3, (2, 2, 1)),
            (6, 2, (3, 2)),
            (7, 3, (7, 1, 1)),
            (12, 3, (3, 2, 2)),
            (1, 2, (1, 1)),
            (64, 3, (4, 4, 4)),
        ],
    )
    def test_balanced_grids(self, nprocs, ndims, grid):
        assert dims_create(nprocs, ndims) == grid

    def test_grid_always_multiplies_back(self):
        rng = random.Random(5)
        for _ in range(200):
            nprocs = rng.randint(1, 512)
            ndims = rng.randint(1, 4)
            grid = dims_create(nprocs, ndims)
            prod = 1
            for g in grid:
                prod *= g
            assert prod == nprocs
            assert tuple(sorted(grid, reverse=True)) == grid

    def test_rejects_bad_input(self):
        with pytest.raises(InvalidArgumentError):
            dims_create(0, 3)
        with pytest.raises(InvalidArgumentError):
            dims_create(4, 0)


class TestPatternSpec:
    def test_defaults_fill_in(self):
        assert PatternSpec("dist3d", 8).dims == (64, 64, 64)
        assert PatternSpec("dist3d", 8).elem_size == 4
        assert PatternSpec("btio", 4).dims == (18, 18, 18)
        assert PatternSpec("btio", 4).elem_size == 8
        assert PatternSpec("unstruc", 4).dims == (65536,)
        assert PatternSpec("unstruc", 4).elem_size == 64

    def test_unknown_pattern(self):
        with pytest.raises(InvalidArgumentError):
            PatternSpec("zigzag", 4)

    def test_btio_constraints(self):
        with pytest.raises(InvalidArgumentError):
            PatternSpec("btio", 3)  # not a perfect square
        with pytest.raises(InvalidArgumentError):
            PatternSpec("btio", 4, dims=(8, 8))  # needs three dims
        with pytest.raises(InvalidArgumentError):
            PatternSpec("btio", 16, dims=(3, 8, 8))  # q=4 cells in a dim of 3

    def test_unstruc_constraints(self):
        with pytest.raises(InvalidArgumentError):
            PatternSpec("unstruc", 3)  # not a power of two
        with pytest.raises(InvalidArgumentError):
            PatternSpec("unstruc", 4, dims=(8, 8))
        with pytest.raises(InvalidArgumentError):
            PatternSpec("unstruc", 8, dims=(4,))  # fewer elements than ranks

    def test_dist3d_grid_must_fit(self):
        with pytest.raises(InvalidArgumentError):
            PatternSpec("dist3d", 8, dims=(1, 1, 1))

    def test_levels_validated(self):
        with pytest.raises(InvalidArgumentError):
            PatternSpec("dist3d", 4, levels=(0, 4))
        assert PatternSpec("dist3d", 4, levels=(3,)).levels == (3,)

    def test_proc_grid_only_for_dist3d(self):
        assert PatternSpec("dist3d", 8).proc_grid == (2, 2, 2)
        with pytest.raises(InvalidArgumentError):
            PatternSpec("btio", 4).proc_grid


class TestDist3d:
    def test_two_by_two_blocks_of_a_square(self):
        spec = PatternSpec("dist3d", 4, dims=(4, 4), elem_size=1)
        assert pattern_rank_segments(spec, 0) == ((0, 2), (4, 2))
        assert pattern_rank_segments(spec, 1) == ((2, 2), (6, 2))
        assert pattern_rank_segments(spec, 2) == ((8, 2), (12, 2))
        assert pattern_rank_segments(spec, 3) == ((10, 2), (14, 2))

    def test_element_size_scales_offsets(self):
        spec = PatternSpec("dist3d", 4, dims=(4, 4), elem_size=3)
        assert pattern_rank_segments(spec, 0) == ((0, 6), (12, 6))

    @pytest.mark.parametrize("nprocs,dims", [(2, (4, 4)), (8, (8, 8, 8)), (6, (6, 4, 2))])
    def test_ranks_partition_the_file(self, nprocs, dims):
        spec = PatternSpec("dist3d", nprocs, dims=dims, elem_size=4)
        assert coverage_union(spec) == ((0, pattern_file_size(spec)),)

    def test_uneven_split_gives_unequal_counts(self):
        spec = PatternSpec("dist3d", 4, dims=(5, 4), elem_size=1)
        counts = [len(pattern_rank_segments(spec, r)) for r in range(4)]
        assert counts == [3, 3, 2, 2]


class TestBtio:
    def test_diagonal_cells_never_collide(self):
        for nprocs, dims in [(4, (4, 4, 4)), (9, (6, 6, 6)), (9, (18, 18, 18))]:
            spec = PatternSpec("btio", nprocs, dims=dims)
            assert coverage_union(spec) == ((0, pattern_file_size(spec)),)

    def test_rank_zero_owns_the_diagonal(self):
        # 4 points per side, q=2, 1-byte elements: a point is 5 bytes
        segs = gen_btio((4, 4, 4), 4, 0, elem_size=1)
        # slab 0 cell (0,0): x,y in [0,2), z in [0,2); slab 1 cell (1,1)
        assert segs[0] == (0, 10)
        assert segs[1] == (20, 10)
        first_half = [s for s in segs if s[0] < 4 * 4 * 2 * 5]
        assert len(first_half) == 4  # 2 y-rows x 2 z-planes
        assert segments_nbytes(segs) == 4 * 4 * 4 * 5 // 4

    def test_every_rank_gets_equal_bytes(self):
        spec = PatternSpec("btio", 9, dims=(6, 6, 6), elem_size=8)
        sizes = {segments_nbytes(pattern_rank_segments(spec, r)) for r in range(9)}
        assert sizes == {6 * 6 * 6 * 5 * 8 // 9}

    def test_holes_dwarf_segments_at_nine_ranks(self):
        spec = PatternSpec("btio", 9)  # default 18^3 grid
        for r in range(9):
            segs = pattern_rank_segments(spec, r)
            useful = segments_nbytes(segs)
            span = segs[-1][0] + segs[-1][1] - segs[0][0]
            ratio = (span - useful) / useful
            assert ratio > 5
            assert ratio > 9 - 2.5  # tracks nprocs - 1, not the cell count q - 1

    def test_file_size_counts_all_components(self):
        spec = PatternSpec("btio", 4, dims=(4, 4, 4), elem_size=8)
        assert pattern_file_size(spec) == 4 * 4 * 4 * 5 * 8


class TestUnstruc:
    def test_unseeded_mapping_is_identity(self):
        spec = PatternSpec("unstruc", 4, dims=(16,), elem_size=2, seed=None)
        for r in range(4):
            assert pattern_rank_segments(spec, r) == ((r * 8, 8),)

    def test_seeded_mapping_scatters(self):
        spec = PatternSpec("unstruc", 4, dims=(64,), elem_size=4, seed=11)
        counts = [len(pattern_rank_segments(spec, r)) for r in range(4)]
        assert all(c > 1 for c in counts)

    def test_same_seed_same_layout(self):
        a = PatternSpec("unstruc", 4, dims=(64,), elem_size=4, seed=9)
        b = PatternSpec("unstruc", 4, dims=(64,), elem_size=4, seed=9)
        c = PatternSpec("unstruc", 4, dims=(64,), elem_size=4, seed=10)
        assert [pattern_rank_segments(a, r) for r in range(4)] == [
            pattern_rank_segments(b, r) for r in range(4)
        ]
        assert pattern_rank_segments(a, 0) != pattern_rank_segments(c, 0)

    @pytest.mark.parametrize("seed", [None, 1, 99])
    def test_permutation_partitions_the_file(self, seed):
        spec = PatternSpec("unstruc", 8, dims=(48,), elem_size=4, seed=seed)
        assert coverage_union(spec) == ((0, pattern_file_size(spec)),)

    def test_only_noncontiguous_levels_are_feasible(self):
        assert feasible_levels(PatternSpec("unstruc", 4)) == (2, 3)
        assert feasible_levels(PatternSpec("dist3d", 4)) == (0, 1, 2, 3)
        assert feasible_levels(PatternSpec("btio", 4)) == (0, 1, 2, 3)

    def test_uneven_element_split(self):
        segs = gen_unstruc(10, 2, 0, elem_size=1, seed=None)
        assert segs == ((0, 5),)
        assert gen_unstruc(10, 2, 1, elem_size=1, seed=None) == ((5, 5),)


class TestSegmentsToFiletype:
    def test_tile_zero_matches_segments(self):
        segs = ((3, 2), (8, 4))
        dt = segments_to_filetype(segs)
        assert dt.segments == segs
        assert dt.size == 6
        assert dt.extent == 12

    def test_empty_request_rejected(self):
        with pytest.raises(InvalidArgumentError):
            segments_to_filetype(())


class TestTracePattern:
    def test_flat_reprs_in_rank_order(self):
        spec = PatternSpec("dist3d", 4, dims=(4, 4), elem_size=1)
        reprs = trace_pattern(spec)
        assert [fr.segments for fr in reprs] == [
            ((0, 2), (4, 2)),
            ((2, 2), (6, 2)),
            ((8, 2), (12, 2)),
            ((10, 2), (14, 2)),
        ]
        assert reprs[0].size == 4
        assert reprs[0].extent == 16
        assert reprs[0].dump() == "0 2\n4 2"


class TestRunBench:
    SPEC = PatternSpec("dist3d", 4, dims=(8, 8), elem_size=2, levels=(0, 2, 3))

    def test_rows_come_back_level_major(self):
        rows = run_bench(self.SPEC, direction="both")
        assert [(r.level, r.direction) for r in rows] == [
            (0, "read"), (0, "write"), (2, "read"), (2, "write"), (3, "read"), (3, "write"),
        ]
        for row in rows:
            assert row.pattern == "dist3d"
            assert row.nprocs == 4
            assert not row.skipped
            assert row.seconds >= 0.0
            assert tuple(row.stats) == STAT_FIELDS

    def test_single_direction(self):
        rows = run_bench(self.SPEC, direction="read")
        assert [r.direction for r in rows] == ["read"] * 3

    def test_bad_direction_and_backend(self):
        with pytest.raises(InvalidArgumentError):
            run_bench(self.SPEC, direction="sideways")
        with pytest.raises(InvalidArgumentError):
            run_bench(self.SPEC, backend="disk")
        with pytest.raises(InvalidArgumentError):
            run_bench(self.SPEC, backend="file:")

    def test_optimizations_cut_read_calls(self):
        spec = PatternSpec("dist3d", 8, dims=(16, 16, 16), elem_size=4, levels=(0, 2, 3))
        rows = {(r.level, r.direction): r for r in run_bench(spec, direction="read")}
        file_size = pattern_file_size(spec)
        l0, l2, l3 = rows[(0, "read")], rows[(2, "read")], rows[(3, "read")]
        # 8x8 contiguous runs per rank, one call each
        assert l0.stats["read_calls"] == 8 * 64
        assert l0.stats["bytes_read"] == file_size
        assert l0.stats["useful_bytes_read"] == file_size
        # one sieving window per rank buys calls with wasted bytes
        assert l2.stats["read_calls"] == 8
        assert l2.stats["bytes_read"] > file_size
        assert l2.stats["useful_bytes_read"] == file_size
        # one pass over each file domain wastes nothing
        assert l3.stats["read_calls"] == 8
        assert l3.stats["bytes_read"] == file_size
        assert l3.stats["useful_bytes_read"] == file_size
        assert l3.stats["msg_bytes"] > 0

    def test_write_locking_by_level(self):
        spec = PatternSpec("dist3d", 8, dims=(16, 16, 16), elem_size=4, levels=(0, 2, 3))
        rows = {(r.level, r.direction): r for r in run_bench(spec, direction="write")}
        assert rows[(0, "write")].stats["lock_acquisitions"] == 0
        assert rows[(2, "write")].stats["lock_acquisitions"] == 8  # one per window
        assert rows[(2, "write")].stats["read_calls"] == 8  # RMW around the holes
        assert rows[(3, "write")].stats["lock_acquisitions"] == 0
        assert rows[(3, "write")].stats["read_calls"] == 0  # domains fully covered

    def test_infeasible_levels_are_skipped_rows(self):
        spec = PatternSpec("unstruc", 2, dims=(16,), elem_size=4, seed=3, levels=(0, 1, 2, 3))
        rows = run_bench(spec, direction="read")
        by_level = {r.level: r for r in rows}
        assert by_level[0].skipped and by_level[1].skipped
        assert not by_level[2].skipped and not by_level[3].skipped
        assert all(v == 0 for v in by_level[0].stats.values())
        assert by_level[0].seconds == 0.0

    def test_level_one_pads_unequal_call_counts(self):
        # ranks have 3 and 2 runs; without padding the group deadlocks
        spec = PatternSpec("dist3d", 4, dims=(5, 4), elem_size=1, levels=(1,))
        rows = run_bench(spec, direction="both", timeout=20.0)
        read, write = rows
        assert not read.skipped
        assert read.stats["read_calls"] == 10  # 3+3+2+2 contiguous runs
        assert write.stats["write_calls"] == 10

    def test_rows_are_deterministic_except_timing(self):
        spec = PatternSpec("unstruc", 4, dims=(64,), elem_size=8, seed=21, levels=(2, 3))
        a = run_bench(spec, direction="both")
        b = run_bench(spec, direction="both")
        strip = lambda rows: [(r.pattern, r.nprocs, r.level, r.direction, r.skipped, r.stats) for r in rows]
        assert strip(a) == strip(b)

    def test_serialize_mode_matches_threaded_counters(self):
        spec = PatternSpec("dist3d", 4, dims=(8, 8), elem_size=2, levels=(2, 3))
        fast = run_bench(spec, direction="both")
        slow = run_bench(spec, direction="both", serialize=True)
        assert [r.stats for r in fast] == [r.stats for r in slow]

    def test_file_backend_matches_memory_backend(self, tmp_path):
        path = tmp_path / "bench.bin"
        spec = PatternSpec("dist3d", 4, dims=(8, 8), elem_size=2, levels=(0, 3))
        mem_rows = run_bench(spec, direction="both")
        file_rows = run_bench(spec, direction="both", backend=f"file:{path}")
        assert [r.stats for r in mem_rows] == [r.stats for r in file_rows]
        assert path.stat().st_size == pattern_file_size(spec)

    def test_bad_hints_surface(self):
        with pytest.raises(InvalidArgumentError):
            run_bench(self.SPEC, hints={"cb_nodes": "zero"})

    def test_row_dict_shapes(self):
        row = BenchRow("dist3d", 2, 3, "read", False, 0.5, {k: 1 for k in STAT_FIELDS})
        d = row.as_dict()
        assert d["stats"] == {k: 1 for k in STAT_FIELDS}
        flat = row.flat_dict()
        assert flat["msgs_sent"] == 1
        assert "stats" not in flat
