from .patterns import (
    PatternSpec,
    dims_create,
    feasible_levels,
    gen_btio,
    gen_dist3d,
    gen_unstruc,
    pattern_file_size,
    pattern_filetype,
    pattern_rank_segments,
    segments_to_filetype,
)
from .runner import BenchRow, run_bench, trace_pattern

__all__ = [
    "BenchRow",
    "PatternSpec",
    "dims_create",
    "feasible_levels",
    "gen_btio",
    "gen_dist3d",
    "gen_unstruc",
    "pattern_file_size",
    "pattern_filetype",
    "pattern_rank_segments",
    "run_bench",
    "segments_to_filetype",
    "trace_pattern",
]
