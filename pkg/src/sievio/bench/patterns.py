"""Access-pattern generators for the benchmark.

Three pattern families, each producing per-rank byte segments over one
shared file:

* ``dist3d``: a block-distributed multidimensional array, every rank owning
  one rectangular block.  The canonical case of regular noncontiguous access.
* ``btio``: the diagonal multipartition decomposition.  nprocs must be a
  perfect square q*q; each spatial dimension splits into q blocks, giving
  q*q*q cells per z-layer-of-cells, and rank (i, j) owns the cell
  ((i+k) mod q, (j+k) mod q) in layer k.  Grid points carry a fixed number
  of solution components stored fastest in column-major file order, so each
  rank needs many short runs separated by holes several times their size.
* ``unstruc``: a seeded random permutation scattering each rank's elements
  across the file, the worst case for locality.  Without a seed the mapping
  is the identity and every rank's bytes are contiguous.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from ..errors import InvalidArgumentError
from ..layout import (
    BYTE,
    Datatype,
    Segment,
    basic,
    block_bounds,
    make_darray_block,
    make_indexed,
    merge_segments,
)

PATTERNS = ("dist3d", "btio", "unstruc")

BTIO_COMPONENTS = 5  # solution values per grid point, never distributed

_DEFAULTS: dict[str, tuple[tuple[int, ...], int]] = {
    "dist3d": ((64, 64, 64), 4),
    "btio": ((18, 18, 18), 8),
    "unstruc": ((65536,), 64),
}


def dims_create(nprocs: int, ndims: int) -> tuple[int, ...]:
    """Factor ``nprocs`` into a balanced ``ndims``-dimensional grid."""
    if nprocs < 1 or ndims < 1:
        raise InvalidArgumentError("nprocs and ndims must be positive")
    factors: list[int] = []
    n = nprocs
    f = 2
    while f * f <= n:
        while n % f == 0:
            factors.append(f)
            n //= f
        f += 1
    if n > 1:
        factors.append(n)
    grid = [1] * ndims
    for p in sorted(factors, reverse=True):
        grid[grid.index(min(grid))] *= p
    return tuple(sorted(grid, reverse=True))


@dataclass(frozen=True)
class PatternSpec:
    """Geometry of one benchmark case."""

    pattern: str
    nprocs: int
    dims: tuple[int, ...] = ()
    elem_size: int = 0
    seed: int | None = None
    levels: tuple[int, ...] = (0, 2, 3)

    def __post_init__(self) -> None:
        if self.pattern not in PATTERNS:
            raise InvalidArgumentError(f"unknown pattern {self.pattern!r}")
        if self.nprocs < 1:
            raise InvalidArgumentError("nprocs must be positive")
        default_dims, default_elem = _DEFAULTS[self.pattern]
        object.__setattr__(self, "dims", tuple(self.dims) or default_dims)
        object.__setattr__(self, "elem_size", self.elem_size or default_elem)
        object.__setattr__(self, "levels", tuple(self.levels))
        if any(d < 1 for d in self.dims) or self.elem_size < 1:
            raise InvalidArgumentError("dims and elem_size must be positive")
        if any(lv not in (0, 1, 2, 3) for lv in self.levels):
            raise InvalidArgumentError("levels must be drawn from 0..3")
        if self.pattern == "btio":
            q = math.isqrt(self.nprocs)
            if q * q != self.nprocs:
                raise InvalidArgumentError("btio needs a perfect-square nprocs")
            if len(self.dims) != 3:
                raise InvalidArgumentError("btio needs three spatial dims")
            if any(q > d for d in self.dims):
                raise InvalidArgumentError("btio cell grid exceeds the array dims")
        if self.pattern == "unstruc":
            if len(self.dims) != 1:
                raise InvalidArgumentError("unstruc takes a single dim: the element count")
            if self.nprocs & (self.nprocs - 1):
                raise InvalidArgumentError("unstruc needs a power-of-two nprocs")
            if self.dims[0] < self.nprocs:
                raise InvalidArgumentError("unstruc needs at least one element per rank")
        if self.pattern == "dist3d":
            grid = dims_create(self.nprocs, len(self.dims))
            if any(p > d for p, d in zip(grid, self.dims)):
                raise InvalidArgumentError("dist3d grid exceeds the array dims")

    @property
    def proc_grid(self) -> tuple[int, ...]:
        if self.pattern != "dist3d":
            raise InvalidArgumentError("proc_grid only applies to dist3d")
        return dims_create(self.nprocs, len(self.dims))


def gen_dist3d(
    dims: tuple[int, ...], proc_grid: tuple[int, ...], rank: int, elem_size: int
) -> Datatype:
    """This rank's filetype for a block-distributed array of fixed-size elements."""
    return make_darray_block(dims, proc_grid, rank, basic(elem_size))


def gen_btio(
    spatial_dims: tuple[int, int, int], nprocs: int, rank: int, elem_size: int = 8
) -> tuple[Segment, ...]:
    """This rank's byte segments under the diagonal multipartition."""
    q = math.isqrt(nprocs)
    if q * q != nprocs:
        raise InvalidArgumentError("btio needs a perfect-square nprocs")
    if not 0 <= rank < nprocs:
        raise InvalidArgumentError(f"rank {rank} outside {nprocs} ranks")
    nx, ny, nz = spatial_dims
    i, j = divmod(rank, q)
    point = BTIO_COMPONENTS * elem_size
    segs: list[Segment] = []
    for k in range(q):
        cx = (i + k) % q
        cy = (j + k) % q
        x0, lx = block_bounds(nx, q, cx)
        y0, ly = block_bounds(ny, q, cy)
        z0, lz = block_bounds(nz, q, k)
        for z in range(z0, z0 + lz):
            for y in range(y0, y0 + ly):
                start = (x0 + nx * (y + ny * z)) * point
                segs.append((start, lx * point))
    return merge_segments(segs)


def gen_unstruc(
    n_elements: int,
    nprocs: int,
    rank: int,
    elem_size: int = 64,
    seed: int | None = None,
) -> tuple[Segment, ...]:
    """This rank's byte segments under a permuted element-to-file mapping."""
    if nprocs < 1 or nprocs & (nprocs - 1):
        raise InvalidArgumentError("unstruc needs a power-of-two nprocs")
    if not 0 <= rank < nprocs:
        raise InvalidArgumentError(f"rank {rank} outside {nprocs} ranks")
    if n_elements < nprocs:
        raise InvalidArgumentError("need at least one element per rank")
    mapping = list(range(n_elements))
    if seed is not None:
        random.Random(seed).shuffle(mapping)
    start, count = block_bounds(n_elements, nprocs, rank)
    slots = sorted(mapping[start : start + count])
    return merge_segments((slot * elem_size, elem_size) for slot in slots)


def segments_to_filetype(segments: tuple[Segment, ...]) -> Datatype:
    """An indexed filetype whose tile 0 is exactly these byte segments."""
    if not segments:
        raise InvalidArgumentError("cannot build a filetype from an empty request")
    return make_indexed(
        [ln for _, ln in segments],
        [off for off, _ in segments],
        BYTE,
        displs_in_bytes=True,
    )


def pattern_rank_segments(spec: PatternSpec, rank: int) -> tuple[Segment, ...]:
    if spec.pattern == "dist3d":
        return gen_dist3d(spec.dims, spec.proc_grid, rank, spec.elem_size).segments
    if spec.pattern == "btio":
        return gen_btio(spec.dims, spec.nprocs, rank, spec.elem_size)
    return gen_unstruc(spec.dims[0], spec.nprocs, rank, spec.elem_size, spec.seed)


def pattern_filetype(spec: PatternSpec, rank: int) -> Datatype:
    if spec.pattern == "dist3d":
        return gen_dist3d(spec.dims, spec.proc_grid, rank, spec.elem_size)
    return segments_to_filetype(pattern_rank_segments(spec, rank))


def pattern_file_size(spec: PatternSpec) -> int:
    n = 1
    for d in spec.dims:
        n *= d
    if spec.pattern == "btio":
        return n * BTIO_COMPONENTS * spec.elem_size
    return n * spec.elem_size


def feasible_levels(spec: PatternSpec) -> tuple[int, ...]:
    """Levels a pattern can run: unstruc has no usable contiguous decomposition."""
    if spec.pattern == "unstruc":
        return (2, 3)
    return (0, 1, 2, 3)
