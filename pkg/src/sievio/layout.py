"""Derived datatypes, their flattened byte layout, and file views.

A ``Datatype`` describes which bytes inside a repeating span are meaningful.
Every constructor eagerly computes the flattened form: a sorted, maximally
merged list of ``(offset, length)`` byte segments relative to the datatype
origin, together with ``size`` (useful bytes) and ``extent`` (the span one
tile occupies, holes included).  The flattened form, not the constructor
tree, is what the access optimizations consume.

A ``FileView`` pairs a displacement with a datatype used as a filetype.  The
filetype tiles end to end from the displacement, each tile advancing by its
extent, and the visible byte stream is the concatenation of the useful bytes
of successive tiles.  ``view_map`` translates a (start, nbytes) range of that
visible stream into absolute file segments.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Sequence

from .errors import InvalidArgumentError

# A byte segment: (offset, length), length > 0.
Segment = tuple[int, int]

ROW_MAJOR = "row-major"
COLUMN_MAJOR = "column-major"

# Offsets and extents must stay addressable by a signed 64-bit quantity.
MAX_OFFSET = 2**63 - 1


def _check_count(name: str, value: int, minimum: int = 1) -> None:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise InvalidArgumentError(f"{name} must be an integer >= {minimum}, got {value!r}")


def merge_segments(segments: Iterable[Segment]) -> tuple[Segment, ...]:
    """Sort, validate, and maximally merge byte segments.

    Zero-length entries are dropped.  Touching segments are merged into one.
    Overlapping segments are rejected: a layout in which the same byte is
    claimed twice is a construction error, not something to silently union.
    """
    cleaned = sorted((off, ln) for off, ln in segments if ln != 0)
    out: list[list[int]] = []
    for off, ln in cleaned:
        if ln < 0:
            raise InvalidArgumentError(f"segment length must be positive, got {(off, ln)}")
        if off < 0:
            raise InvalidArgumentError(f"segment offset must be non-negative, got {(off, ln)}")
        if off + ln > MAX_OFFSET:
            raise InvalidArgumentError(f"segment {(off, ln)} exceeds the 63-bit offset limit")
        if out:
            prev_end = out[-1][0] + out[-1][1]
            if off < prev_end:
                raise InvalidArgumentError(
                    f"segments overlap: {(out[-1][0], out[-1][1])} and {(off, ln)}"
                )
            if off == prev_end:
                out[-1][1] += ln
                continue
        out.append([off, ln])
    return tuple((off, ln) for off, ln in out)


def union_segments(segments: Iterable[Segment]) -> tuple[Segment, ...]:
    """Like merge_segments but overlap is allowed; returns the byte-set union."""
    cleaned = sorted((off, ln) for off, ln in segments if ln > 0)
    out: list[list[int]] = []
    for off, ln in cleaned:
        if out and off <= out[-1][0] + out[-1][1]:
            out[-1][1] = max(out[-1][1], off + ln - out[-1][0])
        else:
            out.append([off, ln])
    return tuple((off, ln) for off, ln in out)


def segments_nbytes(segments: Iterable[Segment]) -> int:
    return sum(ln for _, ln in segments)


def validate_request_segments(segments: Sequence[Segment]) -> None:
    """Require the sorted / non-overlapping / merged form the engines assume."""
    prev_end: int | None = None
    for off, ln in segments:
        if ln <= 0 or off < 0:
            raise InvalidArgumentError(f"bad request segment {(off, ln)}")
        if prev_end is not None and off <= prev_end:
            raise InvalidArgumentError(
                f"request segments must be sorted, disjoint and merged near offset {off}"
            )
        prev_end = off + ln


def _tile(segments: Iterable[Segment], stride: int, count: int) -> Iterator[Segment]:
    for k in range(count):
        base = k * stride
        for off, ln in segments:
            yield (base + off, ln)


@dataclass(frozen=True)
class FlatRepr:
    """Flattened datatype layout: what the optimizations actually operate on."""

    segments: tuple[Segment, ...]
    size: int
    extent: int

    def dump(self) -> str:
        """Debug text form, one ``offset length`` pair per line."""
        return "\n".join(f"{off} {ln}" for off, ln in self.segments)


@dataclass(frozen=True)
class Datatype:
    """A constructor-tree node with its flattening precomputed.

    ``segments`` always satisfy: sorted ascending, non-overlapping, no two
    consecutive entries touching, and every byte within ``[0, extent)``.
    ``params`` keeps the raw constructor arguments so the tree stays
    inspectable (tests enumerate bytes from it independently of the
    flattening logic).
    """

    kind: str
    size: int
    extent: int
    segments: tuple[Segment, ...]
    params: dict[str, Any] = field(default_factory=dict, repr=False, compare=False)
    children: tuple["Datatype", ...] = ()

    def __post_init__(self) -> None:
        if self.extent > MAX_OFFSET:
            raise InvalidArgumentError(f"extent {self.extent} exceeds the 63-bit offset limit")
        for off, ln in self.segments:
            if off + ln > self.extent:
                raise InvalidArgumentError(
                    f"segment {(off, ln)} escapes the datatype extent {self.extent}"
                )

    @property
    def is_contiguous(self) -> bool:
        """True when the useful bytes form at most one run starting at the origin."""
        if not self.segments:
            return True
        return self.segments == ((0, self.size),)


def flatten(dt: Datatype) -> FlatRepr:
    """Return the cached flattened representation of ``dt``."""
    return FlatRepr(dt.segments, dt.size, dt.extent)


def basic(width: int) -> Datatype:
    """An elementary type: ``width`` consecutive useful bytes."""
    _check_count("width", width)
    return Datatype("basic", width, width, ((0, width),), {"width": width})


BYTE = basic(1)


def make_contiguous(count: int, base: Datatype) -> Datatype:
    """``count`` copies of ``base`` laid end to end, each advancing by the base extent."""
    _check_count("count", count)
    segs = merge_segments(_tile(base.segments, base.extent, count))
    return Datatype(
        "contiguous",
        count * base.size,
        count * base.extent,
        segs,
        {"count": count},
        (base,),
    )


def make_vector(
    count: int,
    blocklen: int,
    stride: int,
    base: Datatype,
    *,
    stride_in_bytes: bool = False,
) -> Datatype:
    """``count`` blocks of ``blocklen`` base copies, block k starting at ``k * stride``.

    ``stride`` is measured in base extents unless ``stride_in_bytes`` is set.
    The extent runs from the first byte of the first block through the last
    byte of the last block.  Strides that make blocks collide (or walk below
    the origin) are rejected by the merge step.
    """
    _check_count("count", count)
    _check_count("blocklen", blocklen)
    stride_bytes = stride if stride_in_bytes else stride * base.extent
    block = tuple(_tile(base.segments, base.extent, blocklen))
    segs = merge_segments(_stride_blocks(block, stride_bytes, count))
    extent = (count - 1) * stride_bytes + blocklen * base.extent
    return Datatype(
        "vector",
        count * blocklen * base.size,
        extent,
        segs,
        {"count": count, "blocklen": blocklen, "stride_bytes": stride_bytes},
        (base,),
    )


def _stride_blocks(block: tuple[Segment, ...], stride_bytes: int, count: int) -> Iterator[Segment]:
    for k in range(count):
        start = k * stride_bytes
        for off, ln in block:
            yield (start + off, ln)


def make_indexed(
    blocklens: Sequence[int],
    displs: Sequence[int],
    base: Datatype,
    *,
    displs_in_bytes: bool = False,
) -> Datatype:
    """Blocks of base copies at explicit displacements.

    ``displs`` are in base extents unless ``displs_in_bytes`` is set.  The
    extent reaches from the origin to the end of the farthest block, so a
    lone block at a positive displacement still tiles from offset zero.
    """
    if len(blocklens) != len(displs):
        raise InvalidArgumentError("blocklens and displs must have equal length")
    unit = 1 if displs_in_bytes else base.extent
    segs: list[Segment] = []
    extent = 0
    size = 0
    for bl, d in zip(blocklens, displs):
        _check_count("blocklen", bl)
        start = d * unit
        if start < 0:
            raise InvalidArgumentError(f"negative block displacement {start}")
        segs.extend((start + off, ln) for off, ln in _tile(base.segments, base.extent, bl))
        extent = max(extent, start + bl * base.extent)
        size += bl * base.size
    return Datatype(
        "indexed",
        size,
        extent,
        merge_segments(segs),
        {"blocklens": tuple(blocklens), "displ_bytes": tuple(d * unit for d in displs)},
        (base,),
    )


def make_heterogeneous(
    blocklens: Sequence[int],
    byte_displs: Sequence[int],
    bases: Sequence[Datatype],
) -> Datatype:
    """Blocks of differing base types at explicit byte displacements."""
    if not (len(blocklens) == len(byte_displs) == len(bases)):
        raise InvalidArgumentError("blocklens, byte_displs, and bases must have equal length")
    segs: list[Segment] = []
    extent = 0
    size = 0
    for bl, d, b in zip(blocklens, byte_displs, bases):
        _check_count("blocklen", bl)
        if d < 0:
            raise InvalidArgumentError(f"negative block displacement {d}")
        segs.extend((d + off, ln) for off, ln in _tile(b.segments, b.extent, bl))
        extent = max(extent, d + bl * b.extent)
        size += bl * b.size
    return Datatype(
        "heterogeneous",
        size,
        extent,
        merge_segments(segs),
        {"blocklens": tuple(blocklens), "byte_displs": tuple(byte_displs)},
        tuple(bases),
    )


def _linear_strides(sizes: Sequence[int], order: str) -> list[int]:
    ndims = len(sizes)
    strides = [0] * ndims
    if order == ROW_MAJOR:
        acc = 1
        for d in range(ndims - 1, -1, -1):
            strides[d] = acc
            acc *= sizes[d]
    elif order == COLUMN_MAJOR:
        acc = 1
        for d in range(ndims):
            strides[d] = acc
            acc *= sizes[d]
    else:
        raise InvalidArgumentError(f"order must be {ROW_MAJOR!r} or {COLUMN_MAJOR!r}, got {order!r}")
    return strides


def make_subarray(
    sizes: Sequence[int],
    subsizes: Sequence[int],
    starts: Sequence[int],
    order: str = ROW_MAJOR,
    base: Datatype = BYTE,
) -> Datatype:
    """A rectangular block of a multidimensional array of base elements.

    The full array has ``sizes[d]`` elements along dimension d; the block
    spans ``subsizes[d]`` elements from ``starts[d]``.  Each element occupies
    one base extent; the datatype extent covers the whole array so tiles of
    consecutive array snapshots line up.
    """
    if not (len(sizes) == len(subsizes) == len(starts)) or not sizes:
        raise InvalidArgumentError("sizes, subsizes, and starts must be equal-length, non-empty")
    for n, s, st in zip(sizes, subsizes, starts):
        _check_count("array size", n)
        _check_count("subarray size", s)
        if st < 0 or st + s > n:
            raise InvalidArgumentError(
                f"subarray block [{st}, {st + s}) escapes dimension of size {n}"
            )
    strides = _linear_strides(sizes, order)
    segs: list[Segment] = []
    for idx in itertools.product(*(range(st, st + s) for st, s in zip(starts, subsizes))):
        linear = sum(i * k for i, k in zip(idx, strides))
        pos = linear * base.extent
        segs.extend((pos + off, ln) for off, ln in base.segments)
    nelems_total = 1
    nelems_block = 1
    for n, s in zip(sizes, subsizes):
        nelems_total *= n
        nelems_block *= s
    return Datatype(
        "subarray",
        nelems_block * base.size,
        nelems_total * base.extent,
        merge_segments(segs),
        {
            "sizes": tuple(sizes),
            "subsizes": tuple(subsizes),
            "starts": tuple(starts),
            "order": order,
        },
        (base,),
    )


def block_bounds(n: int, parts: int, index: int) -> tuple[int, int]:
    """Bounds of block ``index`` when ``n`` items split into ``parts`` blocks.

    Lower-indexed blocks absorb the remainder one item apiece, so block sizes
    differ by at most one.  Returns (start, size).
    """
    if parts < 1 or not 0 <= index < parts:
        raise InvalidArgumentError(f"bad block index {index} for {parts} parts")
    q, r = divmod(n, parts)
    size = q + (1 if index < r else 0)
    start = index * q + min(index, r)
    return start, size


def make_darray_block(
    global_sizes: Sequence[int],
    proc_grid: Sequence[int],
    rank: int,
    base: Datatype = BYTE,
) -> Datatype:
    """This rank's block of a block-distributed multidimensional array.

    Ranks map onto ``proc_grid`` in row-major order; each grid dimension
    splits the matching array dimension into near-equal blocks.  Equivalent
    to ``make_subarray`` with the computed block bounds.
    """
    if len(global_sizes) != len(proc_grid) or not global_sizes:
        raise InvalidArgumentError("global_sizes and proc_grid must be equal-length, non-empty")
    nranks = 1
    for p in proc_grid:
        _check_count("grid dimension", p)
        nranks *= p
    if not 0 <= rank < nranks:
        raise InvalidArgumentError(f"rank {rank} outside grid of {nranks} ranks")
    coords: list[int] = []
    rem = rank
    for p in reversed(proc_grid):
        rem, c = divmod(rem, p)
        coords.append(c)
    coords.reverse()
    starts: list[int] = []
    subsizes: list[int] = []
    for n, p, c in zip(global_sizes, proc_grid, coords):
        st, sz = block_bounds(n, p, c)
        if sz == 0:
            raise InvalidArgumentError(
                f"grid dimension {p} exceeds array dimension {n}: empty block"
            )
        starts.append(st)
        subsizes.append(sz)
    sub = make_subarray(global_sizes, subsizes, starts, ROW_MAJOR, base)
    return Datatype(
        "darray",
        sub.size,
        sub.extent,
        sub.segments,
        {
            "global_sizes": tuple(global_sizes),
            "proc_grid": tuple(proc_grid),
            "rank": rank,
            "starts": tuple(starts),
            "subsizes": tuple(subsizes),
        },
        (base,),
    )


@dataclass(frozen=True)
class FileView:
    """A displacement plus a filetype tiled end to end from it."""

    displacement: int
    filetype: Datatype

    def __post_init__(self) -> None:
        if self.displacement < 0:
            raise InvalidArgumentError(f"negative view displacement {self.displacement}")


def default_view() -> FileView:
    return FileView(0, BYTE)


def view_map(view: FileView, visible_start: int, nbytes: int) -> tuple[Segment, ...]:
    """Translate a visible-byte range into absolute file segments.

    Visible byte v lives in tile ``v // size`` of the filetype; within the
    tile it sits at the v-th useful byte of the flattened segments.  Output
    segments are produced in ascending order and merged when consecutive
    tiles butt against each other (the default byte view collapses to a
    single run this way).
    """
    if visible_start < 0 or nbytes < 0:
        raise InvalidArgumentError("visible_start and nbytes must be non-negative")
    if nbytes == 0:
        return ()
    ft = view.filetype
    if ft.size == 0:
        raise InvalidArgumentError("filetype has no useful bytes; nothing is visible")
    tile, pos = divmod(visible_start, ft.size)
    out: list[list[int]] = []
    remaining = nbytes

    # Locate the segment containing useful-byte `pos` of the first tile.
    seg_idx = 0
    into = pos
    while into >= ft.segments[seg_idx][1]:
        into -= ft.segments[seg_idx][1]
        seg_idx += 1

    while remaining > 0:
        tile_base = view.displacement + tile * ft.extent
        while seg_idx < len(ft.segments) and remaining > 0:
            off, ln = ft.segments[seg_idx]
            take = min(ln - into, remaining)
            abs_off = tile_base + off + into
            if out and out[-1][0] + out[-1][1] == abs_off:
                out[-1][1] += take
            else:
                out.append([abs_off, take])
            remaining -= take
            into += take
            if into == ln:
                seg_idx += 1
                into = 0
        tile += 1
        seg_idx = 0
        into = 0
    return tuple((off, ln) for off, ln in out)


@dataclass
class MemoryLayout:
    """A buffer plus the byte segments of it that participate in a transfer.

    Segment order defines the correspondence with file bytes: the k-th useful
    memory byte pairs with the k-th requested file byte.
    """

    buffer: bytearray | memoryview
    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        self.segments = tuple(self.segments)
        validate_request_segments(self.segments)
        if self.segments:
            last_off, last_len = self.segments[-1]
            if last_off + last_len > len(self.buffer):
                raise InvalidArgumentError("memory segments escape the buffer")

    @classmethod
    def contiguous(cls, buffer: bytearray | memoryview, nbytes: int | None = None) -> "MemoryLayout":
        n = len(buffer) if nbytes is None else nbytes
        return cls(buffer, ((0, n),) if n else ())

    @property
    def nbytes(self) -> int:
        return segments_nbytes(self.segments)

    def gather(self) -> bytes:
        return b"".join(bytes(self.buffer[off : off + ln]) for off, ln in self.segments)

    def scatter(self, data: bytes | bytearray | memoryview) -> None:
        if len(data) != self.nbytes:
            raise InvalidArgumentError(
                f"scatter of {len(data)} bytes into layout of {self.nbytes}"
            )
        pos = 0
        for off, ln in self.segments:
            self.buffer[off : off + ln] = data[pos : pos + ln]
            pos += ln


class SegmentCursor:
    """Sequential consumer of a sorted segment list, splitting at byte granularity."""

    __slots__ = ("_segments", "_idx", "_into")

    def __init__(self, segments: Sequence[Segment]):
        self._segments = segments
        self._idx = 0
        self._into = 0

    @property
    def exhausted(self) -> bool:
        return self._idx >= len(self._segments)

    def next_offset(self) -> int:
        """Offset of the first unconsumed byte."""
        off, _ = self._segments[self._idx]
        return off + self._into

    def take(self, nbytes: int) -> list[Segment]:
        """Consume exactly ``nbytes``, returning the pieces covered."""
        out: list[Segment] = []
        need = nbytes
        while need > 0:
            if self.exhausted:
                raise InvalidArgumentError("cursor ran out of segments")
            off, ln = self._segments[self._idx]
            avail = ln - self._into
            take = min(avail, need)
            out.append((off + self._into, take))
            self._into += take
            need -= take
            if self._into == ln:
                self._idx += 1
                self._into = 0
        return out

    def take_until(self, bound: int) -> list[Segment]:
        """Consume every remaining byte whose offset is below ``bound``."""
        out: list[Segment] = []
        while not self.exhausted:
            off, ln = self._segments[self._idx]
            start = off + self._into
            if start >= bound:
                break
            take = min(ln - self._into, bound - start)
            out.append((start, take))
            self._into += take
            if self._into == ln:
                self._idx += 1
                self._into = 0
        return out


def pair_segments(
    src_segments: Sequence[Segment], dst_segments: Sequence[Segment]
) -> Iterator[tuple[int, int, int]]:
    """Yield (src_off, dst_off, nbytes) runs pairing two equal-length byte streams."""
    if segments_nbytes(src_segments) != segments_nbytes(dst_segments):
        raise InvalidArgumentError("source and destination byte counts differ")
    dst = SegmentCursor(dst_segments)
    for soff, sln in src_segments:
        pos = soff
        for doff, dln in dst.take(sln):
            yield (pos, doff, dln)
            pos += dln
