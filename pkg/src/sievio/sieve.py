"""Data sieving: satisfying a noncontiguous request with few large accesses.

A noncontiguous request is a sorted list of disjoint file segments.  Rather
than touching each segment with its own system call, the sieve plans buffer
sized windows over the request and serves each window with one contiguous
backend access, copying the useful bytes between the staging buffer and the
caller's (possibly noncontiguous) memory.

Window rule: each window starts at the first requested byte not yet
consumed, may span at most the buffer size, and is trimmed so its last byte
is a requested byte (no point reading or locking a trailing hole).  Windows
therefore never re-read bytes, are disjoint, and jointly cover exactly the
requested bytes; gaps wider than the buffer are skipped entirely rather than
read through.

Reads need no coordination.  A sieved write of a window that still contains
holes must read-modify-write, and the window stays range-locked across that
sequence so a concurrent writer of interleaved segments cannot resurrect
stale bytes.  A window whose requested bytes form one exact run skips both
the prefetch read and the lock.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidArgumentError, LockingUnsupportedError, RequestBeyondEofError
from .layout import (
    MemoryLayout,
    Segment,
    SegmentCursor,
    segments_nbytes,
    validate_request_segments,
)
from .storage import IoStats, StorageFile

DEFAULT_READ_BUFFER = 4 * 1024 * 1024
DEFAULT_WRITE_BUFFER = 512 * 1024


@dataclass(frozen=True)
class SieveConfig:
    """Buffer limits for independent noncontiguous access.

    ``hole_threshold``, when set, turns off sieving for any window whose
    hole-to-useful byte ratio exceeds it; those windows access their segments
    individually instead.
    """

    ind_rd_buffer_size: int = DEFAULT_READ_BUFFER
    ind_wr_buffer_size: int = DEFAULT_WRITE_BUFFER
    hole_threshold: float | None = None

    def __post_init__(self) -> None:
        if self.ind_rd_buffer_size < 1 or self.ind_wr_buffer_size < 1:
            raise InvalidArgumentError("sieve buffer sizes must be at least 1 byte")
        if self.hole_threshold is not None and self.hole_threshold < 0:
            raise InvalidArgumentError("hole_threshold must be non-negative")


@dataclass(frozen=True)
class Window:
    """One planned contiguous access: [lo, hi) plus the request pieces inside it."""

    lo: int
    hi: int
    pieces: tuple[Segment, ...]

    @property
    def span(self) -> int:
        return self.hi - self.lo

    @property
    def useful(self) -> int:
        return segments_nbytes(self.pieces)


def plan_windows(segments: tuple[Segment, ...] | list[Segment], limit: int) -> list[Window]:
    """Partition a request into buffer-sized windows under the window rule."""
    if limit < 1:
        raise InvalidArgumentError("window limit must be at least 1 byte")
    validate_request_segments(segments)
    cursor = SegmentCursor(segments)
    windows: list[Window] = []
    while not cursor.exhausted:
        lo = cursor.next_offset()
        pieces = cursor.take_until(lo + limit)
        hi = pieces[-1][0] + pieces[-1][1]
        windows.append(Window(lo, hi, tuple(pieces)))
    return windows


def _window_sieves(window: Window, cfg_threshold: float | None) -> bool:
    """Whether this window is served by one buffered access (vs per segment)."""
    if cfg_threshold is None:
        return True
    holes = window.span - window.useful
    return holes <= cfg_threshold * window.useful


def _gather(mem: MemoryLayout, cursor: SegmentCursor, nbytes: int) -> bytes:
    return b"".join(
        bytes(mem.buffer[off : off + ln]) for off, ln in cursor.take(nbytes)
    )


def sieve_read(
    file: StorageFile,
    segments: tuple[Segment, ...] | list[Segment],
    mem: MemoryLayout,
    cfg: SieveConfig | None = None,
) -> IoStats:
    """Fill ``mem`` with the requested file segments using buffered windows.

    A short backend read inside a window is always an error: a window's last
    byte is requested by construction, so missing bytes can never be holes.
    """
    cfg = cfg or SieveConfig()
    segments = tuple(segments)
    validate_request_segments(segments)
    if segments_nbytes(segments) != mem.nbytes:
        raise InvalidArgumentError("memory layout size does not match request size")
    before = file.stats.snapshot()
    mem_cursor = SegmentCursor(mem.segments)
    for window in plan_windows(segments, cfg.ind_rd_buffer_size):
        if _window_sieves(window, cfg.hole_threshold):
            data, short = file.read_contig(window.lo, window.span)
            if short:
                raise RequestBeyondEofError(
                    f"requested bytes up to {window.hi} but file ends at {window.hi - short}"
                )
            for off, ln in window.pieces:
                pos = off - window.lo
                for moff, mlen in mem_cursor.take(ln):
                    mem.buffer[moff : moff + mlen] = data[pos : pos + mlen]
                    pos += mlen
        else:
            for off, ln in window.pieces:
                data, short = file.read_contig(off, ln)
                if short:
                    raise RequestBeyondEofError(
                        f"requested bytes up to {off + ln} but file ends at {off + ln - short}"
                    )
                pos = 0
                for moff, mlen in mem_cursor.take(ln):
                    mem.buffer[moff : moff + mlen] = data[pos : pos + mlen]
                    pos += mlen
        file.stats.add(useful_bytes_read=window.useful)
    return file.stats.snapshot() - before


def sieve_write(
    file: StorageFile,
    segments: tuple[Segment, ...] | list[Segment],
    mem: MemoryLayout,
    cfg: SieveConfig | None = None,
    *,
    use_locks: bool = True,
) -> IoStats:
    """Write the segments from ``mem`` using buffered windows.

    Windows with holes are read, patched, and written back; with
    ``use_locks`` the window is range-locked across that sequence.  Callers
    that already own exclusive access (a collective that partitioned the
    file) pass ``use_locks=False``.  A backend without locking support
    refuses up front so the caller can fall back to per-segment writes.
    """
    cfg = cfg or SieveConfig()
    segments = tuple(segments)
    validate_request_segments(segments)
    if segments_nbytes(segments) != mem.nbytes:
        raise InvalidArgumentError("memory layout size does not match request size")
    if use_locks and not file.supports_locking:
        raise LockingUnsupportedError(
            "sieved writes need byte-range locks; fall back to per-segment writes"
        )
    before = file.stats.snapshot()
    mem_cursor = SegmentCursor(mem.segments)
    for window in plan_windows(segments, cfg.ind_wr_buffer_size):
        if not _window_sieves(window, cfg.hole_threshold):
            for off, ln in window.pieces:
                file.write_contig(off, _gather(mem, mem_cursor, ln))
        elif len(window.pieces) == 1:
            # The single run covers the window exactly: plain write, no lock.
            file.write_contig(window.lo, _gather(mem, mem_cursor, window.span))
        else:
            lock = file.lock_range(window.lo, window.span) if use_locks else None
            try:
                data, short = file.read_contig(window.lo, window.span)
                staging = bytearray(data)
                if short:
                    staging.extend(b"\x00" * short)
                for off, ln in window.pieces:
                    pos = off - window.lo
                    for moff, mlen in mem_cursor.take(ln):
                        staging[pos : pos + mlen] = mem.buffer[moff : moff + mlen]
                        pos += mlen
                file.write_contig(window.lo, staging)
            finally:
                if lock is not None:
                    lock.release()
        file.stats.add(useful_bytes_written=window.useful)
    return file.stats.snapshot() - before


def read_segments_individually(
    file: StorageFile, segments: tuple[Segment, ...] | list[Segment], mem: MemoryLayout
) -> None:
    """One backend read per segment: the unoptimized strategy."""
    cursor = SegmentCursor(mem.segments)
    for off, ln in segments:
        data, short = file.read_contig(off, ln)
        if short:
            raise RequestBeyondEofError(
                f"requested bytes up to {off + ln} but file ends at {off + ln - short}"
            )
        pos = 0
        for moff, mlen in cursor.take(ln):
            mem.buffer[moff : moff + mlen] = data[pos : pos + mlen]
            pos += mlen
        file.stats.add(useful_bytes_read=ln)


def write_segments_individually(
    file: StorageFile, segments: tuple[Segment, ...] | list[Segment], mem: MemoryLayout
) -> None:
    """One backend write per segment: exact bytes, so no locks needed."""
    cursor = SegmentCursor(mem.segments)
    for off, ln in segments:
        file.write_contig(off, _gather(mem, cursor, ln))
        file.stats.add(useful_bytes_written=ln)
