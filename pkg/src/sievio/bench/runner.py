"""Benchmark driver.

One run per (level, direction): a fresh storage is seeded with deterministic
contents, every rank executes the level's request program against one shared
handle group, and the transferred bytes are checked against a brute-force
oracle before the row is accepted.  Timing covers only the parallel section;
counters come from the storage and fabric instrumentation.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass

from ..errors import BenchVerificationError, InvalidArgumentError
from ..fabric import RankGroup, RankComm, run_collective
from ..files import open_file
from ..layout import Datatype, FlatRepr, MemoryLayout, Segment, flatten, segments_nbytes
from ..storage import FileStorage, IoStats, MemoryStorage, StorageFile
from .patterns import (
    PatternSpec,
    feasible_levels,
    pattern_file_size,
    pattern_filetype,
    pattern_rank_segments,
)

DIRECTIONS = ("read", "write", "both")

ROW_FIELDS = ("pattern", "nprocs", "level", "direction", "skipped", "seconds")


@dataclass(frozen=True)
class BenchRow:
    """One benchmark result: a level/direction pair plus its counters."""

    pattern: str
    nprocs: int
    level: int
    direction: str
    skipped: bool
    seconds: float
    stats: dict[str, int]

    def as_dict(self) -> dict[str, object]:
        return {
            "pattern": self.pattern,
            "nprocs": self.nprocs,
            "level": self.level,
            "direction": self.direction,
            "skipped": self.skipped,
            "seconds": self.seconds,
            "stats": dict(self.stats),
        }

    def flat_dict(self) -> dict[str, object]:
        out: dict[str, object] = {
            "pattern": self.pattern,
            "nprocs": self.nprocs,
            "level": self.level,
            "direction": self.direction,
            "skipped": self.skipped,
            "seconds": self.seconds,
        }
        out.update(self.stats)
        return out


def _parse_backend(backend: str) -> tuple[str, str | None]:
    if backend == "mem":
        return "mem", None
    if backend.startswith("file:") and len(backend) > len("file:"):
        return "file", backend[len("file:") :]
    raise InvalidArgumentError(f"backend must be 'mem' or 'file:PATH', got {backend!r}")


def _fresh_storage(kind: str, path: str | None, prefill: bytes) -> StorageFile:
    if kind == "mem":
        return MemoryStorage(prefill)
    assert path is not None
    with open(path, "wb") as fh:  # reset between runs so every level sees the same bytes
        fh.write(prefill)
    return FileStorage(path)


def _rank_read(
    comm: RankComm,
    storage: StorageFile,
    hints: dict[str, str] | None,
    level: int,
    segs: list[tuple[Segment, ...]],
    filetypes: list[Datatype],
    ncalls: int,
) -> bytes:
    handle = open_file(storage, comm, hints)
    mine = segs[comm.rank]
    buf = bytearray(segments_nbytes(mine))
    if level in (0, 1):
        issue = handle.read_indep if level == 0 else handle.read_coll
        pos = 0
        for off, ln in mine:
            issue(off, MemoryLayout(buf, ((pos, ln),)))
            pos += ln
        if level == 1:
            for _ in range(ncalls - len(mine)):
                handle.read_coll(0, MemoryLayout(bytearray(), ()))
    else:
        handle.set_view(0, filetypes[comm.rank])
        mem = MemoryLayout.contiguous(buf)
        (handle.read_indep if level == 2 else handle.read_coll)(0, mem)
    return bytes(buf)


def _rank_write(
    comm: RankComm,
    storage: StorageFile,
    hints: dict[str, str] | None,
    level: int,
    segs: list[tuple[Segment, ...]],
    filetypes: list[Datatype],
    ncalls: int,
    payloads: list[bytes],
) -> None:
    handle = open_file(storage, comm, hints)
    mine = segs[comm.rank]
    buf = bytearray(payloads[comm.rank])
    if level in (0, 1):
        issue = handle.write_indep if level == 0 else handle.write_coll
        pos = 0
        for off, ln in mine:
            issue(off, MemoryLayout(buf, ((pos, ln),)))
            pos += ln
        if level == 1:
            for _ in range(ncalls - len(mine)):
                handle.write_coll(0, MemoryLayout(bytearray(), ()))
    else:
        handle.set_view(0, filetypes[comm.rank])
        mem = MemoryLayout.contiguous(buf)
        (handle.write_indep if level == 2 else handle.write_coll)(0, mem)


def run_bench(
    spec: PatternSpec,
    hints: dict[str, str] | None = None,
    backend: str = "mem",
    direction: str = "both",
    *,
    serialize: bool = False,
    timeout: float | None = 120.0,
) -> list[BenchRow]:
    """Run every requested level of one pattern and return verified rows."""
    if direction not in DIRECTIONS:
        raise InvalidArgumentError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    kind, path = _parse_backend(backend)
    dirs = ("read", "write") if direction == "both" else (direction,)

    segs = [pattern_rank_segments(spec, r) for r in range(spec.nprocs)]
    filetypes = [pattern_filetype(spec, r) for r in range(spec.nprocs)]
    ncalls = max(len(s) for s in segs)
    file_size = pattern_file_size(spec)

    base_seed = 0 if spec.seed is None else spec.seed
    prefill = random.Random(base_seed ^ 0x5EEDF00D).randbytes(file_size)
    payloads = [
        random.Random((base_seed << 20) ^ (7919 * r + 13)).randbytes(segments_nbytes(s))
        for r, s in enumerate(segs)
    ]

    expected_read = [b"".join(prefill[o : o + n] for o, n in s) for s in segs]
    expected_write = bytearray(prefill)
    for r, s in enumerate(segs):
        pos = 0
        for off, ln in s:
            expected_write[off : off + ln] = payloads[r][pos : pos + ln]
            pos += ln

    feasible = feasible_levels(spec)
    rows: list[BenchRow] = []
    for level in spec.levels:
        for d in dirs:
            if level not in feasible:
                rows.append(
                    BenchRow(spec.pattern, spec.nprocs, level, d, True, 0.0, IoStats().as_dict())
                )
                continue
            storage = _fresh_storage(kind, path, prefill)
            group = RankGroup(spec.nprocs, serialize=serialize)
            fn = _rank_read if d == "read" else _rank_write
            extra = () if d == "read" else (payloads,)
            try:
                t0 = time.perf_counter()
                results = run_collective(
                    spec.nprocs,
                    fn,
                    storage,
                    hints,
                    level,
                    segs,
                    filetypes,
                    ncalls,
                    *extra,
                    group=group,
                    timeout=timeout,
                )
                seconds = time.perf_counter() - t0
                stats = (storage.stats + group.stats).as_dict()
                if d == "read":
                    for r, got in enumerate(results):
                        if got != expected_read[r]:
                            raise BenchVerificationError(
                                f"{spec.pattern} level {level} read: rank {r} bytes differ"
                            )
                else:
                    got = storage.contents()
                    if got != bytes(expected_write):
                        raise BenchVerificationError(
                            f"{spec.pattern} level {level} write: file contents differ"
                        )
            finally:
                storage.close()
            rows.append(BenchRow(spec.pattern, spec.nprocs, level, d, False, seconds, stats))
    return rows


def trace_pattern(spec: PatternSpec) -> list[FlatRepr]:
    """Flattened per-rank layouts, rank order, for inspection and dumps."""
    return [flatten(pattern_filetype(spec, r)) for r in range(spec.nprocs)]
