"""Open files: views, hints, and routing requests to an access strategy.

Each rank holds its own ``OpenFile`` handle onto a shared storage backend.
The handle carries that rank's file view, its hint set, and a sequential
position that explicit offsets bypass.

A request is classified structurally: map it through the view and count the
resulting segments.  At most one segment is a contiguous request (level 0
independent, level 1 collective); more is noncontiguous (level 2, level 3).
Contiguous collective requests carry no layout information worth optimizing,
so they execute exactly like independent contiguous requests; the group only
agrees on that routing first.  Noncontiguous independent requests go through
data sieving, falling back to per-segment writes when the backend cannot
lock.  Noncontiguous collective requests enter the two-phase engine.
"""

from __future__ import annotations

from enum import IntEnum
from typing import Mapping

from .collective import CollectiveConfig, collective_read, collective_write
from .errors import (
    InvalidArgumentError,
    LockingUnsupportedError,
    ProtocolError,
    RequestBeyondEofError,
)
from .fabric import RankComm
from .layout import Datatype, FileView, MemoryLayout, default_view, view_map
from .sieve import (
    SieveConfig,
    sieve_read,
    sieve_write,
    write_segments_individually,
)
from .storage import IoStats, StorageFile

HINT_KEYS = ("cb_buffer_size", "cb_nodes", "ind_rd_buffer_size", "ind_wr_buffer_size")

_HINT_DEFAULTS = {
    "cb_buffer_size": 4 * 1024 * 1024,
    "ind_rd_buffer_size": 4 * 1024 * 1024,
    "ind_wr_buffer_size": 512 * 1024,
}


class RequestLevel(IntEnum):
    CONTIGUOUS_INDEPENDENT = 0
    CONTIGUOUS_COLLECTIVE = 1
    NONCONTIGUOUS_INDEPENDENT = 2
    NONCONTIGUOUS_COLLECTIVE = 3


def classify_request(
    view: FileView, visible_offset: int, nbytes: int, collective: bool = False
) -> RequestLevel:
    """Structural level of a request: segment count after view mapping."""
    contiguous = len(view_map(view, visible_offset, nbytes)) <= 1
    if contiguous:
        return (
            RequestLevel.CONTIGUOUS_COLLECTIVE
            if collective
            else RequestLevel.CONTIGUOUS_INDEPENDENT
        )
    return (
        RequestLevel.NONCONTIGUOUS_COLLECTIVE
        if collective
        else RequestLevel.NONCONTIGUOUS_INDEPENDENT
    )


class OpenFile:
    """One rank's handle on a storage file."""

    def __init__(
        self,
        storage: StorageFile,
        comm: RankComm | None = None,
        hints: Mapping[str, object] | None = None,
    ):
        self.storage = storage
        self.comm = comm
        self.view = default_view()
        self.position = 0
        nprocs = comm.nprocs if comm is not None else 1
        self.hints: dict[str, str] = {
            **{k: str(v) for k, v in _HINT_DEFAULTS.items()},
            "cb_nodes": str(nprocs),
        }
        if hints:
            self.set_hints(hints)

    # ------------------------------------------------------------------- hints
    def set_hints(self, hints: Mapping[str, object]) -> None:
        """Apply known hints; unknown keys are ignored, bad values rejected."""
        for key, raw in hints.items():
            if key not in HINT_KEYS:
                continue
            try:
                value = int(str(raw), 10)
            except ValueError:
                raise InvalidArgumentError(f"hint {key} must be a decimal integer, got {raw!r}")
            if value < 1:
                raise InvalidArgumentError(f"hint {key} must be positive, got {value}")
            self.hints[key] = str(value)

    @property
    def sieve_config(self) -> SieveConfig:
        return SieveConfig(
            ind_rd_buffer_size=int(self.hints["ind_rd_buffer_size"]),
            ind_wr_buffer_size=int(self.hints["ind_wr_buffer_size"]),
        )

    @property
    def collective_config(self) -> CollectiveConfig:
        nprocs = self.comm.nprocs if self.comm is not None else 1
        return CollectiveConfig(
            cb_buffer_size=int(self.hints["cb_buffer_size"]),
            cb_nodes=min(int(self.hints["cb_nodes"]), nprocs),
        )

    # -------------------------------------------------------------------- view
    def set_view(self, displacement: int, filetype: Datatype) -> None:
        """Install a view for this rank only; the sequential position resets."""
        if filetype.size < 1:
            raise InvalidArgumentError("filetype must have at least one useful byte")
        self.view = FileView(displacement, filetype)
        self.position = 0

    def map_request(self, visible_offset: int, nbytes: int):
        return view_map(self.view, visible_offset, nbytes)

    # ------------------------------------------------------------- independent
    def read_indep(
        self, offset: int | None, mem: MemoryLayout, nbytes: int | None = None
    ) -> IoStats:
        offset, nbytes = self._resolve(offset, mem, nbytes)
        segments = view_map(self.view, offset, nbytes)
        before = self.storage.stats.snapshot()
        if len(segments) <= 1:
            self._read_contiguous(segments, mem)
        else:
            sieve_read(self.storage, segments, mem, self.sieve_config)
        self.position = offset + nbytes
        return self.storage.stats.snapshot() - before

    def write_indep(
        self, offset: int | None, mem: MemoryLayout, nbytes: int | None = None
    ) -> IoStats:
        offset, nbytes = self._resolve(offset, mem, nbytes)
        segments = view_map(self.view, offset, nbytes)
        before = self.storage.stats.snapshot()
        if len(segments) <= 1:
            self._write_contiguous(segments, mem)
        else:
            try:
                sieve_write(self.storage, segments, mem, self.sieve_config)
            except LockingUnsupportedError:
                write_segments_individually(self.storage, segments, mem)
        self.position = offset + nbytes
        return self.storage.stats.snapshot() - before

    # -------------------------------------------------------------- collective
    def read_coll(
        self,
        offset: int | None,
        mem: MemoryLayout,
        nbytes: int | None = None,
        probe: dict | None = None,
    ) -> IoStats:
        comm = self._require_comm()
        offset, nbytes = self._resolve(offset, mem, nbytes)
        segments = view_map(self.view, offset, nbytes)
        before = self.storage.stats.snapshot() + comm.group.stats.snapshot()
        if all(comm.allgather(len(segments) <= 1)):
            # Group-wide contiguous: no layout to optimize, run it independently.
            self._read_contiguous(segments, mem)
            comm.barrier()
        else:
            collective_read(
                comm,
                self.storage,
                segments,
                mem,
                self.collective_config,
                self.sieve_config,
                probe=probe,
            )
        self.position = offset + nbytes
        after = self.storage.stats.snapshot() + comm.group.stats.snapshot()
        return after - before

    def write_coll(
        self,
        offset: int | None,
        mem: MemoryLayout,
        nbytes: int | None = None,
        probe: dict | None = None,
    ) -> IoStats:
        comm = self._require_comm()
        offset, nbytes = self._resolve(offset, mem, nbytes)
        segments = view_map(self.view, offset, nbytes)
        before = self.storage.stats.snapshot() + comm.group.stats.snapshot()
        if all(comm.allgather(len(segments) <= 1)):
            self._write_contiguous(segments, mem)
            comm.barrier()
        else:
            collective_write(
                comm,
                self.storage,
                segments,
                mem,
                self.collective_config,
                self.sieve_config,
                probe=probe,
            )
        self.position = offset + nbytes
        after = self.storage.stats.snapshot() + comm.group.stats.snapshot()
        return after - before

    # ---------------------------------------------------------------- plumbing
    def _resolve(
        self, offset: int | None, mem: MemoryLayout, nbytes: int | None
    ) -> tuple[int, int]:
        offset = self.position if offset is None else offset
        nbytes = mem.nbytes if nbytes is None else nbytes
        if nbytes != mem.nbytes:
            raise InvalidArgumentError(
                f"request of {nbytes} bytes against memory layout of {mem.nbytes}"
            )
        if offset < 0:
            raise InvalidArgumentError("visible offset must be non-negative")
        return offset, nbytes

    def _read_contiguous(self, segments, mem: MemoryLayout) -> None:
        if not segments:
            return
        off, ln = segments[0]
        data, short = self.storage.read_contig(off, ln)
        if short:
            raise RequestBeyondEofError(
                f"requested bytes up to {off + ln} but file ends at {off + ln - short}"
            )
        mem.scatter(data)
        self.storage.stats.add(useful_bytes_read=ln)

    def _write_contiguous(self, segments, mem: MemoryLayout) -> None:
        if not segments:
            return
        off, ln = segments[0]
        self.storage.write_contig(off, mem.gather())
        self.storage.stats.add(useful_bytes_written=ln)

    def _require_comm(self) -> RankComm:
        if self.comm is None:
            raise ProtocolError("collective access needs a handle opened with a rank group")
        return self.comm


def open_file(
    storage: StorageFile,
    comm: RankComm | None = None,
    hints: Mapping[str, object] | None = None,
) -> OpenFile:
    """Open a handle; with a group the open is collective and synchronizes the ranks."""
    handle = OpenFile(storage, comm=comm, hints=hints)
    if comm is not None:
        comm.barrier()
    return handle
