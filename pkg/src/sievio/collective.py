"""Two-phase collective I/O over partitioned file domains.

When the ranks of a group ask for interleaved file regions at once, serving
each rank independently wastes the fact that the union of the requests is
usually one dense region.  The collective path splits that union into one
contiguous file domain per I/O rank, lets each domain owner perform few large
contiguous accesses, and moves the per-rank bytes over the fabric:

1. Ranks exchange their request extents.  If no two consecutive non-empty
   extents interleave, everyone falls back to independent sieving.
2. The combined extent is divided evenly among the I/O ranks (the lowest
   ranks, bounded by ``cb_nodes``); the remainder goes one byte apiece to the
   first domains.
3. Each rank splits its request at domain boundaries and ships the per-domain
   segment lists to their owners.
4. Owners walk their domain in buffer-sized steps.  Every step starts with an
   all-to-all of transfer sizes, then receives are posted, then data flows:
   on reads the owner reads one contiguous chunk spanning the bytes anyone
   needs in the step and scatters it; on writes the writers ship bytes and
   the owner patches and writes the covered run, read-modify-writing only
   when the incoming bytes leave holes.  Every rank executes the globally
   maximal step count so nobody abandons a peer mid-conversation.

Collective writes never take byte-range locks: the domains partition the
file, so no two owners touch the same byte.  Data addressed to the owner
itself moves by direct copy, never through the fabric.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import InvalidArgumentError, RequestBeyondEofError
from .fabric import RankComm
from .layout import (
    MemoryLayout,
    Segment,
    SegmentCursor,
    segments_nbytes,
    union_segments,
    validate_request_segments,
)
from .sieve import SieveConfig, sieve_read, sieve_write
from .storage import IoStats, StorageFile

DEFAULT_CB_BUFFER = 4 * 1024 * 1024

# Extent carried by a rank with nothing to ask for: start above end.
EMPTY_EXTENT: tuple[int, int] = (0, -1)

_TAG_PLAN = "cplan"
_TAG_SIZES = "csizes"
_TAG_DATA = "cdata"


@dataclass(frozen=True)
class CollectiveConfig:
    """Knobs for the two-phase path.

    ``cb_nodes`` limits how many (lowest) ranks own file domains and perform
    I/O; ``None`` means every rank does.
    """

    cb_buffer_size: int = DEFAULT_CB_BUFFER
    cb_nodes: int | None = None

    def __post_init__(self) -> None:
        if self.cb_buffer_size < 1:
            raise InvalidArgumentError("cb_buffer_size must be at least 1 byte")
        if self.cb_nodes is not None and self.cb_nodes < 1:
            raise InvalidArgumentError("cb_nodes must be at least 1")


@dataclass(frozen=True)
class FileDomain:
    owner: int
    lo: int
    hi: int

    @property
    def nbytes(self) -> int:
        return self.hi - self.lo


@dataclass
class AccessPlan:
    """Who needs what from whom, from one rank's point of view."""

    outgoing: dict[int, list[Segment]]  # owner -> my segments in that owner's domain
    incoming: dict[int, list[Segment]]  # requester -> their segments in my domain
    self_segments: list[Segment]  # my segments in my own domain


def request_extent(segments: Sequence[Segment]) -> tuple[int, int]:
    """(first byte, last byte) of a request, or the empty sentinel."""
    if not segments:
        return EMPTY_EXTENT
    return segments[0][0], segments[-1][0] + segments[-1][1] - 1


def exchange_extents(comm: RankComm, extent: tuple[int, int]) -> list[tuple[int, int]]:
    """Allgather of per-rank (start, end) extents, indexed by rank."""
    return [tuple(e) for e in comm.allgather(tuple(extent))]


def check_interleaved(extents: Sequence[tuple[int, int]]) -> bool:
    """True when any consecutive pair of non-empty extents overlaps.

    Empty sentinels are skipped, preserving rank order.  Ends are inclusive;
    a next extent starting exactly one past the previous end does not count.
    """
    live = [e for e in extents if e[0] <= e[1]]
    return any(nxt[0] < prev[1] for prev, nxt in zip(live, live[1:]))


def compute_file_domains(min_start: int, max_end: int, io_ranks: int) -> list[FileDomain]:
    """Divide ``[min_start, max_end]`` evenly across ``io_ranks`` owners.

    The remainder is spread one byte apiece over the first ``span % io_ranks``
    domains, so domain sizes differ by at most one byte.
    """
    if io_ranks < 1:
        raise InvalidArgumentError("need at least one I/O rank")
    if max_end < min_start:
        raise InvalidArgumentError("extent is empty")
    span = max_end - min_start + 1
    base, rem = divmod(span, io_ranks)
    domains: list[FileDomain] = []
    lo = min_start
    for owner in range(io_ranks):
        size = base + (1 if owner < rem else 0)
        domains.append(FileDomain(owner, lo, lo + size))
        lo += size
    return domains


def split_by_domains(
    segments: Sequence[Segment], domains: Sequence[FileDomain]
) -> dict[int, list[Segment]]:
    """Split a request at domain boundaries, grouped by owning rank.

    Segments straddling a boundary split eagerly, so every returned piece
    lies wholly inside one domain.
    """
    validate_request_segments(segments)
    out: dict[int, list[Segment]] = {}
    di = 0
    for off, ln in segments:
        end = off + ln
        pos = off
        while pos < end:
            while di < len(domains) and domains[di].hi <= pos:
                di += 1
            if di >= len(domains) or pos < domains[di].lo:
                raise InvalidArgumentError(f"byte {pos} lies outside every file domain")
            dom = domains[di]
            take = min(end, dom.hi) - pos
            out.setdefault(dom.owner, []).append((pos, take))
            pos += take
    return out


def build_access_plan(
    comm: RankComm, segments: Sequence[Segment], domains: Sequence[FileDomain]
) -> AccessPlan:
    """Exchange per-domain segment lists so owners learn every request they serve."""
    split = split_by_domains(segments, domains)
    me = comm.rank
    self_segments = split.pop(me, [])
    outgoing = split
    counts = [0] * comm.nprocs
    for owner, segs in outgoing.items():
        counts[owner] = len(segs)
    matrix = comm.allgather(tuple(counts))
    requesters = [r for r in range(comm.nprocs) if r != me and matrix[r][me] > 0]
    pending = {r: comm.irecv(r, _TAG_PLAN) for r in requesters}
    for owner in sorted(outgoing):
        comm.send(owner, list(outgoing[owner]), _TAG_PLAN)
    incoming = {r: [tuple(s) for s in pending[r].wait()] for r in requesters}
    return AccessPlan(outgoing=outgoing, incoming=incoming, self_segments=self_segments)


class _TripleCursor:
    """Sequential consumer of (file_off, mem_off, nbytes) transfer runs."""

    __slots__ = ("_triples", "_idx", "_into")

    def __init__(self, triples: list[tuple[int, int, int]]):
        self._triples = triples
        self._idx = 0
        self._into = 0

    def take(self, nbytes: int) -> list[tuple[int, int, int]]:
        out: list[tuple[int, int, int]] = []
        need = nbytes
        while need > 0:
            if self._idx >= len(self._triples):
                raise InvalidArgumentError("transfer cursor ran out of bytes")
            foff, moff, ln = self._triples[self._idx]
            take = min(ln - self._into, need)
            out.append((foff + self._into, moff + self._into, take))
            self._into += take
            need -= take
            if self._into == ln:
                self._idx += 1
                self._into = 0
        return out


def _owner_transfer_cursors(
    segments: tuple[Segment, ...],
    mem: MemoryLayout,
    split: dict[int, list[Segment]],
    me: int,
) -> dict[int, _TripleCursor]:
    """Per-owner cursors pairing my file pieces (in file order) with my memory."""
    mem_cursor = SegmentCursor(mem.segments)
    cursors: dict[int, _TripleCursor] = {}
    for owner in sorted(split):
        triples: list[tuple[int, int, int]] = []
        for off, ln in split[owner]:
            pos = off
            for moff, mlen in mem_cursor.take(ln):
                triples.append((pos, moff, mlen))
                pos += mlen
        cursors[owner] = _TripleCursor(triples)
    return cursors


def _combined_snapshot(comm: RankComm, file: StorageFile) -> IoStats:
    return file.stats.snapshot() + comm.group.stats.snapshot()


@dataclass
class _StepPlan:
    """Owner-side bookkeeping for walking one file domain."""

    served_cursors: dict[int, SegmentCursor]
    needed_cursor: SegmentCursor
    st_loc: int
    end_exclusive: int
    ntimes: int

    @classmethod
    def build(
        cls, plan: AccessPlan, me: int, cb_buffer_size: int
    ) -> "_StepPlan":
        served: dict[int, list[Segment]] = {
            r: list(segs) for r, segs in plan.incoming.items() if segs
        }
        if plan.self_segments:
            served[me] = list(plan.self_segments)
        needed = union_segments(seg for segs in served.values() for seg in segs)
        if needed:
            st = needed[0][0]
            end = needed[-1][0] + needed[-1][1]
            ntimes = -(-(end - st) // cb_buffer_size)
        else:
            st, end, ntimes = 0, 0, 0
        return cls(
            served_cursors={r: SegmentCursor(segs) for r, segs in served.items()},
            needed_cursor=SegmentCursor(needed),
            st_loc=st,
            end_exclusive=end,
            ntimes=ntimes,
        )

    def window_hi(self, step: int, cb_buffer_size: int) -> int:
        return min(self.st_loc + (step + 1) * cb_buffer_size, self.end_exclusive)


def _plan_phase(
    comm: RankComm,
    segments: tuple[Segment, ...],
    cfg: CollectiveConfig,
    probe: dict | None,
):
    """Shared setup for collective read and write.

    Returns None when the request set is not interleaved (caller falls back),
    else the tuple of per-rank planning state for the step loop.
    """
    extents = exchange_extents(comm, request_extent(segments))
    if not check_interleaved(extents):
        if probe is not None:
            probe.update(interleaved=False, ntimes=0, max_ntimes=0, steps=0, domain=None)
        return None
    live = [e for e in extents if e[0] <= e[1]]
    min_start = min(e[0] for e in live)
    max_end = max(e[1] for e in live)
    io_ranks = min(cfg.cb_nodes or comm.nprocs, comm.nprocs)
    domains = compute_file_domains(min_start, max_end, io_ranks)
    plan = build_access_plan(comm, segments, domains)
    steps = _StepPlan.build(plan, comm.rank, cfg.cb_buffer_size)
    max_ntimes = comm.global_max(steps.ntimes)
    split_all = dict(plan.outgoing)
    if plan.self_segments:
        split_all[comm.rank] = plan.self_segments
    if probe is not None:
        me_domain = domains[comm.rank] if comm.rank < len(domains) else None
        probe.update(
            interleaved=True,
            ntimes=steps.ntimes,
            max_ntimes=max_ntimes,
            domain=(me_domain.lo, me_domain.hi) if me_domain else None,
        )
    return domains, plan, steps, max_ntimes, split_all


def collective_read(
    comm: RankComm,
    file: StorageFile,
    segments: Sequence[Segment],
    mem: MemoryLayout,
    cfg: CollectiveConfig | None = None,
    sieve_cfg: SieveConfig | None = None,
    probe: dict | None = None,
) -> IoStats:
    """Read this rank's ``segments`` into ``mem`` as part of a group-wide call.

    Every rank of the group must call this once.  Returns the group-wide
    counter delta for the operation as seen by this rank.
    """
    cfg = cfg or CollectiveConfig()
    segments = tuple(segments)
    validate_request_segments(segments)
    if segments_nbytes(segments) != mem.nbytes:
        raise InvalidArgumentError("memory layout size does not match request size")
    before = _combined_snapshot(comm, file)

    planned = _plan_phase(comm, segments, cfg, probe)
    if planned is None:
        if segments:
            sieve_read(file, segments, mem, sieve_cfg)
        comm.barrier()
        return _combined_snapshot(comm, file) - before
    _, _, steps, max_ntimes, split_all = planned
    placement = _owner_transfer_cursors(segments, mem, split_all, comm.rank)

    executed = 0
    for k in range(max_ntimes):
        step_pieces: dict[int, list[Segment]] = {}
        send_sizes = [0] * comm.nprocs
        if k < steps.ntimes:
            hi = steps.window_hi(k, cfg.cb_buffer_size)
            for r, cur in steps.served_cursors.items():
                pieces = cur.take_until(hi)
                if pieces:
                    step_pieces[r] = pieces
                    send_sizes[r] = segments_nbytes(pieces)
        incoming_sizes = comm.alltoall(send_sizes, tag=(_TAG_SIZES, k))
        pending = {
            o: comm.irecv(o, (_TAG_DATA, k))
            for o in range(comm.nprocs)
            if o != comm.rank and incoming_sizes[o] > 0
        }
        if step_pieces:
            hi = steps.window_hi(k, cfg.cb_buffer_size)
            need = steps.needed_cursor.take_until(hi)
            chunk_lo = need[0][0]
            chunk_len = need[-1][0] + need[-1][1] - chunk_lo
            data, short = file.read_contig(chunk_lo, chunk_len)
            if short:
                raise RequestBeyondEofError(
                    f"collective read needs bytes up to {chunk_lo + chunk_len} "
                    f"but file ends at {chunk_lo + chunk_len - short}"
                )
            file.stats.add(useful_bytes_read=segments_nbytes(need))
            for r in sorted(step_pieces):
                if r == comm.rank:
                    continue
                payload = b"".join(
                    data[off - chunk_lo : off - chunk_lo + ln] for off, ln in step_pieces[r]
                )
                comm.send(r, payload, (_TAG_DATA, k))
            if comm.rank in step_pieces:
                # Local placement straight from the staging chunk, no message.
                for off, ln in step_pieces[comm.rank]:
                    pos = off - chunk_lo
                    for _, moff, mlen in placement[comm.rank].take(ln):
                        mem.buffer[moff : moff + mlen] = data[pos : pos + mlen]
                        pos += mlen
        for o, p in sorted(pending.items()):
            payload = p.wait()
            pos = 0
            for _, moff, mlen in placement[o].take(len(payload)):
                mem.buffer[moff : moff + mlen] = payload[pos : pos + mlen]
                pos += mlen
        executed += 1
    if probe is not None:
        probe["steps"] = executed
    comm.barrier()
    return _combined_snapshot(comm, file) - before


def collective_write(
    comm: RankComm,
    file: StorageFile,
    segments: Sequence[Segment],
    mem: MemoryLayout,
    cfg: CollectiveConfig | None = None,
    sieve_cfg: SieveConfig | None = None,
    probe: dict | None = None,
) -> IoStats:
    """Write this rank's ``segments`` from ``mem`` as part of a group-wide call.

    Domain owners assemble incoming bytes per step; a step whose incoming
    bytes cover a solid run is written directly, otherwise the owner reads
    the run, patches it, and writes it back.  No byte-range locks are taken
    anywhere on this path: the file domains partition the file.
    """
    cfg = cfg or CollectiveConfig()
    segments = tuple(segments)
    validate_request_segments(segments)
    if segments_nbytes(segments) != mem.nbytes:
        raise InvalidArgumentError("memory layout size does not match request size")
    before = _combined_snapshot(comm, file)

    planned = _plan_phase(comm, segments, cfg, probe)
    if planned is None:
        if segments:
            sieve_write(file, segments, mem, sieve_cfg, use_locks=False)
        comm.barrier()
        return _combined_snapshot(comm, file) - before
    _, _, steps, max_ntimes, split_all = planned
    gather_cursors = _owner_transfer_cursors(segments, mem, split_all, comm.rank)

    executed = 0
    for k in range(max_ntimes):
        step_pieces: dict[int, list[Segment]] = {}
        expect_sizes = [0] * comm.nprocs
        if k < steps.ntimes:
            hi = steps.window_hi(k, cfg.cb_buffer_size)
            for r, cur in steps.served_cursors.items():
                pieces = cur.take_until(hi)
                if pieces:
                    step_pieces[r] = pieces
                    expect_sizes[r] = segments_nbytes(pieces)
        owed = comm.alltoall(expect_sizes, tag=(_TAG_SIZES, k))
        pending = {
            r: comm.irecv(r, (_TAG_DATA, k))
            for r in step_pieces
            if r != comm.rank
        }
        self_payload: bytes | None = None
        for owner in range(comm.nprocs):
            n = owed[owner]
            if n <= 0:
                continue
            payload = b"".join(
                bytes(mem.buffer[moff : moff + ln])
                for _, moff, ln in gather_cursors[owner].take(n)
            )
            if owner == comm.rank:
                self_payload = payload
            else:
                comm.send(owner, payload, (_TAG_DATA, k))
        if step_pieces:
            arrived: dict[int, bytes] = {}
            for r in sorted(step_pieces):
                if r == comm.rank:
                    assert self_payload is not None
                    arrived[r] = self_payload
                else:
                    arrived[r] = pending[r].wait()
            coverage = union_segments(
                seg for pieces in step_pieces.values() for seg in pieces
            )
            run_lo = coverage[0][0]
            run_hi = coverage[-1][0] + coverage[-1][1]
            if len(coverage) == 1:
                staging = bytearray(run_hi - run_lo)
            else:
                data, short = file.read_contig(run_lo, run_hi - run_lo)
                staging = bytearray(data)
                if short:
                    staging.extend(b"\x00" * short)
            for r in sorted(step_pieces):
                payload = arrived[r]
                pos = 0
                for off, ln in step_pieces[r]:
                    staging[off - run_lo : off - run_lo + ln] = payload[pos : pos + ln]
                    pos += ln
            file.write_contig(run_lo, staging)
            file.stats.add(useful_bytes_written=segments_nbytes(coverage))
        executed += 1
    if probe is not None:
        probe["steps"] = executed
    comm.barrier()
    return _combined_snapshot(comm, file) - before
