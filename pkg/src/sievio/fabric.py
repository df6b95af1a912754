"""In-process rank tasks and the message passing between them.

A ``RankGroup`` holds per-rank mailboxes keyed by ``(sender, tag)``; delivery
between any pair is FIFO per tag, sends never block (mailboxes are
unbounded), and receives match on sender and tag.  ``run_collective`` drives
one callable per rank on its own thread and joins them, propagating the first
failing rank's error to the caller while tearing the other ranks down.

Two scheduling modes:

* threaded (default): rank tasks run freely; results are deterministic
  because receives match explicitly on (sender, tag).
* serialized: exactly one rank task executes at a time, handing off only at
  fabric wait points, chosen round-robin.  Runs are then fully reproducible
  down to the order messages enter the log, which makes scheduling-sensitive
  tests exact.  Fabric waits are the only legal blocking points in this mode.

Message counters (``msgs_sent``, ``msg_bytes``) accumulate on the group's
``IoStats``.  Payload size is structural: bytes-like payloads count their
length, numbers count 8 bytes, containers sum their items.
"""

from __future__ import annotations

import sys
import threading
import time
from collections import deque
from typing import Any, Callable, Hashable, Sequence

from .errors import (
    CollectiveAbortedError,
    DeadlockError,
    InvalidArgumentError,
    ProtocolError,
)
from .storage import IoStats

_NEW, _READY, _RUNNING, _BLOCKED, _DONE = "new", "ready", "running", "blocked", "done"


def payload_nbytes(payload: Any) -> int:
    """Structural byte size of a message payload, for traffic accounting."""
    if payload is None:
        return 0
    if isinstance(payload, (bytes, bytearray, memoryview)):
        return len(payload)
    if isinstance(payload, bool):
        return 1
    if isinstance(payload, (int, float)):
        return 8
    if isinstance(payload, str):
        return len(payload.encode("utf-8"))
    if isinstance(payload, (tuple, list)):
        return sum(payload_nbytes(item) for item in payload)
    if isinstance(payload, dict):
        return sum(payload_nbytes(k) + payload_nbytes(v) for k, v in payload.items())
    return sys.getsizeof(payload)


class RankGroup:
    """Mailboxes, counters, and (optionally) the serialized scheduler for n ranks."""

    def __init__(self, nprocs: int, *, serialize: bool = False, record_messages: bool = False):
        if not isinstance(nprocs, int) or nprocs < 1:
            raise InvalidArgumentError(f"nprocs must be a positive integer, got {nprocs!r}")
        self.nprocs = nprocs
        self.serialize = serialize
        self.stats = IoStats()
        self.message_log: list[tuple[int, int, Hashable, int]] | None = (
            [] if record_messages else None
        )
        self._cv = threading.Condition()
        self._queues: list[dict[tuple[int, Hashable], deque]] = [{} for _ in range(nprocs)]
        self._failure: BaseException | None = None
        self._failed_rank: int | None = None
        self._state = [_NEW] * nprocs
        self._pred: list[Callable[[], bool] | None] = [None] * nprocs
        self._current: int | None = None
        self._last = nprocs - 1

    def comm(self, rank: int) -> "RankComm":
        if not 0 <= rank < self.nprocs:
            raise InvalidArgumentError(f"rank {rank} outside group of {self.nprocs}")
        return RankComm(self, rank)

    # ------------------------------------------------------------------ failure
    def fail(self, exc: BaseException, rank: int | None = None) -> None:
        """Poison the group: every rank blocked on the fabric aborts."""
        with self._cv:
            if self._failure is None:
                self._failure = exc
                self._failed_rank = rank
            self._cv.notify_all()

    @property
    def failure(self) -> BaseException | None:
        with self._cv:
            return self._failure

    def _check_failure(self, rank: int) -> None:
        # caller holds _cv
        if self._failure is not None and rank != self._failed_rank:
            raise CollectiveAbortedError(
                f"rank {rank} torn down: "
                + (
                    f"rank {self._failed_rank} failed"
                    if self._failed_rank is not None
                    else "the group was aborted"
                )
            ) from self._failure

    # --------------------------------------------------------------- scheduling
    def _wait(self, rank: int, predicate: Callable[[], bool]) -> None:
        # caller holds _cv
        if not self.serialize:
            while not predicate():
                self._check_failure(rank)
                self._cv.wait()
            return
        while True:
            self._check_failure(rank)
            if self._current == rank:
                if predicate():
                    return
                self._state[rank] = _BLOCKED
                self._pred[rank] = predicate
                self._schedule()
            self._cv.wait()

    def _schedule(self) -> None:
        # caller holds _cv; hands the token to the next runnable rank
        self._current = None
        for r in range(self.nprocs):
            if self._state[r] == _BLOCKED and self._pred[r]():  # type: ignore[misc]
                self._state[r] = _READY
                self._pred[r] = None
        for step in range(1, self.nprocs + 1):
            r = (self._last + step) % self.nprocs
            if self._state[r] == _READY:
                self._state[r] = _RUNNING
                self._current = r
                self._last = r
                self._cv.notify_all()
                return
        if any(s == _BLOCKED for s in self._state) and not any(s == _NEW for s in self._state):
            blocked = [r for r, s in enumerate(self._state) if s == _BLOCKED]
            if self._failure is None:
                self._failure = DeadlockError(f"ranks {blocked} are blocked with no sender left")
                self._failed_rank = None
        self._cv.notify_all()

    def _task_begin(self, rank: int) -> None:
        with self._cv:
            if self._state[rank] != _NEW:
                raise ProtocolError(f"rank {rank} started twice on one group")
            if not self.serialize:
                self._state[rank] = _RUNNING
                return
            self._state[rank] = _READY
            # gate: nobody runs until every rank has checked in, so the token
            # hand-off order never depends on thread start timing
            if not any(s == _NEW for s in self._state):
                self._schedule()
            while self._current != rank:
                self._check_failure(rank)
                self._cv.wait()

    def _task_end(self, rank: int) -> None:
        with self._cv:
            self._state[rank] = _DONE
            self._pred[rank] = None
            if self.serialize and self._current == rank:
                self._schedule()
            else:
                self._cv.notify_all()

    def _reset_for_run(self) -> None:
        with self._cv:
            if self._failure is not None:
                raise ProtocolError("group has failed; build a new group")
            if any(s in (_READY, _RUNNING, _BLOCKED) for s in self._state):
                raise ProtocolError("group is already running a collective")
            self._state = [_NEW] * self.nprocs
            self._pred = [None] * self.nprocs
            self._current = None
            self._last = self.nprocs - 1

    # ---------------------------------------------------------------- messaging
    def _send(self, src: int, dst: int, payload: Any, tag: Hashable) -> None:
        if not 0 <= dst < self.nprocs:
            raise InvalidArgumentError(f"destination rank {dst} outside group")
        nbytes = payload_nbytes(payload)
        with self._cv:
            self._check_failure(src)
            key = (src, tag)
            box = self._queues[dst]
            if key not in box:
                box[key] = deque()
            box[key].append(payload)
            if self.message_log is not None:
                self.message_log.append((src, dst, tag, nbytes))
            self._cv.notify_all()
        self.stats.add(msgs_sent=1, msg_bytes=nbytes)

    def _recv(self, me: int, src: int, tag: Hashable) -> Any:
        if not 0 <= src < self.nprocs:
            raise InvalidArgumentError(f"source rank {src} outside group")
        key = (src, tag)
        box = self._queues[me]
        with self._cv:
            self._wait(me, lambda: bool(box.get(key)))
            return box[key].popleft()


class PendingRecv:
    """Handle for a receive posted ahead of the matching send."""

    __slots__ = ("_comm", "src", "tag")

    def __init__(self, comm: "RankComm", src: int, tag: Hashable):
        self._comm = comm
        self.src = src
        self.tag = tag

    def wait(self) -> Any:
        return self._comm.recv(self.src, self.tag)


class RankComm:
    """One rank's endpoint into its group."""

    __slots__ = ("group", "rank")

    def __init__(self, group: RankGroup, rank: int):
        self.group = group
        self.rank = rank

    @property
    def nprocs(self) -> int:
        return self.group.nprocs

    def send(self, dst: int, payload: Any, tag: Hashable = 0) -> None:
        self.group._send(self.rank, dst, payload, ("p2p", tag))

    def recv(self, src: int, tag: Hashable = 0) -> Any:
        return self.group._recv(self.rank, src, ("p2p", tag))

    def irecv(self, src: int, tag: Hashable = 0) -> PendingRecv:
        return PendingRecv(self, src, tag)

    def allgather(self, value: Any) -> list[Any]:
        return self._gather_exchange(value, ("fab", "ag"))

    def barrier(self) -> None:
        self._gather_exchange(None, ("fab", "bar"))

    def global_max(self, value: Any) -> Any:
        return max(self._gather_exchange(value, ("fab", "max")))

    def broadcast(self, root: int, value: Any = None) -> Any:
        if self.rank == root:
            for dst in range(self.nprocs):
                if dst != root:
                    self.group._send(root, dst, value, ("fab", "bc"))
            return value
        return self.group._recv(self.rank, root, ("fab", "bc"))

    def alltoall(self, values: Sequence[Any], tag: Hashable = 0) -> list[Any]:
        """Deliver values[j] to rank j; returns what every rank addressed to me."""
        if len(values) != self.nprocs:
            raise InvalidArgumentError("alltoall needs one value per rank")
        full_tag = ("fab", "a2a", tag)
        out: list[Any] = [None] * self.nprocs
        out[self.rank] = values[self.rank]
        for dst in range(self.nprocs):
            if dst != self.rank:
                self.group._send(self.rank, dst, values[dst], full_tag)
        for src in range(self.nprocs):
            if src != self.rank:
                out[src] = self.group._recv(self.rank, src, full_tag)
        return out

    def _gather_exchange(self, value: Any, tag: Hashable) -> list[Any]:
        out: list[Any] = [None] * self.nprocs
        out[self.rank] = value
        for dst in range(self.nprocs):
            if dst != self.rank:
                self.group._send(self.rank, dst, value, tag)
        for src in range(self.nprocs):
            if src != self.rank:
                out[src] = self.group._recv(self.rank, src, tag)
        return out


def run_collective(
    nprocs: int,
    fn: Callable[..., Any],
    *args: Any,
    group: RankGroup | None = None,
    serialize: bool = False,
    timeout: float | None = 60.0,
    record_messages: bool = False,
) -> list[Any]:
    """Run ``fn(comm, *args)`` once per rank on its own thread and join.

    Returns per-rank results indexed by rank.  If any rank raises, every
    other rank is torn down and the lowest failing rank's original error is
    re-raised here.  ``timeout`` bounds the whole collective; on expiry the
    group is poisoned and a ``DeadlockError`` surfaces.
    """
    g = group if group is not None else RankGroup(
        nprocs, serialize=serialize, record_messages=record_messages
    )
    if g.nprocs != nprocs:
        raise InvalidArgumentError(f"group has {g.nprocs} ranks, asked for {nprocs}")
    g._reset_for_run()
    results: list[Any] = [None] * nprocs
    errors: list[BaseException | None] = [None] * nprocs

    def runner(rank: int) -> None:
        comm = g.comm(rank)
        try:
            g._task_begin(rank)
            results[rank] = fn(comm, *args)
        except BaseException as exc:  # noqa: BLE001 - must propagate to the driver
            errors[rank] = exc
            g.fail(exc, rank)
        finally:
            g._task_end(rank)

    threads = [
        threading.Thread(target=runner, args=(r,), name=f"rank-{r}", daemon=True)
        for r in range(nprocs)
    ]
    for t in threads:
        t.start()
    end_at = None if timeout is None else time.monotonic() + max(timeout, 0.0)
    for t in threads:
        t.join(None if end_at is None else max(0.0, end_at - time.monotonic()))
    stuck = [i for i, t in enumerate(threads) if t.is_alive()]
    if stuck:
        g.fail(DeadlockError(f"ranks {stuck} did not finish within {timeout}s"))
        for t in threads:
            t.join(2.0)
        stuck = [i for i, t in enumerate(threads) if t.is_alive()]
        if stuck:
            raise DeadlockError(f"ranks {stuck} are wedged outside the fabric")

    if any(errors):
        for exc in errors:
            if exc is not None and not isinstance(exc, CollectiveAbortedError):
                raise exc
        failure = g.failure
        if failure is not None and not isinstance(failure, CollectiveAbortedError):
            raise failure
        raise next(exc for exc in errors if exc is not None)
    failure = g.failure
    if failure is not None:
        raise failure
    return results
