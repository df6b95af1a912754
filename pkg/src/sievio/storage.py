"""Instrumented storage backends with byte-range locking.

Two backends share one behavioral contract: contiguous reads and writes at
explicit offsets, zero-fill when a write lands past the current end, short
reads (never errors) when a read runs past the end, and a mutual-exclusion
byte-range lock table.  Every call bumps counters on an ``IoStats`` object so
tests and benchmarks can count exactly what an access strategy cost.

Range locks are always in-process: the concurrent actors here are rank tasks
inside one process, so OS-level advisory locks (which do not exclude threads
of the same process) would not actually serialize anything.
"""

from __future__ import annotations

import os
import threading
from typing import NamedTuple

from .errors import InvalidArgumentError, LockingUnsupportedError, StorageError

STAT_FIELDS = (
    "read_calls",
    "write_calls",
    "bytes_read",
    "bytes_written",
    "useful_bytes_read",
    "useful_bytes_written",
    "lock_acquisitions",
    "msgs_sent",
    "msg_bytes",
)


class IoStats:
    """Thread-safe monotonic counters for one storage file or rank group.

    Arithmetic (``a - b``, ``a + b``) produces plain value objects, which is
    how callers report per-operation deltas.
    """

    __slots__ = STAT_FIELDS + ("_mutex",)

    def __init__(self, **initial: int):
        object.__setattr__(self, "_mutex", threading.Lock())
        for name in STAT_FIELDS:
            setattr(self, name, initial.pop(name, 0))
        if initial:
            raise InvalidArgumentError(f"unknown counter fields: {sorted(initial)}")

    def add(self, **deltas: int) -> None:
        with self._mutex:
            for name, value in deltas.items():
                if name not in STAT_FIELDS:
                    raise InvalidArgumentError(f"unknown counter field: {name}")
                setattr(self, name, getattr(self, name) + value)

    def snapshot(self) -> "IoStats":
        with self._mutex:
            return IoStats(**{name: getattr(self, name) for name in STAT_FIELDS})

    def as_dict(self) -> dict[str, int]:
        snap = self.snapshot()
        return {name: getattr(snap, name) for name in STAT_FIELDS}

    def __add__(self, other: "IoStats") -> "IoStats":
        a, b = self.as_dict(), other.as_dict()
        return IoStats(**{name: a[name] + b[name] for name in STAT_FIELDS})

    def __sub__(self, other: "IoStats") -> "IoStats":
        a, b = self.as_dict(), other.as_dict()
        return IoStats(**{name: a[name] - b[name] for name in STAT_FIELDS})

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IoStats):
            return NotImplemented
        return self.as_dict() == other.as_dict()

    def __repr__(self) -> str:
        parts = ", ".join(f"{k}={v}" for k, v in self.as_dict().items() if v)
        return f"IoStats({parts})"


class ReadResult(NamedTuple):
    data: bytes
    short: int  # requested bytes the file did not have


class RangeLock:
    """Held byte-range lock; release explicitly or use as a context manager."""

    def __init__(self, table: "_RangeLockTable", start: int, length: int):
        self._table = table
        self._key = (start, length)
        self._released = False

    def release(self) -> None:
        if not self._released:
            self._released = True
            self._table.release(self._key)

    def __enter__(self) -> "RangeLock":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.release()


class _RangeLockTable:
    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._held: list[tuple[int, int]] = []

    def acquire(self, start: int, length: int) -> RangeLock:
        end = start + length
        with self._cond:
            while any(start < hs + hl and hs < end for hs, hl in self._held):
                self._cond.wait()
            self._held.append((start, length))
        return RangeLock(self, start, length)

    def release(self, key: tuple[int, int]) -> None:
        with self._cond:
            self._held.remove(key)
            self._cond.notify_all()


class StorageFile:
    """Common storage behavior; subclasses provide raw byte access."""

    def __init__(self, *, supports_locking: bool = True, stats: IoStats | None = None):
        self.stats = stats if stats is not None else IoStats()
        self.supports_locking = supports_locking
        self._locks = _RangeLockTable()
        self._mutex = threading.Lock()

    # subclass surface
    def _read_at(self, offset: int, nbytes: int) -> bytes:
        raise NotImplementedError

    def _write_at(self, offset: int, data: bytes) -> None:
        raise NotImplementedError

    def _size(self) -> int:
        raise NotImplementedError

    @property
    def size(self) -> int:
        with self._mutex:
            return self._size()

    def read_contig(self, offset: int, nbytes: int) -> ReadResult:
        """Read up to ``nbytes`` at ``offset``; short reads report, not raise."""
        if offset < 0 or nbytes < 0:
            raise InvalidArgumentError("offset and nbytes must be non-negative")
        with self._mutex:
            data = self._read_at(offset, nbytes)
        self.stats.add(read_calls=1, bytes_read=len(data))
        return ReadResult(data, nbytes - len(data))

    def write_contig(self, offset: int, data: bytes | bytearray | memoryview) -> int:
        """Write ``data`` at ``offset``, zero-filling any gap past the old end."""
        if offset < 0:
            raise InvalidArgumentError("offset must be non-negative")
        buf = bytes(data)
        with self._mutex:
            self._write_at(offset, buf)
        self.stats.add(write_calls=1, bytes_written=len(buf))
        return len(buf)

    def lock_range(self, offset: int, length: int) -> RangeLock:
        """Block until ``[offset, offset+length)`` is exclusively held."""
        if not self.supports_locking:
            raise LockingUnsupportedError("backend does not support byte-range locks")
        if offset < 0 or length <= 0:
            raise InvalidArgumentError("lock range must be non-negative and non-empty")
        lock = self._locks.acquire(offset, length)
        self.stats.add(lock_acquisitions=1)
        return lock

    def close(self) -> None:  # pragma: no cover - trivial default
        pass

    def __enter__(self) -> "StorageFile":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


class MemoryStorage(StorageFile):
    """Byte store backed by a growable in-memory buffer."""

    def __init__(self, initial: bytes = b"", **kwargs: object):
        super().__init__(**kwargs)  # type: ignore[arg-type]
        self._data = bytearray(initial)

    def _read_at(self, offset: int, nbytes: int) -> bytes:
        return bytes(self._data[offset : offset + nbytes])

    def _write_at(self, offset: int, data: bytes) -> None:
        end = offset + len(data)
        if offset > len(self._data):
            self._data.extend(b"\x00" * (offset - len(self._data)))
        self._data[offset:end] = data

    def _size(self) -> int:
        return len(self._data)

    def contents(self) -> bytes:
        with self._mutex:
            return bytes(self._data)


class FileStorage(StorageFile):
    """Byte store backed by a real file, created on first open if missing."""

    def __init__(self, path: str | os.PathLike[str], **kwargs: object):
        super().__init__(**kwargs)  # type: ignore[arg-type]
        self.path = os.fspath(path)
        try:
            if not os.path.exists(self.path):
                with open(self.path, "wb"):
                    pass
            self._fh = open(self.path, "r+b")
        except OSError as exc:
            raise StorageError(f"cannot open {self.path}: {exc}") from exc

    def _read_at(self, offset: int, nbytes: int) -> bytes:
        try:
            self._fh.seek(offset)
            return self._fh.read(nbytes)
        except OSError as exc:
            raise StorageError(f"read failed at {offset}: {exc}") from exc

    def _write_at(self, offset: int, data: bytes) -> None:
        try:
            self._fh.seek(offset)
            self._fh.write(data)
            self._fh.flush()
        except OSError as exc:
            raise StorageError(f"write failed at {offset}: {exc}") from exc

    def _size(self) -> int:
        return os.fstat(self._fh.fileno()).st_size

    def contents(self) -> bytes:
        with self._mutex:
            self._fh.seek(0)
            return self._fh.read()

    def close(self) -> None:
        try:
            self._fh.close()
        except OSError:  # pragma: no cover - close failures are not actionable
            pass
