"""Exception types shared across the package."""

from __future__ import annotations


class SievioError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(SievioError, ValueError):
    """A constructor or operation was called with arguments that violate its contract."""


class StorageError(SievioError):
    """A backend storage operation failed."""


class RequestBeyondEofError(StorageError):
    """A read asked for bytes the file does not have."""


class LockingUnsupportedError(StorageError):
    """The backend cannot take byte-range locks; the caller must fall back."""


class ProtocolError(SievioError):
    """Rank programs used the fabric inconsistently."""


class CollectiveAbortedError(SievioError):
    """Another rank failed, so this rank's collective call was torn down."""


class DeadlockError(SievioError):
    """Rank tasks stopped making progress."""


class BenchVerificationError(SievioError):
    """A benchmark run produced data that does not match the reference result."""
