"""Noncontiguous file access with data sieving and two-phase collective I/O.

The package is organized as a small stack:

* ``layout``: derived datatypes, flattening, file views, memory layouts.
* ``storage``: instrumented byte storage (memory or a real file) with
  counters and byte-range locks.
* ``fabric``: an in-process rank group with point-to-point and collective
  messaging, used to run multi-rank programs on threads.
* ``sieve``: single-rank noncontiguous access through large contiguous
  windows (read-modify-write for writes).
* ``collective``: two-phase collective read/write over file domains.
* ``files``: the request-level API tying views, hints, and both engines
  together behind one file handle.
* ``bench``: access-pattern generators and the level-comparison driver.
* ``service`` / ``cli``: an HTTP facade and its thin command-line client.
"""

__version__ = "0.1.0"

from .errors import (
    BenchVerificationError,
    CollectiveAbortedError,
    DeadlockError,
    InvalidArgumentError,
    LockingUnsupportedError,
    ProtocolError,
    RequestBeyondEofError,
    SievioError,
    StorageError,
)
from .layout import (
    BYTE,
    COLUMN_MAJOR,
    ROW_MAJOR,
    Datatype,
    FileView,
    FlatRepr,
    MemoryLayout,
    Segment,
    basic,
    block_bounds,
    default_view,
    flatten,
    make_contiguous,
    make_darray_block,
    make_heterogeneous,
    make_indexed,
    make_subarray,
    make_vector,
    merge_segments,
    view_map,
)
from .storage import (
    STAT_FIELDS,
    FileStorage,
    IoStats,
    MemoryStorage,
    ReadResult,
    StorageFile,
)
from .fabric import RankComm, RankGroup, payload_nbytes, run_collective
from .sieve import SieveConfig, plan_windows, sieve_read, sieve_write
from .collective import (
    CollectiveConfig,
    check_interleaved,
    collective_read,
    collective_write,
    compute_file_domains,
)
from .files import OpenFile, RequestLevel, classify_request, open_file
from .bench import BenchRow, PatternSpec, run_bench, trace_pattern

__all__ = [
    "__version__",
    "SievioError",
    "InvalidArgumentError",
    "StorageError",
    "RequestBeyondEofError",
    "LockingUnsupportedError",
    "ProtocolError",
    "CollectiveAbortedError",
    "DeadlockError",
    "BenchVerificationError",
    "Segment",
    "Datatype",
    "FlatRepr",
    "FileView",
    "MemoryLayout",
    "BYTE",
    "ROW_MAJOR",
    "COLUMN_MAJOR",
    "basic",
    "make_contiguous",
    "make_vector",
    "make_indexed",
    "make_heterogeneous",
    "make_subarray",
    "make_darray_block",
    "flatten",
    "merge_segments",
    "block_bounds",
    "default_view",
    "view_map",
    "STAT_FIELDS",
    "IoStats",
    "ReadResult",
    "StorageFile",
    "MemoryStorage",
    "FileStorage",
    "RankGroup",
    "RankComm",
    "run_collective",
    "payload_nbytes",
    "SieveConfig",
    "plan_windows",
    "sieve_read",
    "sieve_write",
    "CollectiveConfig",
    "check_interleaved",
    "collective_read",
    "collective_write",
    "compute_file_domains",
    "OpenFile",
    "open_file",
    "RequestLevel",
    "classify_request",
    "BenchRow",
    "PatternSpec",
    "run_bench",
    "trace_pattern",
]
