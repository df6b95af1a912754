"""Request and response bodies for the benchmark service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from ..bench import PatternSpec


class StatsModel(BaseModel):
    """The nine instrumentation counters, one field each."""

    model_config = ConfigDict(extra="forbid")

    read_calls: int = 0
    write_calls: int = 0
    bytes_read: int = 0
    bytes_written: int = 0
    useful_bytes_read: int = 0
    useful_bytes_written: int = 0
    lock_acquisitions: int = 0
    msgs_sent: int = 0
    msg_bytes: int = 0


class _PatternFields(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pattern: Literal["dist3d", "btio", "unstruc"]
    nprocs: int = Field(default=4, ge=1)
    # zero / empty mean "use the pattern's desk-scale default"
    elem_size: int = Field(default=0, ge=0)
    dims: list[int] = Field(default_factory=list)
    seed: int | None = None


class BenchRequest(_PatternFields):
    levels: list[int] = Field(default_factory=lambda: [0, 2, 3])
    direction: Literal["read", "write", "both"] = "both"
    hints: dict[str, str] = Field(default_factory=dict)
    backend: str = "mem"

    def to_spec(self) -> PatternSpec:
        return PatternSpec(
            pattern=self.pattern,
            nprocs=self.nprocs,
            dims=tuple(self.dims),
            elem_size=self.elem_size,
            seed=self.seed,
            levels=tuple(self.levels),
        )


class TraceRequest(_PatternFields):
    def to_spec(self) -> PatternSpec:
        return PatternSpec(
            pattern=self.pattern,
            nprocs=self.nprocs,
            dims=tuple(self.dims),
            elem_size=self.elem_size,
            seed=self.seed,
        )


class BenchRowModel(BaseModel):
    pattern: str
    nprocs: int
    level: int
    direction: str
    skipped: bool
    seconds: float
    stats: StatsModel


class BenchResponse(BaseModel):
    rows: list[BenchRowModel]


class RankTrace(BaseModel):
    rank: int
    size: int
    extent: int
    segments: list[tuple[int, int]]
    dump: str


class TraceResponse(BaseModel):
    pattern: str
    nprocs: int
    ranks: list[RankTrace]
