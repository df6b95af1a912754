"""FastAPI facade over the benchmark driver.

POST /bench runs a pattern at the requested levels and returns verified rows;
POST /trace returns per-rank flattened layouts without touching storage.
Argument problems surface as 400s, not 500s.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..bench import PatternSpec, feasible_levels, run_bench, trace_pattern
from ..bench.patterns import PATTERNS
from ..errors import InvalidArgumentError
from .models import (
    BenchRequest,
    BenchResponse,
    BenchRowModel,
    RankTrace,
    TraceRequest,
    TraceResponse,
)

app = FastAPI(title="sievio benchmark service", version=__version__)


@app.exception_handler(InvalidArgumentError)
def _bad_request(_request: Request, exc: InvalidArgumentError) -> JSONResponse:
    return JSONResponse(status_code=400, content={"detail": str(exc)})


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.get("/patterns")
def patterns() -> dict:
    out = []
    for name in PATTERNS:
        spec = PatternSpec(name, 4)
        out.append(
            {
                "name": name,
                "default_dims": list(spec.dims),
                "default_elem_size": spec.elem_size,
                "levels": list(feasible_levels(spec)),
            }
        )
    return {"patterns": out}


@app.post("/bench", response_model=BenchResponse)
def bench(req: BenchRequest) -> BenchResponse:
    rows = run_bench(
        req.to_spec(),
        hints=req.hints or None,
        backend=req.backend,
        direction=req.direction,
    )
    return BenchResponse(rows=[BenchRowModel(**row.as_dict()) for row in rows])


@app.post("/trace", response_model=TraceResponse)
def trace(req: TraceRequest) -> TraceResponse:
    spec = req.to_spec()
    ranks = [
        RankTrace(
            rank=r,
            size=flat.size,
            extent=flat.extent,
            segments=list(flat.segments),
            dump=flat.dump(),
        )
        for r, flat in enumerate(trace_pattern(spec))
    ]
    return TraceResponse(pattern=spec.pattern, nprocs=spec.nprocs, ranks=ranks)
