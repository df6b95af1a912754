"""Command-line client.

`bench` talks to the HTTP service; without --server the service runs
in-process over an in-memory transport, so the command works standalone.
`sievio-serve` starts the same app under uvicorn for remote use.
"""

from __future__ import annotations

import argparse
import asyncio
import csv
import io
import json
import sys

import httpx

from .storage import STAT_FIELDS

_ROW_COLUMNS = ("pattern", "nprocs", "level", "direction", "skipped", "seconds")


def _parse_dims(text: str) -> list[int]:
    try:
        return [int(part) for part in text.lower().split("x")]
    except ValueError:
        raise SystemExit(f"bad --dims {text!r}; expected AxBxC") from None


def _parse_levels(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise SystemExit(f"bad --levels {text!r}; expected a comma list like 0,2,3") from None


def _parse_hints(pairs: list[str]) -> dict[str, str]:
    hints: dict[str, str] = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise SystemExit(f"bad --hint {pair!r}; expected key=value")
        hints[key] = value
    return hints


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="bench",
        description="Run noncontiguous-access benchmarks at request levels 0-3.",
    )
    ap.add_argument("--pattern", required=True, choices=["dist3d", "btio", "unstruc"])
    ap.add_argument("--nprocs", type=int, default=4)
    ap.add_argument("--levels", default="0,2,3", help="comma list of levels, e.g. 0,2,3")
    ap.add_argument("--dir", dest="direction", default="both", choices=["read", "write", "both"])
    ap.add_argument("--elem-size", type=int, default=0, help="element size in bytes (0 = pattern default)")
    ap.add_argument("--dims", default="", help="global dims as AxBxC (empty = pattern default)")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--hint", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--backend", default="mem", help="mem or file:PATH")
    fmt = ap.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true", help="emit rows as a JSON array")
    fmt.add_argument("--csv", action="store_true", help="emit rows as CSV")
    ap.add_argument("--trace", action="store_true", help="dump per-rank flattened layouts instead of running")
    ap.add_argument("--server", default=None, metavar="URL", help="use a running service instead of in-process")
    return ap


async def _post(server: str | None, path: str, payload: dict) -> dict:
    timeout = httpx.Timeout(600.0)
    if server is None:
        from .service.app import app

        transport = httpx.ASGITransport(app=app)
        client = httpx.AsyncClient(transport=transport, base_url="http://bench.internal", timeout=timeout)
    else:
        client = httpx.AsyncClient(base_url=server, timeout=timeout)
    async with client:
        resp = await client.post(path, json=payload)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise SystemExit(f"request failed ({resp.status_code}): {detail}")
    return resp.json()


def _format_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


def _emit_bench(data: dict, as_json: bool, as_csv: bool) -> None:
    rows = data["rows"]
    if as_json:
        print(json.dumps(rows, indent=2))
        return
    headers = list(_ROW_COLUMNS) + list(STAT_FIELDS)
    flat = []
    for row in rows:
        cells = [str(row[k]) if k != "seconds" else f"{row[k]:.6f}" for k in _ROW_COLUMNS]
        cells += [str(row["stats"][k]) for k in STAT_FIELDS]
        flat.append(cells)
    if as_csv:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(headers)
        writer.writerows(flat)
        sys.stdout.write(buf.getvalue())
        return
    print(_format_table(headers, flat))


def _emit_trace(data: dict, as_json: bool, as_csv: bool) -> None:
    if as_json:
        print(json.dumps(data["ranks"], indent=2))
        return
    if as_csv:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["rank", "offset", "length"])
        for entry in data["ranks"]:
            for off, ln in entry["segments"]:
                writer.writerow([entry["rank"], off, ln])
        sys.stdout.write(buf.getvalue())
        return
    for entry in data["ranks"]:
        print(f"rank {entry['rank']} size {entry['size']} extent {entry['extent']}")
        print(entry["dump"])


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    payload: dict = {
        "pattern": args.pattern,
        "nprocs": args.nprocs,
        "elem_size": max(args.elem_size, 0),
        "dims": _parse_dims(args.dims) if args.dims else [],
        "seed": args.seed,
    }
    if args.trace:
        data = asyncio.run(_post(args.server, "/trace", payload))
        _emit_trace(data, args.json, args.csv)
        return 0
    payload.update(
        {
            "levels": _parse_levels(args.levels),
            "direction": args.direction,
            "hints": _parse_hints(args.hint),
            "backend": args.backend,
        }
    )
    data = asyncio.run(_post(args.server, "/bench", payload))
    _emit_bench(data, args.json, args.csv)
    return 0


def serve_main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="sievio-serve", description="Serve the benchmark API.")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8000)
    args = ap.parse_args(argv)
    import uvicorn

    uvicorn.run("sievio.service.app:app", host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
