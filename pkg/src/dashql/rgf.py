"""RGF: a row-group columnar file format with per-group statistics.

Layout (all little-endian):

    "RGF1"                      head magic
    column chunks               per row group, columns in schema order
    footer JSON (utf-8)
    u32 footer length
    "RGF1"                      tail magic

A chunk is a null bitmap (bit set = NULL, LSB first) followed by plain
values: int64 for BIGINT/TIMESTAMP/INTERVAL, float64 for DOUBLE, u8 for
BOOL, and u32-length-prefixed UTF-8 for VARCHAR. The footer records, per
row group and column, the chunk byte range plus exact min/max/null_count,
which is what predicate skipping evaluates. Timestamps appear in the
footer as epoch microseconds.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .executor import ScanDirective
from .relation import DType, Relation

MAGIC = b"RGF1"


class RgfError(Exception):
    pass


@dataclass
class ColumnStats:
    byte_offset: int
    byte_len: int
    min: object
    max: object
    null_count: int


@dataclass
class RowGroup:
    row_offset: int
    row_count: int
    columns: dict[str, ColumnStats]


@dataclass
class RgfFooter:
    schema: list[tuple[str, DType]]
    row_groups: list[RowGroup]

    @property
    def row_count(self) -> int:
        return sum(g.row_count for g in self.row_groups)


# -- encoding -------------------------------------------------------------------


def _encode_chunk(dtype: DType, values: list) -> tuple[bytes, object, object, int]:
    n = len(values)
    bitmap = bytearray(math.ceil(n / 8))
    non_null = []
    for i, v in enumerate(values):
        if v is None:
            bitmap[i // 8] |= 1 << (i % 8)
        else:
            non_null.append(v)
    out = bytearray(bitmap)
    if dtype in (DType.BIGINT, DType.TIMESTAMP, DType.INTERVAL):
        out += struct.pack(f"<{n}q", *((0 if v is None else v) for v in values))
    elif dtype is DType.DOUBLE:
        out += struct.pack(f"<{n}d", *((0.0 if v is None else float(v)) for v in values))
    elif dtype is DType.BOOL:
        out += struct.pack(f"<{n}B", *((0 if not v else 1) for v in values))
    elif dtype is DType.VARCHAR:
        for v in values:
            data = b"" if v is None else str(v).encode("utf-8")
            out += struct.pack("<I", len(data)) + data
    else:
        raise RgfError(f"unsupported column type {dtype}")
    lo = min(non_null) if non_null else None
    hi = max(non_null) if non_null else None
    return bytes(out), lo, hi, n - len(non_null)


def write_rgf(relation: Relation, row_group_size: int = 1000) -> bytes:
    """Serialize a relation; row groups partition rows contiguously."""
    if row_group_size < 1:
        raise RgfError("row group size must be positive")
    body = bytearray(MAGIC)
    groups: list[dict] = []
    for start in range(0, relation.row_count, row_group_size):
        count = min(row_group_size, relation.row_count - start)
        columns: dict[str, dict] = {}
        for (name, dtype), column in zip(relation.schema, relation.columns):
            chunk, lo, hi, nulls = _encode_chunk(dtype, column[start : start + count])
            columns[name] = {
                "byte_offset": len(body),
                "byte_len": len(chunk),
                "min": lo,
                "max": hi,
                "null_count": nulls,
            }
            body += chunk
        groups.append({"row_offset": start, "row_count": count, "columns": columns})
    footer = {
        "schema": [[name, dtype.value] for name, dtype in relation.schema],
        "row_groups": groups,
    }
    footer_bytes = json.dumps(footer, separators=(",", ":")).encode("utf-8")
    body += footer_bytes
    body += struct.pack("<I", len(footer_bytes))
    body += MAGIC
    return bytes(body)


# -- decoding -------------------------------------------------------------------


def _decode_chunk(dtype: DType, data: bytes, n: int) -> list:
    bitmap_len = math.ceil(n / 8)
    bitmap = data[:bitmap_len]
    payload = data[bitmap_len:]
    nulls = [bool(bitmap[i // 8] & (1 << (i % 8))) for i in range(n)]
    if dtype in (DType.BIGINT, DType.TIMESTAMP, DType.INTERVAL):
        raw = np.frombuffer(payload, dtype="<i8", count=n).tolist()
        return [None if nulls[i] else raw[i] for i in range(n)]
    if dtype is DType.DOUBLE:
        raw = np.frombuffer(payload, dtype="<f8", count=n).tolist()
        return [None if nulls[i] else raw[i] for i in range(n)]
    if dtype is DType.BOOL:
        raw = np.frombuffer(payload, dtype="<u1", count=n).tolist()
        return [None if nulls[i] else bool(raw[i]) for i in range(n)]
    if dtype is DType.VARCHAR:
        values = []
        pos = 0
        for i in range(n):
            (length,) = struct.unpack_from("<I", payload, pos)
            pos += 4
            text = payload[pos : pos + length].decode("utf-8")
            pos += length
            values.append(None if nulls[i] else text)
        return values
    raise RgfError(f"unsupported column type {dtype}")


def read_footer(read: Callable[[int, int], bytes], size: int) -> RgfFooter:
    """Parse the footer using two tail range reads."""
    if size < 12:
        raise RgfError("file too small to be RGF")
    tail = read(size - 8, 8)
    if len(tail) != 8:
        raise RgfError("truncated tail")
    (footer_len,) = struct.unpack("<I", tail[:4])
    if tail[4:] != MAGIC:
        raise RgfError("bad tail magic")
    if footer_len + 12 > size:
        raise RgfError("corrupt footer length")
    footer_bytes = read(size - 8 - footer_len, footer_len)
    try:
        doc = json.loads(footer_bytes.decode("utf-8"))
    except ValueError as err:
        raise RgfError(f"corrupt footer: {err}") from err
    schema = [(name, DType(value)) for name, value in doc["schema"]]
    groups = [
        RowGroup(
            row_offset=g["row_offset"],
            row_count=g["row_count"],
            columns={
                name: ColumnStats(
                    byte_offset=c["byte_offset"],
                    byte_len=c["byte_len"],
                    min=c["min"],
                    max=c["max"],
                    null_count=c["null_count"],
                )
                for name, c in g["columns"].items()
            },
        )
        for g in doc["row_groups"]
    ]
    return RgfFooter(schema=schema, row_groups=groups)


def _group_may_match(group: RowGroup, column: str, op: str, value) -> bool:
    stats = group.columns.get(column)
    if stats is None:
        return True  # unknown to the file: cannot skip soundly
    lo, hi = stats.min, stats.max
    if lo is None or hi is None:
        return False  # all-null chunk never satisfies a comparison
    if op == ">":
        return hi > value
    if op == ">=":
        return hi >= value
    if op == "<":
        return lo < value
    if op == "<=":
        return lo <= value
    if op == "=":
        return lo <= value <= hi
    if op == "!=":
        return not (lo == hi == value)
    return True


class RgfScanner:
    """Footer-driven partial scans over one RGF source.

    Chunks are cached, so a readahead group costs bytes once and later
    sequential pages are served without new reads.
    """

    def __init__(self, read: Callable[[int, int], bytes], size: int, footer: Optional[RgfFooter] = None):
        self._read = read
        self._size = size
        self.footer = footer or read_footer(read, size)
        self._chunks: dict[tuple[int, str], list] = {}

    @property
    def schema(self) -> list[tuple[str, DType]]:
        return list(self.footer.schema)

    def _column_values(self, group_idx: int, name: str) -> list:
        key = (group_idx, name)
        cached = self._chunks.get(key)
        if cached is not None:
            return cached
        group = self.footer.row_groups[group_idx]
        stats = group.columns[name]
        dtype = dict(self.footer.schema)[name]
        data = self._read(stats.byte_offset, stats.byte_len)
        values = _decode_chunk(dtype, data, group.row_count)
        self._chunks[key] = values
        return values

    def scan(self, directive: Optional[ScanDirective] = None) -> Relation:
        directive = directive or ScanDirective()
        schema_cols = [name for name, _ in self.footer.schema]
        if directive.projection is None:
            projection = schema_cols
        else:
            projection = [c for c in schema_cols if c in set(directive.projection)]
        predicates = [
            (col, op, value)
            for col, op, value in directive.predicates
            if col in set(schema_cols)
        ]
        if any(value is None for _, _, value in predicates):
            return Relation.empty([(n, t) for n, t in self.footer.schema if n in set(projection)])

        groups = list(range(len(self.footer.row_groups)))
        for col, op, value in predicates:
            groups = [
                g for g in groups if _group_may_match(self.footer.row_groups[g], col, op, value)
            ]

        window = None
        if not predicates and (directive.limit is not None or directive.offset):
            offset = directive.offset or 0
            end = None if directive.limit is None else offset + directive.limit
            window = (offset, end)
            groups = [
                g
                for g in groups
                if self._covers(self.footer.row_groups[g], offset, end)
            ]
            if directive.readahead and groups:
                last = groups[-1]
                extra = [g for g in range(last + 1, min(last + 1 + directive.readahead, len(self.footer.row_groups)))]
                for g in extra:
                    for name in projection:
                        self._column_values(g, name)

        # Columns needed to evaluate predicates are read even when not projected.
        needed = list(dict.fromkeys(projection + [c for c, _, _ in predicates]))
        out_schema = [(n, t) for n, t in self.footer.schema if n in set(projection)]
        columns: dict[str, list] = {name: [] for name in needed}
        positions: list[int] = []
        for g in groups:
            group = self.footer.row_groups[g]
            data = {name: self._column_values(g, name) for name in needed}
            for i in range(group.row_count):
                keep = True
                for col, op, value in predicates:
                    cell = data[col][i]
                    if cell is None or not _cmp(cell, op, value):
                        keep = False
                        break
                if keep:
                    for name in needed:
                        columns[name].append(data[name][i])
                    positions.append(group.row_offset + i)
        if window is not None:
            lo, hi = window
            keep_idx = [i for i, pos in enumerate(positions) if pos >= lo and (hi is None or pos < hi)]
            for name in needed:
                columns[name] = [columns[name][i] for i in keep_idx]
        elif predicates and (directive.limit is not None or directive.offset):
            offset = directive.offset or 0
            stop = None if directive.limit is None else offset + directive.limit
            for name in needed:
                columns[name] = columns[name][offset:stop]
        return Relation(out_schema, [columns[name] for name, _ in out_schema])

    @staticmethod
    def _covers(group: RowGroup, offset: int, end: Optional[int]) -> bool:
        group_end = group.row_offset + group.row_count
        if group_end <= offset:
            return False
        if end is not None and group.row_offset >= end:
            return False
        return True


def _cmp(cell, op: str, value) -> bool:
    if isinstance(cell, bool) and not isinstance(value, bool):
        return False
    if op == ">":
        return cell > value
    if op == ">=":
        return cell >= value
    if op == "<":
        return cell < value
    if op == "<=":
        return cell <= value
    if op == "=":
        return cell == value
    if op == "!=":
        return cell != value
    raise RgfError(f"unsupported predicate op {op}")


def scan_rgf(
    read: Callable[[int, int], bytes],
    size: int,
    projection: Optional[list[str]] = None,
    predicates: Optional[list[tuple[str, str, object]]] = None,
    limit: Optional[int] = None,
    offset: Optional[int] = None,
    readahead: int = 0,
) -> Relation:
    """One-shot scan; see RgfScanner for the cached variant."""
    scanner = RgfScanner(read, size)
    return scanner.scan(
        ScanDirective(
            projection=projection,
            predicates=predicates or [],
            limit=limit,
            offset=offset,
            readahead=readahead,
        )
    )


def stats_report(footer: RgfFooter) -> dict:
    """Footer summary for the CLI."""
    return {
        "schema": [[n, t.value] for n, t in footer.schema],
        "row_count": footer.row_count,
        "row_groups": [
            {
                "row_offset": g.row_offset,
                "row_count": g.row_count,
                "columns": {
                    name: {
                        "byte_offset": s.byte_offset,
                        "byte_len": s.byte_len,
                        "min": s.min,
                        "max": s.max,
                        "null_count": s.null_count,
                    }
                    for name, s in g.columns.items()
                },
            }
            for g in footer.row_groups
        ],
    }
