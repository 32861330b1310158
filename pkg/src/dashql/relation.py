"""In-memory relations and the catalog.

A Relation is column-major with a typed schema; columns are plain lists
with None for NULL. Relations are immutable after construction by
convention: every operation builds a new one. TIMESTAMP values are
microseconds since the Unix epoch (UTC); INTERVAL values are microsecond
counts.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from typing import Callable, Optional, Sequence

from .parser import TypeTag


class DType(Enum):
    BOOL = "BOOL"
    BIGINT = "BIGINT"
    DOUBLE = "DOUBLE"
    VARCHAR = "VARCHAR"
    TIMESTAMP = "TIMESTAMP"
    INTERVAL = "INTERVAL"


_TYPE_TAG_DTYPE = {
    TypeTag.VARCHAR: DType.VARCHAR,
    TypeTag.INTERVAL: DType.INTERVAL,
    TypeTag.FILE: DType.VARCHAR,
    TypeTag.BIGINT: DType.BIGINT,
    TypeTag.DOUBLE: DType.DOUBLE,
    TypeTag.TIMESTAMP: DType.TIMESTAMP,
    TypeTag.BOOLEAN: DType.BOOL,
}


def dtype_for_tag(tag: TypeTag) -> DType:
    return _TYPE_TAG_DTYPE[tag]


_EPOCH = datetime(1970, 1, 1)


def iso_to_micros(text: str) -> int:
    """Parse an ISO-8601 timestamp (UTC assumed) to epoch microseconds."""
    dt = datetime.fromisoformat(text.strip())
    if dt.tzinfo is not None:
        dt = dt.replace(tzinfo=None) - dt.utcoffset()  # type: ignore[operator]
    delta = dt - _EPOCH
    return delta.days * 86_400_000_000 + delta.seconds * 1_000_000 + delta.microseconds


def micros_to_iso(micros: int) -> str:
    dt = _EPOCH + timedelta(microseconds=micros)
    if micros % 1_000_000:
        return dt.strftime("%Y-%m-%d %H:%M:%S.%f")
    return dt.strftime("%Y-%m-%d %H:%M:%S")


class RelationError(Exception):
    pass


class Relation:
    """Column-major table with a typed schema."""

    def __init__(self, schema: Sequence[tuple[str, DType]], columns: Sequence[list]):
        names = [n for n, _ in schema]
        if len(set(names)) != len(names):
            raise RelationError(f"duplicate column names: {names}")
        if len(columns) != len(schema):
            raise RelationError("schema/column count mismatch")
        lengths = {len(c) for c in columns}
        if len(lengths) > 1:
            raise RelationError("columns must share one length")
        self.schema = list(schema)
        self.columns = [list(c) for c in columns]
        self.row_count = len(columns[0]) if columns else 0
        self._index = {name: i for i, (name, _) in enumerate(schema)}

    @classmethod
    def empty(cls, schema: Sequence[tuple[str, DType]]) -> "Relation":
        return cls(schema, [[] for _ in schema])

    @classmethod
    def from_rows(cls, schema: Sequence[tuple[str, DType]], rows: Sequence[Sequence]) -> "Relation":
        columns: list[list] = [[] for _ in schema]
        for row in rows:
            for i, value in enumerate(row):
                columns[i].append(value)
        return cls(schema, columns)

    def column(self, name: str) -> list:
        return self.columns[self._index[name]]

    def has_column(self, name: str) -> bool:
        return name in self._index

    def dtype(self, name: str) -> DType:
        return self.schema[self._index[name]][1]

    @property
    def column_names(self) -> list[str]:
        return [n for n, _ in self.schema]

    def rows(self) -> list[tuple]:
        return list(zip(*self.columns)) if self.columns else [() for _ in range(self.row_count)]

    def slice(self, offset: int, limit: Optional[int]) -> "Relation":
        stop = None if limit is None else offset + limit
        return Relation(self.schema, [c[offset:stop] for c in self.columns])

    def to_records(self, timestamps_iso: bool = True) -> list[dict]:
        """Row dicts for JSON output; timestamps rendered ISO by default."""
        out = []
        ts_cols = {n for n, t in self.schema if t is DType.TIMESTAMP}
        for row in self.rows():
            rec = {}
            for (name, _), value in zip(self.schema, row):
                if timestamps_iso and name in ts_cols and value is not None:
                    rec[name] = micros_to_iso(value)
                else:
                    rec[name] = value
            out.append(rec)
        return out

    def dump(self) -> str:
        """Deterministic text form used by artifact-equality checks."""
        lines = [";".join(f"{n}:{t.value}" for n, t in self.schema)]
        for row in self.rows():
            lines.append(";".join("\\N" if v is None else repr(v) for v in row))
        return "\n".join(lines)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Relation)
            and self.schema == other.schema
            and self.columns == other.columns
        )

    def __repr__(self) -> str:
        return f"Relation({self.schema}, rows={self.row_count})"


@dataclass
class ViewDef:
    """A stored query; re-evaluated on every read."""

    name: str
    arena: object  # AstArena of the defining script version
    query_root: int
    scan_directives: dict = field(default_factory=dict)


@dataclass
class LazyTable:
    """A relation that is scanned from its source on demand instead of
    being materialized; the loader supplies schema, row count, and the
    scan callback."""

    name: str
    schema: list[tuple[str, DType]]
    scan: Callable  # scan(directive: Optional[ScanDirective]) -> Relation
    row_count: int = 0


class CatalogError(Exception):
    pass


class Catalog:
    """Named tables, views, lazy tables, and input values.

    Reads are safe under concurrency; DDL is serialized by a lock.
    """

    def __init__(self) -> None:
        self.tables: dict[str, Relation] = {}
        self.views: dict[str, ViewDef] = {}
        self.lazy_tables: dict[str, LazyTable] = {}
        self.inputs: dict[str, tuple[TypeTag, object]] = {}
        self._lock = threading.Lock()

    def kind_of(self, name: str) -> Optional[str]:
        if name in self.tables:
            return "table"
        if name in self.views:
            return "view"
        if name in self.lazy_tables:
            return "lazy"
        return None

    def _check_free(self, name: str, replace: bool) -> None:
        if self.kind_of(name) is not None:
            if replace:
                self._drop_locked(name)
            else:
                raise CatalogError(f"name '{name}' already exists")

    def create_table(self, name: str, relation: Relation, replace: bool = False) -> None:
        with self._lock:
            self._check_free(name, replace)
            self.tables[name] = relation

    def create_view(self, view: ViewDef, replace: bool = False) -> None:
        with self._lock:
            self._check_free(view.name, replace)
            self.views[view.name] = view

    def register_lazy(self, lazy: LazyTable, replace: bool = False) -> None:
        with self._lock:
            self._check_free(lazy.name, replace)
            self.lazy_tables[lazy.name] = lazy

    def _drop_locked(self, name: str) -> None:
        if name in self.tables:
            del self.tables[name]
        elif name in self.views:
            del self.views[name]
        elif name in self.lazy_tables:
            del self.lazy_tables[name]
        else:
            raise CatalogError(f"cannot drop unknown name '{name}'")

    def drop(self, name: str) -> None:
        with self._lock:
            self._drop_locked(name)

    def set_input(self, name: str, tag: TypeTag, value: object) -> None:
        self.inputs[name] = (tag, value)

    def input_value(self, name: str) -> object:
        entry = self.inputs.get(name)
        return None if entry is None else entry[1]

    def relation_names(self) -> list[str]:
        return sorted(set(self.tables) | set(self.views) | set(self.lazy_tables))
