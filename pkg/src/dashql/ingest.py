"""Data retrieval and loading.

FETCH sources resolve to range-capable readers over file://, http(s)://,
and test:// (a fixtures directory addressed like a remote source). Every
byte range that is actually read lands in a ReadLedger, which is how the
pushdown tests account for traffic. CSV and JSON loaders build typed
relations; JSON documents in neither of the two supported shapes go
through registered transform hooks first.
"""

from __future__ import annotations

import csv
import io
import json
import os
import re
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from functools import partial
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional

from .analyzer import KeyValueList
from .parser import SchemeTag
from .relation import DType, Relation, iso_to_micros


class IngestError(Exception):
    pass


# -- sources ------------------------------------------------------------------


@dataclass(frozen=True)
class FetchSource:
    scheme: str  # file | http | https | test | s3
    uri: str
    method: str = "GET"
    headers: tuple[tuple[str, str], ...] = ()

    @property
    def key(self) -> str:
        return self.uri


_SCHEME_TAG_NAME = {
    SchemeTag.HTTP: "http",
    SchemeTag.HTTPS: "https",
    SchemeTag.FILE: "file",
    SchemeTag.TEST: "test",
}


def parse_source(
    uri: Optional[str], scheme: Optional[SchemeTag] = None, settings: Optional[KeyValueList] = None
) -> FetchSource:
    """Build a FetchSource from the simple URI form or the explicit keyword
    form with settings (url, method, header.*)."""
    settings = settings or KeyValueList()
    if scheme is not None:
        url = settings.get("url") or uri
        if not isinstance(url, str):
            raise IngestError("explicit fetch form needs a 'url' setting")
        method = settings.get("method", "GET")
        headers = tuple(
            (key.split(".", 1)[1], str(value))
            for key, value in settings.flatten().items()
            if key.startswith("header.")
        )
        return FetchSource(_SCHEME_TAG_NAME[scheme], url, str(method).upper(), headers)
    if uri is None:
        raise IngestError("fetch statement carries no source")
    match = re.match(r"^([a-zA-Z][a-zA-Z0-9+.-]*)://", uri)
    if match:
        return FetchSource(match.group(1).lower(), uri)
    return FetchSource("file", uri)


# -- read accounting ------------------------------------------------------------


class ReadLedger:
    """Append-only record of (offset, length) reads per source."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.requests: dict[str, list[tuple[int, int]]] = {}

    def record(self, source: str, offset: int, length: int) -> None:
        with self._lock:
            self.requests.setdefault(source, []).append((offset, length))

    def ranges(self, source: str) -> list[tuple[int, int]]:
        with self._lock:
            return list(self.requests.get(source, []))

    def total_bytes(self, source: Optional[str] = None) -> int:
        with self._lock:
            if source is not None:
                return sum(length for _, length in self.requests.get(source, []))
            return sum(length for ranges in self.requests.values() for _, length in ranges)

    def reset(self) -> None:
        with self._lock:
            self.requests.clear()


# -- range readers ----------------------------------------------------------------


class RangeReader:
    """Byte-range access to one source; every read is ledgered."""

    def __init__(self, source: FetchSource, ledger: ReadLedger):
        self.source = source
        self.ledger = ledger

    def size(self) -> int:
        raise NotImplementedError

    def read(self, offset: int, length: int) -> bytes:
        raise NotImplementedError

    def read_all(self) -> bytes:
        return self.read(0, self.size())


class FileRangeReader(RangeReader):
    def __init__(self, source: FetchSource, ledger: ReadLedger, path: str):
        super().__init__(source, ledger)
        self.path = path
        if not os.path.exists(path):
            raise IngestError(f"no such file: {path}")

    def size(self) -> int:
        return os.path.getsize(self.path)

    def read(self, offset: int, length: int) -> bytes:
        size = self.size()
        if offset > size:
            raise IngestError(f"range [{offset}, {offset + length}) beyond end of {self.path}")
        with open(self.path, "rb") as fh:
            fh.seek(offset)
            data = fh.read(length)
        self.ledger.record(self.source.key, offset, len(data))
        return data


class HttpRangeReader(RangeReader):
    """HTTP reader using Range requests; falls back to one full-body read
    (recorded at full length) when the server ignores ranges."""

    def __init__(self, source: FetchSource, ledger: ReadLedger):
        super().__init__(source, ledger)
        self._size: Optional[int] = None
        self._full_body: Optional[bytes] = None

    def _request(self, range_header: Optional[str] = None, method: Optional[str] = None):
        req = urllib.request.Request(self.source.uri, method=method or self.source.method)
        for name, value in self.source.headers:
            req.add_header(name, value)
        if range_header:
            req.add_header("Range", range_header)
        return urllib.request.urlopen(req, timeout=30)

    def size(self) -> int:
        if self._size is None:
            try:
                with self._request(method="HEAD") as resp:
                    length = resp.headers.get("Content-Length")
                    if length is None:
                        raise IngestError(f"no Content-Length from {self.source.uri}")
                    self._size = int(length)
            except urllib.error.URLError as err:
                raise IngestError(f"fetch failed for {self.source.uri}: {err}") from err
        return self._size

    def read(self, offset: int, length: int) -> bytes:
        if self._full_body is not None:
            return self._full_body[offset : offset + length]
        try:
            with self._request(range_header=f"bytes={offset}-{offset + length - 1}") as resp:
                body = resp.read()
                if resp.status == 206:
                    self.ledger.record(self.source.key, offset, len(body))
                    return body
                # Server ignored the range: degrade to a single full read.
                self._full_body = body
                self._size = len(body)
                self.ledger.record(self.source.key, 0, len(body))
                return body[offset : offset + length]
        except urllib.error.URLError as err:
            raise IngestError(f"fetch failed for {self.source.uri}: {err}") from err


class TestRangeReader(FileRangeReader):
    """test://name resolves inside a fixtures directory with honest range
    semantics, so ledger tests don't need sockets."""

    def __init__(self, source: FetchSource, ledger: ReadLedger, fixtures_dir: str):
        rel = source.uri[len("test://") :]
        path = os.path.normpath(os.path.join(fixtures_dir, rel))
        if not path.startswith(os.path.normpath(fixtures_dir)):
            raise IngestError(f"test source escapes the fixtures dir: {source.uri}")
        super().__init__(source, ledger, path)


def open_reader(source: FetchSource, ledger: ReadLedger, fixtures_dir: Optional[str] = None) -> RangeReader:
    if source.scheme == "file":
        path = source.uri[len("file://") :] if source.uri.startswith("file://") else source.uri
        return FileRangeReader(source, ledger, path)
    if source.scheme in ("http", "https"):
        return HttpRangeReader(source, ledger)
    if source.scheme == "test":
        if fixtures_dir is None:
            raise IngestError("test:// sources need a fixtures directory")
        return TestRangeReader(source, ledger, fixtures_dir)
    raise IngestError(f"scheme '{source.scheme}' is declared but not fetchable here")


def fetch(
    source: FetchSource,
    ledger: ReadLedger,
    byte_range: Optional[tuple[int, int]] = None,
    fixtures_dir: Optional[str] = None,
) -> bytes:
    """One-shot fetch of a full source or a byte range."""
    reader = open_reader(source, ledger, fixtures_dir)
    if byte_range is None:
        return reader.read_all()
    offset, length = byte_range
    return reader.read(offset, length)


# -- fixture HTTP server ------------------------------------------------------------


class _FixtureHandler(BaseHTTPRequestHandler):
    directory: str = "."
    honor_ranges: bool = True

    def log_message(self, *args) -> None:  # tests stay quiet
        pass

    def _resolve(self) -> Optional[str]:
        rel = self.path.lstrip("/").split("?", 1)[0]
        path = os.path.normpath(os.path.join(self.directory, rel))
        if not path.startswith(os.path.normpath(self.directory)) or not os.path.isfile(path):
            return None
        return path

    def do_HEAD(self) -> None:
        path = self._resolve()
        if path is None:
            self.send_error(404)
            return
        self.send_response(200)
        self.send_header("Content-Length", str(os.path.getsize(path)))
        self.send_header("Accept-Ranges", "bytes")
        self.end_headers()

    def do_GET(self) -> None:
        path = self._resolve()
        if path is None:
            self.send_error(404)
            return
        size = os.path.getsize(path)
        range_header = self.headers.get("Range")
        if range_header and self.honor_ranges:
            match = re.match(r"bytes=(\d+)-(\d*)$", range_header.strip())
            if not match:
                self.send_error(416)
                return
            start = int(match.group(1))
            end = int(match.group(2)) if match.group(2) else size - 1
            if start >= size:
                self.send_error(416)
                return
            end = min(end, size - 1)
            with open(path, "rb") as fh:
                fh.seek(start)
                body = fh.read(end - start + 1)
            self.send_response(206)
            self.send_header("Content-Range", f"bytes {start}-{end}/{size}")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return
        with open(path, "rb") as fh:
            body = fh.read()
        self.send_response(200)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class FixtureServer:
    """Localhost HTTP server over a fixtures directory, with Range support
    (switchable off to exercise the degradation path)."""

    def __init__(self, directory: str, honor_ranges: bool = True):
        handler = type(
            "BoundFixtureHandler",
            (_FixtureHandler,),
            {"directory": directory, "honor_ranges": honor_ranges},
        )
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    def url(self, name: str) -> str:
        return f"http://127.0.0.1:{self.port}/{name}"

    def start(self) -> "FixtureServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "FixtureServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


# -- CSV ---------------------------------------------------------------------------


_TYPE_ORDER = [DType.BIGINT, DType.DOUBLE, DType.TIMESTAMP, DType.VARCHAR]


def _parse_cell(text: str, dtype: DType):
    if text == "":
        return None
    if dtype is DType.BIGINT:
        return int(text)
    if dtype is DType.DOUBLE:
        return float(text)
    if dtype is DType.TIMESTAMP:
        return iso_to_micros(text)
    if dtype is DType.BOOL:
        lowered = text.lower()
        if lowered in ("true", "t", "1"):
            return True
        if lowered in ("false", "f", "0"):
            return False
        raise ValueError(text)
    return text


def _infer_column_type(values: list[str]) -> DType:
    """BIGINT, then DOUBLE, then ISO TIMESTAMP, then VARCHAR."""
    for dtype in _TYPE_ORDER:
        if dtype is DType.VARCHAR:
            return dtype
        ok = True
        for text in values:
            if text == "":
                continue
            try:
                _parse_cell(text, dtype)
            except ValueError:
                ok = False
                break
        if ok:
            return dtype
    return DType.VARCHAR


def load_csv(data: bytes, settings: Optional[KeyValueList] = None) -> Relation:
    """CSV to a typed relation; settings may override delimiter, header,
    and per-column types (types.<name> = 'BIGINT' ...)."""
    settings = settings or KeyValueList()
    delimiter = str(settings.get("delimiter", ","))
    has_header = settings.get("header", True)
    text = data.decode("utf-8-sig")
    rows = list(csv.reader(io.StringIO(text), delimiter=delimiter))
    rows = [r for r in rows if r]
    if not rows:
        return Relation([], [])
    if has_header:
        names = [name.strip() for name in rows[0]]
        body = rows[1:]
    else:
        names = [f"column{i}" for i in range(len(rows[0]))]
        body = rows
    width = len(names)
    for i, row in enumerate(body):
        if len(row) != width:
            raise IngestError(f"ragged CSV row {i + (2 if has_header else 1)}: {len(row)} fields, expected {width}")

    overrides = settings.get("types")
    schema: list[tuple[str, DType]] = []
    columns: list[list] = []
    for col_idx, name in enumerate(names):
        raw = [row[col_idx].strip() for row in body]
        dtype = None
        if isinstance(overrides, KeyValueList):
            declared = overrides.get(name.lower())
            if isinstance(declared, str):
                dtype = DType(declared.upper())
        if dtype is None:
            dtype = _infer_column_type(raw)
        try:
            columns.append([_parse_cell(cell, dtype) for cell in raw])
        except ValueError as err:
            raise IngestError(f"column '{name}' cannot be read as {dtype.value}: {err}") from err
        schema.append((name, dtype))
    return Relation(schema, columns)


# -- JSON ----------------------------------------------------------------------------

# A transform hook inspects the expression string from the "jmespath"
# setting; the first hook that recognizes it rewrites the document before
# shape detection. The default build only knows the two forms below.
TransformHook = Callable[[str, object], Optional[object]]

_PIVOT_RE = re.compile(
    r"^\{\s*(?P<fields>[a-zA-Z_][\w]*\s*:\s*(keys|values)\(@(?:\.[\w]+)+\)\s*(?:,\s*[a-zA-Z_][\w]*\s*:\s*(keys|values)\(@(?:\.[\w]+)+\)\s*)*),?\s*\}$"
)
_PIVOT_FIELD_RE = re.compile(r"([a-zA-Z_][\w]*)\s*:\s*(keys|values)\(@((?:\.[\w]+)+)\)")
_RENAME_RE = re.compile(
    r"^@((?:\.[\w]+)+)\[\*\]\s*\.\s*\{(?P<fields>[^{}]*)\}$"
)
_RENAME_FIELD_RE = re.compile(r"([a-zA-Z_][\w]*)\s*:\s*@\.([\w]+)")


def _walk_path(doc: object, path: str) -> object:
    cursor = doc
    for part in path.strip(".").split("."):
        if not isinstance(cursor, dict) or part not in cursor:
            raise IngestError(f"path '{path}' not found in JSON document")
        cursor = cursor[part]
    return cursor


def pivot_transform(expr: str, doc: object) -> Optional[object]:
    """`{ a: keys(@.p), b: values(@.p) }`: pivot one object's keys and
    values into column arrays."""
    normalized = " ".join(expr.split())
    if not _PIVOT_RE.match(normalized):
        return None
    out: dict[str, list] = {}
    for name, func, path in _PIVOT_FIELD_RE.findall(normalized):
        obj = _walk_path(doc, path)
        if not isinstance(obj, dict):
            raise IngestError(f"pivot path '{path}' is not an object")
        out[name] = list(obj.keys()) if func == "keys" else list(obj.values())
    return out


def rename_transform(expr: str, doc: object) -> Optional[object]:
    """`@.p[*].{ a: @.x, b: @.y }`: project an array of objects onto
    renamed fields."""
    normalized = " ".join(expr.split())
    match = _RENAME_RE.match(normalized)
    if not match:
        return None
    array = _walk_path(doc, match.group(1))
    if not isinstance(array, list):
        raise IngestError(f"rename path '{match.group(1)}' is not an array")
    fields = _RENAME_FIELD_RE.findall(match.group("fields"))
    if not fields:
        raise IngestError("rename transform lists no fields")
    out = []
    for item in array:
        if not isinstance(item, dict):
            raise IngestError("rename transform needs an array of objects")
        out.append({name: item.get(src) for name, src in fields})
    return out


DEFAULT_TRANSFORMS: list[TransformHook] = [pivot_transform, rename_transform]


def _infer_json_value(values: list) -> tuple[DType, list]:
    non_null = [v for v in values if v is not None]
    if non_null and all(isinstance(v, bool) for v in non_null):
        return DType.BOOL, values
    if non_null and all(isinstance(v, int) and not isinstance(v, bool) for v in non_null):
        return DType.BIGINT, values
    if non_null and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in non_null):
        return DType.DOUBLE, [None if v is None else float(v) for v in values]
    out = [None if v is None else (v if isinstance(v, str) else json.dumps(v)) for v in values]
    return DType.VARCHAR, out


def load_json(
    data: bytes,
    settings: Optional[KeyValueList] = None,
    transforms: Optional[list[TransformHook]] = None,
) -> Relation:
    """JSON to a relation: top-level array of objects (row-major) or
    top-level object of column arrays (column-major), auto-detected. A
    "jmespath" setting routes the document through the transform hooks
    first; an expression no hook recognizes is an error."""
    settings = settings or KeyValueList()
    transforms = DEFAULT_TRANSFORMS if transforms is None else transforms
    try:
        doc = json.loads(data.decode("utf-8"))
    except ValueError as err:
        raise IngestError(f"invalid JSON: {err}") from err

    expr = settings.get("jmespath")
    if isinstance(expr, str):
        for hook in transforms:
            result = hook(expr, doc)
            if result is not None:
                doc = result
                break
        else:
            raise IngestError(f"no transform hook accepts the expression: {expr!r}")

    if isinstance(doc, list):
        if not doc:
            return Relation([], [])
        if not all(isinstance(item, dict) for item in doc):
            raise IngestError("row-major JSON must be an array of objects")
        names = list(doc[0].keys())
        raw_columns = [[item.get(name) for item in doc] for name in names]
    elif isinstance(doc, dict):
        if not all(isinstance(v, list) for v in doc.values()):
            raise IngestError(
                "JSON must be an array of objects or an object of column arrays"
            )
        names = list(doc.keys())
        raw_columns = [doc[name] for name in names]
        lengths = {len(c) for c in raw_columns}
        if len(lengths) > 1:
            raise IngestError("column arrays differ in length")
    else:
        raise IngestError("unsupported JSON document shape")

    schema: list[tuple[str, DType]] = []
    columns: list[list] = []
    for name, raw in zip(names, raw_columns):
        dtype, values = _infer_json_value(raw)
        schema.append((name, dtype))
        columns.append(values)
    return Relation(schema, columns)
