"""Chart specification completion.

Short VISUALIZE forms lower to full specifications using query metadata:
column aliases and order pick the encoding channels, column types pick the
encoding types, and min/max/distinct queries fill the scale domains.
Verbose forms pass through with only missing domains computed. Inferred
keys are tracked so user-set values are never overwritten, and a lowered
spec can be expanded back into verbose statement text.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .analyzer import KeyValueList, VizInfo, analyze
from .executor import EvalContext, ExecError, eval_select, resolve_relation
from .parser import VizKind, parse_script
from .relation import DType, Relation, micros_to_iso


class VizError(Exception):
    pass


_CHANNELS = {
    VizKind.TABLE: [],
    VizKind.LINE: ["x", "y"],
    VizKind.BAR: ["x", "y"],
    VizKind.AREA: ["x", "y"],
    VizKind.SCATTER: ["x", "y"],
    VizKind.MULTI_LINE: ["x", "y", "color"],
    VizKind.STACKED_BAR: ["x", "y", "color"],
    VizKind.STACKED_AREA: ["x", "y", "color"],
}

_MARKS = {
    VizKind.LINE: "line",
    VizKind.MULTI_LINE: "line",
    VizKind.BAR: "bar",
    VizKind.STACKED_BAR: "bar",
    VizKind.AREA: "area",
    VizKind.STACKED_AREA: "area",
    VizKind.SCATTER: "point",
}

_STACKED = {VizKind.STACKED_BAR, VizKind.STACKED_AREA}


def required_channels(kind: VizKind) -> list[str]:
    """Encoding channels a chart kind needs, in assignment order."""
    return list(_CHANNELS[kind])


def assign_fields(schema: list[tuple[str, DType]], kind: VizKind) -> dict[str, str]:
    """Channel -> column map: aliases named exactly like a channel win,
    remaining channels take the remaining columns in schema order."""
    channels = required_channels(kind)
    if not channels:
        return {}
    names = [name for name, _ in schema]
    assignment: dict[str, str] = {}
    used: set[str] = set()
    for channel in channels:
        if channel in names:
            assignment[channel] = channel
            used.add(channel)
    remaining = [n for n in names if n not in used]
    for channel in channels:
        if channel in assignment:
            continue
        if not remaining:
            raise VizError(
                f"{kind.name} needs {len(channels)} columns, schema has {len(names)}"
            )
        assignment[channel] = remaining.pop(0)
    return assignment


def infer_encoding_type(channel: str, dtype: DType) -> str:
    if dtype is DType.TIMESTAMP:
        return "temporal"
    if dtype in (DType.BIGINT, DType.DOUBLE, DType.INTERVAL):
        return "quantitative"
    return "nominal"  # VARCHAR, BOOL


@dataclass
class ChartSpec:
    """Nested spec document plus per-key provenance."""

    target: str
    kind: Optional[VizKind]
    doc: dict = field(default_factory=dict)
    user_keys: set[str] = field(default_factory=set)

    def get(self, path: str) -> object:
        cursor: object = self.doc
        for part in path.split("."):
            if not isinstance(cursor, dict) or part not in cursor:
                return None
            cursor = cursor[part]
        return cursor

    def set_key(self, path: str, value: object, user: bool = False) -> None:
        """Write one dotted key; inferred writes never clobber user keys."""
        if not user and path in self.user_keys:
            return
        parts = path.split(".")
        cursor = self.doc
        for part in parts[:-1]:
            nxt = cursor.get(part)
            if not isinstance(nxt, dict):
                nxt = {}
                cursor[part] = nxt
            cursor = nxt
        cursor[parts[-1]] = value
        if user:
            self.user_keys.add(path)


def _flatten_doc(doc: dict, prefix: str = "") -> dict[str, object]:
    out: dict[str, object] = {}
    for key, value in doc.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten_doc(value, path + "."))
        else:
            out[path] = value
    return out


def compute_domains(ctx: EvalContext, spec: ChartSpec) -> None:
    """Fill scale domains that are not user-set: min/max aggregates for
    temporal and quantitative channels, sorted distinct values for nominal
    ones. Empty relations leave domains out."""
    encoding = spec.doc.get("encoding")
    if not isinstance(encoding, dict):
        return
    for channel, enc in encoding.items():
        if not isinstance(enc, dict):
            continue
        field_name = enc.get("field")
        enc_type = enc.get("type")
        if not field_name or not enc_type:
            continue
        path = f"encoding.{channel}.scale.domain"
        if path in spec.user_keys or spec.get(path) is not None:
            continue
        if enc_type in ("temporal", "quantitative"):
            row = _query(ctx, f"SELECT min({field_name}) AS lo, max({field_name}) AS hi FROM {spec.target};")
            lo, hi = row.rows()[0]
            if lo is None:
                continue
            if enc_type == "temporal":
                spec.set_key(path, [micros_to_iso(lo), micros_to_iso(hi)])
            else:
                spec.set_key(path, [lo, hi])
        elif enc_type == "nominal":
            rel = _query(
                ctx,
                f"SELECT {field_name} FROM {spec.target} "
                f"WHERE {field_name} IS NOT NULL GROUP BY {field_name} ORDER BY {field_name};",
            )
            values = [r[0] for r in rel.rows()]
            if values:
                spec.set_key(path, values)


def _query(ctx: EvalContext, sql: str) -> Relation:
    parsed = parse_script(sql)
    desc = analyze(parsed)
    stmt = desc.statements[0]
    if stmt.error is not None or stmt.query_root is None:
        raise VizError(f"internal metadata query failed to parse: {sql}")
    sub = EvalContext(catalog=ctx.catalog, arena=desc.arena, now_micros=ctx.now_micros, scans=ctx.scans)
    return eval_select(sub, stmt.query_root)


def lower_to_spec(ctx: EvalContext, viz: VizInfo) -> ChartSpec:
    """Compose channel assignment, encoding types, marks, and domains into
    a complete spec. Verbose input skips inference except missing domains.
    TABLE lowers to a table artifact elsewhere; rejected here."""
    if viz.kind is VizKind.TABLE:
        raise VizError("TABLE visualizations do not lower to chart specs")

    if viz.spec is not None:  # verbose form
        spec = ChartSpec(target=viz.target, kind=viz.kind, doc=viz.spec.to_nested())
        spec.user_keys = set(_flatten_doc(spec.doc))
        compute_domains(ctx, spec)
        return spec

    if viz.kind is None:
        raise VizError("visualization carries neither a kind nor a spec")

    relation = resolve_relation(ctx, viz.target)
    assignment = assign_fields(relation.schema, viz.kind)
    spec = ChartSpec(target=viz.target, kind=viz.kind)
    spec.set_key("mark", _MARKS[viz.kind])
    for channel in required_channels(viz.kind):
        column = assignment[channel]
        spec.set_key(f"encoding.{channel}.field", column)
        spec.set_key(f"encoding.{channel}.type", infer_encoding_type(channel, relation.dtype(column)))
    if viz.kind in _STACKED:
        spec.set_key("encoding.y.stack", True)
    compute_domains(ctx, spec)
    return spec


def table_artifact(ctx: EvalContext, target: str) -> dict:
    """Schema-bearing table descriptor; rows are served in pages. Lazy
    tables answer from their footer metadata without scanning."""
    kind = ctx.catalog.kind_of(target)
    if kind == "lazy":
        lazy = ctx.catalog.lazy_tables[target]
        schema, row_count = lazy.schema, lazy.row_count
    elif kind == "table":
        relation = ctx.catalog.tables[target]
        schema, row_count = relation.schema, relation.row_count
    else:
        relation = resolve_relation(ctx, target)
        schema, row_count = relation.schema, relation.row_count
    return {
        "kind": "table",
        "relation": target,
        "schema": [[name, dtype.value] for name, dtype in schema],
        "row_count": row_count,
    }


# -- verbose statement text ---------------------------------------------------------


def _render_value(value: object, indent: int) -> str:
    if isinstance(value, str):
        return "'" + value.replace("'", "''") + "'"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if value is None:
        return "null"
    if isinstance(value, dict):
        return _render_object(value, indent)
    if isinstance(value, list):
        inner = ", ".join(_render_value(v, indent) for v in value)
        return f"[{inner}]"
    return repr(value)


def _render_object(doc: dict, indent: int) -> str:
    pad = "  " * (indent + 1)
    parts = [f"{pad}{key} = {_render_value(value, indent + 1)}" for key, value in doc.items()]
    close = "  " * indent
    return "(\n" + ",\n".join(parts) + f"\n{close})"


def expand_statement_text(target: str, spec: ChartSpec) -> str:
    """Verbose `VISUALIZE target USING ( ... )` whose re-parse lowers to an
    identical spec."""
    return f"VISUALIZE {target} USING {_render_object(spec.doc, 0)};"


# -- emission -------------------------------------------------------------------------


def _camel(key: str) -> str:
    parts = key.split("_")
    return parts[0] + "".join(p.capitalize() for p in parts[1:])


def _camelize(value: object) -> object:
    if isinstance(value, dict):
        return {_camel(k): _camelize(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_camelize(v) for v in value]
    return value


VEGA_LITE_SCHEMA = "https://vega.github.io/schema/vega-lite/v5.json"


def emit_vega_lite(spec: ChartSpec, data_records: Optional[list[dict]] = None) -> dict:
    """Vega-Lite v5 style JSON: snake_case keys camelized, data attached
    inline when provided, by name otherwise."""
    doc = _camelize(spec.doc)
    doc["$schema"] = VEGA_LITE_SCHEMA
    doc["data"] = {"values": data_records} if data_records is not None else {"name": spec.target}
    return doc
