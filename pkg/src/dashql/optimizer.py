"""Holistic passes over analyzed scripts.

AM4 reduces line/area chart data to at most four points per pixel column
in one grouped pass using arg_min/arg_max; the M4 oracle is the two-pass
reference (aggregate, join back, distinct). Limit/offset pushdown turns
table paging into partial scans, and adaptive materialization decides per
LOAD whether to materialize eagerly or scan lazily with pushed projection
and predicates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analyzer import (
    ProgramDescription,
    StatementInfo,
    analyze,
    query_column_refs,
    query_where_conjuncts,
)
from .arena import AstArena, AttrKey, NodeType
from .executor import EvalContext, PushedScan, ScanDirective, eval_select
from .parser import FormatTag, StatementKind, VizKind, parse_script
from .relation import Catalog, DType, Relation


@dataclass
class Am4Params:
    width: int  # canvas width in pixels times device pixel ratio
    lb: float  # x-domain lower bound (same units as x)
    ub: float  # x-domain upper bound
    x_field: str = "x"
    y_field: str = "y"

    def __post_init__(self) -> None:
        if self.width < 1:
            raise ValueError("width must be >= 1")
        if self.ub < self.lb:
            raise ValueError("ub must be >= lb")


def _bins(xf: np.ndarray, params: Am4Params) -> np.ndarray:
    """round(width * (x - lb) / (ub - lb)), clamped into [0, width]."""
    if params.ub == params.lb:
        return np.zeros(len(xf), dtype=np.int64)
    raw = np.round(params.width * (xf - params.lb) / (params.ub - params.lb))
    return np.clip(raw, 0, params.width).astype(np.int64)


def _non_null_pairs(x_col: list, y_col: list) -> list[int]:
    return [i for i in range(len(x_col)) if x_col[i] is not None and y_col[i] is not None]


def am4_native(
    x_col: list,
    y_col: list,
    params: Am4Params,
    x_dtype: DType = DType.DOUBLE,
    y_dtype: DType = DType.DOUBLE,
) -> Relation:
    """Single-pass value-preserving reduction: per bin, the rows attaining
    min/max of x and y (arg ties resolve to the first row in scan order),
    de-duplicated within the bin and sorted by (bin, x, y)."""
    keep = _non_null_pairs(x_col, y_col)
    schema = [(params.x_field, x_dtype), (params.y_field, y_dtype)]
    if not keep:
        return Relation.empty(schema)
    xs = [x_col[i] for i in keep]
    ys = [y_col[i] for i in keep]
    xf = np.asarray(xs, dtype=np.float64)
    yf = np.asarray(ys, dtype=np.float64)
    bins = _bins(xf, params)
    n = len(xf)
    nbins = params.width + 1

    # Scatter-grouped extrema: no sort. The arg row per bin is the first
    # scan-order row attaining the extremum (minimal row index among hits).
    reps: list[np.ndarray] = []
    for values, reducer, init in (
        (xf, np.minimum, np.inf),
        (xf, np.maximum, -np.inf),
        (yf, np.minimum, np.inf),
        (yf, np.maximum, -np.inf),
    ):
        agg = np.full(nbins, init)
        reducer.at(agg, bins, values)
        hit_rows = np.flatnonzero(values == agg[bins])
        first = np.full(nbins, n, dtype=np.int64)
        np.minimum.at(first, bins[hit_rows], hit_rows)
        reps.append(first[first < n])

    seen: set[tuple] = set()
    points: list[tuple] = []
    for rep in reps:
        for row in rep.tolist():
            key = (int(bins[row]), xs[row], ys[row])
            if key not in seen:
                seen.add(key)
                points.append(key)
    points.sort()
    return Relation(schema, [[p[1] for p in points], [p[2] for p in points]])


def m4_oracle(
    x_col: list,
    y_col: list,
    params: Am4Params,
    x_dtype: DType = DType.DOUBLE,
    y_dtype: DType = DType.DOUBLE,
) -> Relation:
    """Two-pass reference: per-bin min/max aggregates, a join back against
    the input selecting rows matching any extremum, then distinct on
    (bin, x, y)."""
    keep = _non_null_pairs(x_col, y_col)
    schema = [(params.x_field, x_dtype), (params.y_field, y_dtype)]
    if not keep:
        return Relation.empty(schema)
    xs = [x_col[i] for i in keep]
    ys = [y_col[i] for i in keep]
    xf = np.asarray(xs, dtype=np.float64)
    yf = np.asarray(ys, dtype=np.float64)
    bins = _bins(xf, params)

    # Pass 1: aggregate extrema per bin.
    uniq, inverse = np.unique(bins, return_inverse=True)
    order = np.argsort(inverse, kind="stable")
    grouped = inverse[order]
    starts = np.flatnonzero(np.r_[True, grouped[1:] != grouped[:-1]])
    min_x = np.minimum.reduceat(xf[order], starts)
    max_x = np.maximum.reduceat(xf[order], starts)
    min_y = np.minimum.reduceat(yf[order], starts)
    max_y = np.maximum.reduceat(yf[order], starts)

    # Pass 2: join rows back against their bin's extrema.
    qualifies = (
        (xf == min_x[inverse])
        | (xf == max_x[inverse])
        | (yf == min_y[inverse])
        | (yf == max_y[inverse])
    )
    rows = np.flatnonzero(qualifies)
    seen: set[tuple] = set()
    points: list[tuple] = []
    for row in rows.tolist():
        key = (int(bins[row]), xs[row], ys[row])
        if key not in seen:
            seen.add(key)
            points.append(key)
    points.sort()
    return Relation(schema, [[p[1] for p in points], [p[2] for p in points]])


# -- AM4 injection -----------------------------------------------------------------


@dataclass
class Am4Rewrite:
    """A backing query wrapped into the grouped arg_min/arg_max form."""

    desc: ProgramDescription
    query_root: int
    params: Am4Params
    x_field: str
    y_field: str
    color_field: Optional[str]

    def evaluate(self, ctx: EvalContext) -> Relation:
        sub = EvalContext(
            catalog=ctx.catalog, arena=self.desc.arena, now_micros=ctx.now_micros, scans=ctx.scans
        )
        aggregates = eval_select(sub, self.query_root)
        return am4_points(aggregates, self.x_field, self.y_field, self.color_field)


_AM4_KINDS = {VizKind.LINE, VizKind.MULTI_LINE, VizKind.AREA}


def inject_am4(
    target: str,
    kind: VizKind,
    x_field: str,
    y_field: str,
    x_type: str,
    y_type: str,
    params: Am4Params,
    estimated_rows: int,
    color_field: Optional[str] = None,
    x_dtype: DType = DType.DOUBLE,
    y_dtype: DType = DType.DOUBLE,
) -> Optional[Am4Rewrite]:
    """Wrap the chart's backing query in the single-scan aggregation,
    grouped per color series for multi-line charts. Declines (returns
    None) for ineligible kinds/types or when the input is already at most
    4*(width+1) rows per series."""
    if kind not in _AM4_KINDS:
        return None
    if x_type not in ("temporal", "quantitative") or y_type != "quantitative":
        return None
    if estimated_rows <= 4 * (params.width + 1):
        return None
    if kind is VizKind.MULTI_LINE and color_field is None:
        return None

    color_sql = f"{color_field}, " if color_field else ""
    group_sql = f"{color_field}, bin" if color_field else "bin"
    bin_expr = (
        f"round({float(params.width)!r} * ({x_field} - {_literal(params.lb)}) "
        f"/ ({_literal(params.ub)} - {_literal(params.lb)})) AS bin"
    )
    sql = (
        f"SELECT {color_sql}"
        f"min({x_field}) AS min_x, arg_min({y_field}, {x_field}) AS y_at_min_x, "
        f"max({x_field}) AS max_x, arg_max({y_field}, {x_field}) AS y_at_max_x, "
        f"arg_min({x_field}, {y_field}) AS x_at_min_y, min({y_field}) AS min_y, "
        f"arg_max({x_field}, {y_field}) AS x_at_max_y, max({y_field}) AS max_y, "
        f"{bin_expr} "
        f"FROM {target} GROUP BY {group_sql};"
    )
    desc = analyze(parse_script(sql))
    stmt = desc.statements[0]
    if stmt.error is not None or stmt.query_root is None:
        return None
    params = Am4Params(params.width, params.lb, params.ub, x_field, y_field)
    return Am4Rewrite(
        desc=desc,
        query_root=stmt.query_root,
        params=params,
        x_field=x_field,
        y_field=y_field,
        color_field=color_field,
    )


def _literal(value: float) -> str:
    if float(value).is_integer():
        return repr(int(value))
    return repr(float(value))


def am4_points(aggregates: Relation, x_field: str, y_field: str, color_field: Optional[str]) -> Relation:
    """Unpivot the eight aggregates into up to four points per bin,
    de-duplicated and sorted by (series, bin, x, y)."""
    x_dtype = aggregates.dtype("min_x")
    y_dtype = aggregates.dtype("min_y")
    schema = ([(color_field, aggregates.dtype(color_field))] if color_field else []) + [
        (x_field, x_dtype),
        (y_field, y_dtype),
    ]
    seen: set[tuple] = set()
    points: list[tuple] = []
    for rec in zip(
        aggregates.column(color_field) if color_field else [None] * aggregates.row_count,
        aggregates.column("bin"),
        aggregates.column("min_x"),
        aggregates.column("y_at_min_x"),
        aggregates.column("max_x"),
        aggregates.column("y_at_max_x"),
        aggregates.column("x_at_min_y"),
        aggregates.column("min_y"),
        aggregates.column("x_at_max_y"),
        aggregates.column("max_y"),
    ):
        color, bin_key = rec[0], rec[1]
        for x, y in ((rec[2], rec[3]), (rec[4], rec[5]), (rec[6], rec[7]), (rec[8], rec[9])):
            if x is None or y is None:
                continue
            key = (color, bin_key, x, y)
            if key not in seen:
                seen.add(key)
                points.append(key)
    points.sort(key=lambda p: ((p[0] is not None, p[0]), p[1], p[2], p[3]))
    if color_field:
        return Relation(
            schema,
            [
                [p[0] for p in points],
                [p[2] for p in points],
                [p[3] for p in points],
            ],
        )
    return Relation(schema, [[p[2] for p in points], [p[3] for p in points]])


# -- limit/offset pushdown -----------------------------------------------------------


def pushdown_limit_offset(
    catalog: Catalog, target: str, offset: int, limit: Optional[int], readahead: int = 0
) -> Optional[ScanDirective]:
    """Page directive for a table visualization whose backing chain is a
    bare lazy scan; declines on materialized tables, views, or anything
    with operators in between."""
    if catalog.kind_of(target) != "lazy":
        return None
    return ScanDirective(limit=limit, offset=offset, readahead=readahead)


def page_rows(
    ctx: EvalContext, target: str, offset: int, limit: Optional[int], readahead: int = 0
) -> Relation:
    """Rows for one table page, through the pushdown when it applies."""
    directive = pushdown_limit_offset(ctx.catalog, target, offset, limit, readahead)
    if directive is not None:
        lazy = ctx.catalog.lazy_tables[target]
        base = ctx.scans.get(target)
        if base is not None and base.projection is not None:
            directive.projection = sorted(base.projection)
        return lazy.scan(directive)
    from .executor import resolve_relation

    relation = resolve_relation(ctx, target)
    return relation.slice(offset, limit)


# -- adaptive materialization ----------------------------------------------------------


_PARTIAL_SCAN_FORMATS = {FormatTag.RGF, FormatTag.PARQUET}

_FORMAT_BY_EXTENSION = {
    ".csv": FormatTag.CSV,
    ".json": FormatTag.JSON,
    ".parquet": FormatTag.PARQUET,
    ".rgf": FormatTag.RGF,
}

_CMP_OPS = {
    NodeType.OP_GT: ">",
    NodeType.OP_GE: ">=",
    NodeType.OP_LT: "<",
    NodeType.OP_LE: "<=",
    NodeType.OP_EQ: "=",
}

_FLIP = {">": "<", ">=": "<=", "<": ">", "<=": ">=", "=": "="}


@dataclass
class LoadDecision:
    statement: int
    decision: str = "MATERIALIZE"  # LAZY | MATERIALIZE
    reasons: list[str] = field(default_factory=list)
    format: Optional[FormatTag] = None
    projection: Optional[set[str]] = None  # None = all columns
    consumer_scans: dict[int, PushedScan] = field(default_factory=dict)


@dataclass
class MaterializationPlan:
    loads: dict[int, LoadDecision] = field(default_factory=dict)

    def decision_for(self, statement: int) -> Optional[LoadDecision]:
        return self.loads.get(statement)

    def scans_for_consumer(self, desc: ProgramDescription, consumer: int) -> dict[str, PushedScan]:
        out: dict[str, PushedScan] = {}
        for decision in self.loads.values():
            pushed = decision.consumer_scans.get(consumer)
            if pushed is not None:
                name = desc.statements[decision.statement].produces
                out[name] = pushed
        return out


def infer_format(info: StatementInfo, desc: ProgramDescription) -> Optional[FormatTag]:
    """Explicit USING format, else the fetch URI extension."""
    if info.load is None:
        return None
    if info.load.format is not None:
        return info.load.format
    for producer, consumer in desc.dependency_edges:
        if consumer != info.index:
            continue
        fetched = desc.statements[producer]
        if fetched.fetch is not None and fetched.fetch.uri:
            uri = fetched.fetch.uri.lower().split("?", 1)[0]
            for ext, fmt in _FORMAT_BY_EXTENSION.items():
                if uri.endswith(ext):
                    return fmt
    return None


def decide_materialization(desc: ProgramDescription) -> MaterializationPlan:
    """LAZY only for partial-scannable formats with exactly one consumer;
    the consumer's referenced columns and conjunctive range predicates are
    pushed into the scan. Everything else materializes once and is shared."""
    plan = MaterializationPlan()
    for info in desc.statements:
        if info.kind is not StatementKind.LOAD or info.load is None:
            continue
        fmt = infer_format(info, desc)
        decision = LoadDecision(statement=info.index, format=fmt)
        consumers = [c for (p, c) in desc.dependency_edges if p == info.index]
        capable = fmt in _PARTIAL_SCAN_FORMATS
        if not capable:
            decision.decision = "MATERIALIZE"
            decision.reasons.append(
                f"format {fmt.name if fmt is not None else 'unknown'} requires loading the whole file"
            )
            decision.projection = None
        elif len(consumers) != 1:
            decision.decision = "MATERIALIZE"
            decision.reasons.append(f"{len(consumers)} consumers share the table")
            decision.projection = _union_projection(desc, info, consumers)
        else:
            decision.decision = "LAZY"
            decision.reasons.append("partial-scan format with a single consumer")
            consumer = consumers[0]
            pushed = _consumer_pushdown(desc, info.produces, consumer)
            decision.consumer_scans[consumer] = pushed
            decision.projection = set(pushed.projection) if pushed.projection is not None else None
        plan.loads[info.index] = decision
    return plan


def _union_projection(
    desc: ProgramDescription, load: StatementInfo, consumers: list[int]
) -> Optional[set[str]]:
    union: set[str] = set()
    for consumer in consumers:
        pushed = _consumer_pushdown(desc, load.produces, consumer)
        if pushed.projection is None:
            return None
        union |= set(pushed.projection)
    return union


def _consumer_pushdown(desc: ProgramDescription, relation: str, consumer: int) -> PushedScan:
    """Projection and conjunctive range predicates one consumer statement
    allows to push into the scan of `relation`."""
    info = desc.statements[consumer]
    arena = desc.arena
    if info.query_root is None:
        return PushedScan(projection=None, arena=arena)  # e.g. a table viz reads all columns
    if _single_source(arena, info.query_root) != relation:
        return PushedScan(projection=None, arena=arena)
    projection = query_column_refs(arena, info.query_root)
    predicates: list[tuple[str, str, int]] = []
    for conjunct in query_where_conjuncts(arena, info.query_root):
        extracted = _range_conjunct(arena, conjunct)
        if extracted is not None:
            predicates.append(extracted)
    return PushedScan(
        projection=sorted(projection) if projection is not None else None,
        predicates=predicates,
        arena=arena,
    )


def _single_source(arena: AstArena, query_root: int) -> Optional[str]:
    from_node = arena.find_child(query_root, AttrKey.FROM)
    if from_node is None:
        return None
    items = list(arena.children(from_node))
    if len(items) != 1 or arena.node_type(items[0]) is not NodeType.REL_NAME:
        return None
    return arena.node_text(items[0]).lower()


def _range_conjunct(arena: AstArena, node: int) -> Optional[tuple[str, str, int]]:
    """`col <op> expr` (or flipped) where the expression side references no
    columns; evaluated to a constant at scan time."""
    op = _CMP_OPS.get(arena.node_type(node))
    if op is None:
        return None
    left = arena.find_child(node, AttrKey.LEFT)
    right = arena.find_child(node, AttrKey.RIGHT)
    if left is None or right is None:
        return None
    if arena.node_type(left) is NodeType.NAME and _column_free(arena, right):
        return (arena.node_text(left).lower(), op, right)
    if arena.node_type(right) is NodeType.NAME and _column_free(arena, left):
        return (arena.node_text(right).lower(), _FLIP[op], left)
    return None


def _column_free(arena: AstArena, node: int) -> bool:
    stack = [node]
    while stack:
        idx = stack.pop()
        ntype = arena.node_type(idx)
        if ntype is NodeType.NAME and arena.attribute_key(idx) is not AttrKey.NAME:
            return False
        if ntype is NodeType.NAME_PATH:
            kids = list(arena.children(idx))
            if len(kids) != 2 or arena.node_text(kids[0]).lower() != "main":
                return False
            continue  # input references are constants at scan time
        stack.extend(arena.children(idx))
    return True
