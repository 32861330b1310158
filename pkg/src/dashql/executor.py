"""Evaluation of the SQL subset over catalog relations.

Queries are compiled once into per-row closures, then evaluated with
standard semantics: cross join FROM, three-valued WHERE, group-by with
aggregates (sum, count, min, max, avg, arg_min, arg_max), order-by with
NULLs last ascending, limit/offset. `round` uses Python's builtin
(banker's) rounding so pixel-bin arithmetic agrees with the numpy kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Callable, Optional

from .arena import AstArena, AttrKey, NodeType
from .lexer import unquote
from .parser import TypeTag
from .relation import (
    Catalog,
    DType,
    LazyTable,
    Relation,
    ViewDef,
    dtype_for_tag,
    iso_to_micros,
    micros_to_iso,
    _EPOCH,
)

AGGREGATES = {"sum", "count", "min", "max", "avg", "arg_min", "arg_max"}

_NUMERIC = {DType.BIGINT, DType.DOUBLE}


class ExecError(Exception):
    pass


@dataclass
class ScanDirective:
    """Concrete pushdown attached to one lazy-table scan."""

    projection: Optional[list[str]] = None
    predicates: list[tuple[str, str, object]] = field(default_factory=list)
    limit: Optional[int] = None
    offset: Optional[int] = None
    readahead: int = 0


@dataclass
class PushedScan:
    """Plan-level pushdown; predicate values resolve at eval time."""

    projection: Optional[list[str]] = None
    predicates: list[tuple[str, str, int]] = field(default_factory=list)  # (col, op, expr node)
    arena: Optional[AstArena] = None


@dataclass
class EvalContext:
    catalog: Catalog
    arena: AstArena
    now_micros: int
    scans: dict[str, PushedScan] = field(default_factory=dict)
    page: Optional[tuple[int, Optional[int]]] = None  # limit/offset pushdown for bare scans
    readahead: int = 0
    view_depth: int = 0


# -- public operations -----------------------------------------------------------


def eval_select(ctx: EvalContext, query_root: int) -> Relation:
    return _QueryEval(ctx, ctx.arena, query_root).run()


def create_table_as(ctx: EvalContext, name: str, query_root: int, replace: bool = False) -> Relation:
    relation = eval_select(ctx, query_root)
    ctx.catalog.create_table(name, relation, replace=replace)
    return relation


def create_view_as(
    ctx: EvalContext, name: str, query_root: int, replace: bool = False
) -> ViewDef:
    view = ViewDef(name=name, arena=ctx.arena, query_root=query_root, scan_directives=dict(ctx.scans))
    ctx.catalog.create_view(view, replace=replace)
    return view


def drop(catalog: Catalog, name: str) -> None:
    catalog.drop(name)


def resolve_relation(ctx: EvalContext, name: str) -> Relation:
    """A table's data, a view's current evaluation, or a lazy scan."""
    kind = ctx.catalog.kind_of(name)
    if kind == "table":
        return ctx.catalog.tables[name]
    if kind == "view":
        if ctx.view_depth > 16:
            raise ExecError(f"view nesting too deep resolving '{name}'")
        view = ctx.catalog.views[name]
        sub = EvalContext(
            catalog=ctx.catalog,
            arena=view.arena,
            now_micros=ctx.now_micros,
            scans=view.scan_directives,
            view_depth=ctx.view_depth + 1,
        )
        return _QueryEval(sub, view.arena, view.query_root).run()
    if kind == "lazy":
        lazy = ctx.catalog.lazy_tables[name]
        directive = _concrete_directive(ctx, name)
        return lazy.scan(directive)
    raise ExecError(f"unknown relation '{name}'")


def _concrete_directive(ctx: EvalContext, name: str) -> ScanDirective:
    plan = ctx.scans.get(name)
    directive = ScanDirective(readahead=ctx.readahead)
    if ctx.page is not None:
        directive.offset, directive.limit = ctx.page[0], ctx.page[1]
    if plan is None:
        return directive
    directive.projection = sorted(plan.projection) if plan.projection is not None else None
    for col, op, expr_node in plan.predicates:
        arena = plan.arena if plan.arena is not None else ctx.arena
        fn, _ = compile_expr(EvalContext(ctx.catalog, arena, ctx.now_micros), arena, expr_node, _const_resolver)
        directive.predicates.append((col, op, fn(())))
    return directive


def arg_min(a_col: list, b_col: list) -> object:
    """Value of a at the first index minimizing b; NULL b ignored."""
    best = None
    best_idx = -1
    for i, b in enumerate(b_col):
        if b is None:
            continue
        if best is None or b < best:
            best = b
            best_idx = i
    return None if best_idx < 0 else a_col[best_idx]


def arg_max(a_col: list, b_col: list) -> object:
    """Value of a at the first index maximizing b; NULL b ignored."""
    best = None
    best_idx = -1
    for i, b in enumerate(b_col):
        if b is None:
            continue
        if best is None or b > best:
            best = b
            best_idx = i
    return None if best_idx < 0 else a_col[best_idx]


# -- expression compilation ---------------------------------------------------------

Resolver = Callable[[str, Optional[str]], tuple[Callable, DType]]


def _const_resolver(name: str, qualifier: Optional[str]):
    raise ExecError(f"column references are not allowed here: '{name}'")


def compile_expr(ctx: EvalContext, arena: AstArena, node: int, resolve: Resolver):
    """Compile an expression subtree to (fn(env) -> value, dtype)."""
    ntype = arena.node_type(node)

    if ntype is NodeType.LITERAL_INT:
        value = int(arena.node_text(node))
        return (lambda env: value), DType.BIGINT
    if ntype is NodeType.LITERAL_FLOAT:
        value = arena.literals[arena.value(node)]
        return (lambda env: value), DType.DOUBLE
    if ntype is NodeType.LITERAL_STRING:
        value = unquote(arena.node_text(node))
        return (lambda env: value), DType.VARCHAR
    if ntype is NodeType.LITERAL_BOOL:
        value = arena.value(node) == 1
        return (lambda env: value), DType.BOOL
    if ntype is NodeType.LITERAL_NULL:
        return (lambda env: None), None  # untyped; adapts to the other operand
    if ntype is NodeType.LITERAL_INTERVAL:
        value = arena.literals[arena.value(node)]
        return (lambda env: value), DType.INTERVAL

    if ntype is NodeType.NAME:
        return resolve(arena.node_text(node).lower(), None)
    if ntype is NodeType.NAME_PATH:
        kids = list(arena.children(node))
        head = arena.node_text(kids[0]).lower()
        tail = arena.node_text(kids[1]).lower()
        if head == "main":
            entry = ctx.catalog.inputs.get(tail)
            if entry is None:
                raise ExecError(f"unknown input 'main.{tail}'")
            tag, value = entry
            return (lambda env: value), dtype_for_tag(tag)
        return resolve(tail, head)

    if ntype in _BINARY_ARITH:
        return _compile_arith(ctx, arena, node, resolve, _BINARY_ARITH[ntype])
    if ntype in _BINARY_CMP:
        return _compile_cmp(ctx, arena, node, resolve, _BINARY_CMP[ntype])
    if ntype is NodeType.OP_AND:
        left, right = _binary_operands(ctx, arena, node, resolve, (DType.BOOL, DType.BOOL))
        return (lambda env: _and3(left(env), right(env))), DType.BOOL
    if ntype is NodeType.OP_OR:
        left, right = _binary_operands(ctx, arena, node, resolve, (DType.BOOL, DType.BOOL))
        return (lambda env: _or3(left(env), right(env))), DType.BOOL
    if ntype is NodeType.OP_NOT:
        operand, dt = compile_expr(ctx, arena, _operand(arena, node), resolve)
        _require(dt in (DType.BOOL, None), "NOT needs a boolean operand")
        return (lambda env: None if operand(env) is None else not operand(env)), DType.BOOL
    if ntype is NodeType.OP_IS_NULL:
        operand, _ = compile_expr(ctx, arena, _operand(arena, node), resolve)
        return (lambda env: operand(env) is None), DType.BOOL
    if ntype is NodeType.OP_IS_NOT_NULL:
        operand, _ = compile_expr(ctx, arena, _operand(arena, node), resolve)
        return (lambda env: operand(env) is not None), DType.BOOL
    if ntype is NodeType.OP_NEG:
        operand, dt = compile_expr(ctx, arena, _operand(arena, node), resolve)
        _require(dt in _NUMERIC or dt in (DType.INTERVAL, None), "cannot negate a non-numeric value")
        return (lambda env: None if operand(env) is None else -operand(env)), dt

    if ntype is NodeType.EXPR_CALL:
        return _compile_call(ctx, arena, node, resolve)

    raise ExecError(f"unsupported expression node {ntype.name}")


def _operand(arena: AstArena, node: int) -> int:
    child = arena.find_child(node, AttrKey.OPERAND)
    if child is None:
        raise ExecError("malformed unary expression")
    return child


def _binary_nodes(arena: AstArena, node: int) -> tuple[int, int]:
    left = arena.find_child(node, AttrKey.LEFT)
    right = arena.find_child(node, AttrKey.RIGHT)
    if left is None or right is None:
        raise ExecError("malformed binary expression")
    return left, right


def _binary_operands(ctx, arena, node, resolve, expect: tuple[DType, DType]):
    lnode, rnode = _binary_nodes(arena, node)
    left, lt = compile_expr(ctx, arena, lnode, resolve)
    right, rt = compile_expr(ctx, arena, rnode, resolve)
    _require(
        lt in (expect[0], None) and rt in (expect[1], None),
        "type error in boolean expression",
    )
    return left, right


_BINARY_ARITH = {
    NodeType.OP_ADD: "+",
    NodeType.OP_SUB: "-",
    NodeType.OP_MUL: "*",
    NodeType.OP_DIV: "/",
    NodeType.OP_MOD: "%",
}

_BINARY_CMP = {
    NodeType.OP_EQ: "=",
    NodeType.OP_NEQ: "!=",
    NodeType.OP_LT: "<",
    NodeType.OP_LE: "<=",
    NodeType.OP_GT: ">",
    NodeType.OP_GE: ">=",
}


def _arith_result_type(op: str, lt: Optional[DType], rt: Optional[DType]) -> Optional[DType]:
    if lt is None:
        lt = rt
    if rt is None:
        rt = lt
    if lt is None and rt is None:
        return None
    if lt in _NUMERIC and rt in _NUMERIC:
        if op == "/":
            return DType.DOUBLE
        return DType.DOUBLE if DType.DOUBLE in (lt, rt) else DType.BIGINT
    if op in ("+", "-"):
        if lt is DType.TIMESTAMP and rt is DType.INTERVAL:
            return DType.TIMESTAMP
        if op == "+" and lt is DType.INTERVAL and rt is DType.TIMESTAMP:
            return DType.TIMESTAMP
        if op == "-" and lt is DType.TIMESTAMP and rt is DType.TIMESTAMP:
            return DType.INTERVAL
        if lt is DType.INTERVAL and rt is DType.INTERVAL:
            return DType.INTERVAL
    raise ExecError(f"type error: {lt.value} {op} {rt.value}")


def _compile_arith(ctx, arena, node, resolve, op: str):
    lnode, rnode = _binary_nodes(arena, node)
    left, lt = compile_expr(ctx, arena, lnode, resolve)
    right, rt = compile_expr(ctx, arena, rnode, resolve)
    out = _arith_result_type(op, lt, rt)

    if op == "+":
        def fn(env):
            a, b = left(env), right(env)
            return None if a is None or b is None else a + b
    elif op == "-":
        def fn(env):
            a, b = left(env), right(env)
            return None if a is None or b is None else a - b
    elif op == "*":
        def fn(env):
            a, b = left(env), right(env)
            return None if a is None or b is None else a * b
    elif op == "/":
        def fn(env):
            a, b = left(env), right(env)
            if a is None or b is None:
                return None
            if b == 0:
                raise ExecError("division by zero")
            return a / b
    else:  # %
        def fn(env):
            a, b = left(env), right(env)
            if a is None or b is None:
                return None
            if b == 0:
                raise ExecError("division by zero")
            return a % b

    return fn, out


_COMPARABLE = {
    (DType.VARCHAR, DType.VARCHAR),
    (DType.BOOL, DType.BOOL),
    (DType.TIMESTAMP, DType.TIMESTAMP),
    (DType.INTERVAL, DType.INTERVAL),
}


def _compile_cmp(ctx, arena, node, resolve, op: str):
    lnode, rnode = _binary_nodes(arena, node)
    left, lt = compile_expr(ctx, arena, lnode, resolve)
    right, rt = compile_expr(ctx, arena, rnode, resolve)
    # ISO text compares against timestamps for convenience.
    if lt is DType.TIMESTAMP and rt is DType.VARCHAR:
        inner = right
        right = lambda env, _f=inner: _coerce_ts(_f(env))
        rt = DType.TIMESTAMP
    elif rt is DType.TIMESTAMP and lt is DType.VARCHAR:
        inner = left
        left = lambda env, _f=inner: _coerce_ts(_f(env))
        lt = DType.TIMESTAMP
    ok = (
        lt is None
        or rt is None
        or (lt in _NUMERIC and rt in _NUMERIC)
        or (lt, rt) in _COMPARABLE
    )
    if not ok:
        raise ExecError(f"cannot compare {lt.value} with {rt.value}")

    cmp = {
        "=": lambda a, b: a == b,
        "!=": lambda a, b: a != b,
        "<": lambda a, b: a < b,
        "<=": lambda a, b: a <= b,
        ">": lambda a, b: a > b,
        ">=": lambda a, b: a >= b,
    }[op]

    def fn(env):
        a, b = left(env), right(env)
        if a is None or b is None:
            return None
        return cmp(a, b)

    return fn, DType.BOOL


def _coerce_ts(value):
    if value is None:
        return None
    return iso_to_micros(value) if isinstance(value, str) else value


def _and3(a, b):
    if a is False or b is False:
        return False
    if a is None or b is None:
        return None
    return True


def _or3(a, b):
    if a is True or b is True:
        return True
    if a is None or b is None:
        return None
    return False


_TRUNC_UNITS = {"hour", "day", "week", "month", "year", "minute", "second"}


def _date_trunc(unit: str, micros: Optional[int]) -> Optional[int]:
    if micros is None:
        return None
    dt = _EPOCH + timedelta(microseconds=micros)
    if unit == "second":
        dt = dt.replace(microsecond=0)
    elif unit == "minute":
        dt = dt.replace(second=0, microsecond=0)
    elif unit == "hour":
        dt = dt.replace(minute=0, second=0, microsecond=0)
    elif unit == "day":
        dt = dt.replace(hour=0, minute=0, second=0, microsecond=0)
    elif unit == "week":
        dt = dt.replace(hour=0, minute=0, second=0, microsecond=0) - timedelta(days=dt.weekday())
    elif unit == "month":
        dt = dt.replace(day=1, hour=0, minute=0, second=0, microsecond=0)
    elif unit == "year":
        dt = dt.replace(month=1, day=1, hour=0, minute=0, second=0, microsecond=0)
    else:
        raise ExecError(f"unsupported date_trunc unit '{unit}'")
    delta = dt - _EPOCH
    return delta.days * 86_400_000_000 + delta.seconds * 1_000_000 + delta.microseconds


def _compile_call(ctx, arena, node, resolve):
    name_node = arena.find_child(node, AttrKey.NAME)
    func = arena.node_text(name_node).lower()
    args = [c for c in arena.children(node) if arena.attribute_key(c) is not AttrKey.NAME]

    if func in AGGREGATES:
        raise ExecError(f"aggregate {func}() is not allowed here")

    if func == "now":
        _require(not args, "now() takes no arguments")
        now = ctx.now_micros
        return (lambda env: now), DType.TIMESTAMP

    if func == "date_trunc":
        _require(len(args) == 2, "date_trunc(unit, ts) takes two arguments")
        unit_node = args[0]
        _require(
            arena.node_type(unit_node) is NodeType.LITERAL_STRING,
            "date_trunc unit must be a string literal",
        )
        unit = unquote(arena.node_text(unit_node)).lower()
        _require(unit in _TRUNC_UNITS, f"unsupported date_trunc unit '{unit}'")
        value, vt = compile_expr(ctx, arena, args[1], resolve)
        _require(vt is DType.TIMESTAMP, "date_trunc needs a timestamp")
        return (lambda env: _date_trunc(unit, value(env))), DType.TIMESTAMP

    if func == "round":
        _require(len(args) in (1, 2), "round takes one or two arguments")
        value, vt = compile_expr(ctx, arena, args[0], resolve)
        _require(vt in _NUMERIC, "round needs a numeric argument")
        if len(args) == 1:
            return (lambda env: None if value(env) is None else float(round(value(env)))), DType.DOUBLE
        digits, dt = compile_expr(ctx, arena, args[1], resolve)
        _require(dt is DType.BIGINT, "round digits must be an integer")
        return (
            lambda env: None if value(env) is None else round(value(env), digits(env))
        ), DType.DOUBLE

    if func == "abs":
        _require(len(args) == 1, "abs takes one argument")
        value, vt = compile_expr(ctx, arena, args[0], resolve)
        _require(vt in _NUMERIC or vt is DType.INTERVAL, "abs needs a numeric argument")
        return (lambda env: None if value(env) is None else abs(value(env))), vt

    raise ExecError(f"unknown function '{func}'")


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ExecError(message)


# -- query evaluation ------------------------------------------------------------


@dataclass
class _Source:
    """Cross-join product of the FROM items."""

    entries: list[tuple[str, str, DType]]  # (relation label, column, dtype)
    rows: list[tuple]

    def resolver(self) -> Resolver:
        by_name: dict[str, list[int]] = {}
        by_qualified: dict[tuple[str, str], int] = {}
        for slot, (label, col, _) in enumerate(self.entries):
            by_name.setdefault(col, []).append(slot)
            by_qualified[(label, col)] = slot

        def resolve(name: str, qualifier: Optional[str]):
            if qualifier is not None:
                slot = by_qualified.get((qualifier, name))
                if slot is None:
                    raise ExecError(f"unknown column '{qualifier}.{name}'")
            else:
                slots = by_name.get(name)
                if not slots:
                    raise ExecError(f"unknown column '{name}'")
                if len(slots) > 1:
                    raise ExecError(f"ambiguous column '{name}'")
                slot = slots[0]
            dtype = self.entries[slot][2]
            return (lambda env, _s=slot: env[_s]), dtype

        return resolve


class _QueryEval:
    def __init__(self, ctx: EvalContext, arena: AstArena, query_root: int):
        self.ctx = ctx
        self.arena = arena
        self.root = query_root

    def run(self) -> Relation:
        arena = self.arena
        # limit/offset pushdown (page) never propagates into query internals;
        # the table pager drives paged scans directly.
        ctx = EvalContext(
            catalog=self.ctx.catalog,
            arena=arena,
            now_micros=self.ctx.now_micros,
            scans=self.ctx.scans,
            view_depth=self.ctx.view_depth,
        )
        source = self._build_source(ctx)
        resolve = source.resolver()

        rows = source.rows
        where = arena.find_child(self.root, AttrKey.WHERE)
        if where is not None:
            pred, pt = compile_expr(ctx, arena, where, resolve)
            _require(pt in (DType.BOOL, None), "WHERE must be boolean")
            rows = [r for r in rows if pred(r) is True]

        items = self._projection_items(source)
        aliases = {alias: i for i, (alias, _, _) in enumerate(items) if alias is not None}

        # Split aggregate calls out of each projection expression.
        agg_specs: list[tuple] = []  # (func, arg fns)
        compiled_items = []
        has_aggs = False
        for alias, name, expr_node in items:
            if expr_node is None:  # star columns are pre-resolved
                compiled_items.append((name, None, None))
                continue
            fn, dtype = self._compile_with_aggs(ctx, arena, expr_node, resolve, agg_specs)
            compiled_items.append((name, fn, dtype))
        has_aggs = bool(agg_specs)

        group_node = arena.find_child(self.root, AttrKey.GROUP_BY)
        grouped = group_node is not None or has_aggs

        if grouped:
            out_rows, out_schema = self._eval_grouped(
                ctx, arena, rows, resolve, source, items, compiled_items, agg_specs, group_node, aliases
            )
        else:
            out_rows, out_schema = self._eval_plain(rows, source, items, compiled_items)

        out_rows = self._order_rows(ctx, arena, out_rows, out_schema, resolve, grouped)
        out_rows = self._page_rows(ctx, arena, out_rows)
        names = _dedupe_names([n for n, _ in out_schema])
        schema = [(names[i], out_schema[i][1] or DType.VARCHAR) for i in range(len(out_schema))]
        return Relation.from_rows(schema, [r[0] for r in out_rows])

    # -- FROM --------------------------------------------------------------

    def _build_source(self, ctx: EvalContext) -> _Source:
        arena = self.arena
        from_node = arena.find_child(self.root, AttrKey.FROM)
        if from_node is None:
            return _Source(entries=[], rows=[()])
        parts: list[tuple[str, Relation]] = []
        for item in arena.children(from_node):
            ntype = arena.node_type(item)
            if ntype is NodeType.REL_NAME:
                name = arena.node_text(item).lower()
                parts.append((name, resolve_relation(ctx, name)))
            elif ntype is NodeType.SUBQUERY:
                sub_root = arena.find_child(item, AttrKey.VALUE)
                alias_node = arena.find_child(item, AttrKey.ALIAS)
                label = arena.node_text(alias_node).lower() if alias_node is not None else "_sub"
                inner = EvalContext(
                    catalog=ctx.catalog,
                    arena=arena,
                    now_micros=ctx.now_micros,
                    scans=ctx.scans,
                    view_depth=ctx.view_depth,
                )
                parts.append((label, _QueryEval(inner, arena, sub_root).run()))
            else:
                raise ExecError(f"unsupported FROM item {ntype.name}")
        entries: list[tuple[str, str, DType]] = []
        for label, rel in parts:
            for col, dtype in rel.schema:
                entries.append((label, col, dtype))
        rows: list[tuple] = []
        if len(parts) == 1:
            rows = parts[0][1].rows()
        else:
            rows = [()]
            for _, rel in parts:
                rel_rows = rel.rows()
                rows = [prefix + extra for prefix in rows for extra in rel_rows]
        return _Source(entries=entries, rows=rows)

    # -- projection ----------------------------------------------------------

    def _projection_items(self, source: _Source):
        """(alias, output name, expr node); expr node None for star slots."""
        arena = self.arena
        projection = arena.find_child(self.root, AttrKey.PROJECTION)
        items: list[tuple[Optional[str], str, Optional[int]]] = []
        for item in arena.children(projection):
            if arena.node_type(item) is NodeType.PROJ_STAR:
                labels = [label for label, _, _ in source.entries]
                ambiguous = {
                    col for _, col, _ in source.entries
                    if sum(1 for _, c, _ in source.entries if c == col) > 1
                }
                for label, col, _ in source.entries:
                    name = f"{label}.{col}" if col in ambiguous else col
                    items.append((None, name, None))
                continue
            value = arena.find_child(item, AttrKey.VALUE)
            alias_node = arena.find_child(item, AttrKey.ALIAS)
            if alias_node is not None:
                alias = arena.node_text(alias_node).lower()
                items.append((alias, alias, value))
            else:
                items.append((None, _expr_name(arena, value), value))
        return items

    def _compile_with_aggs(self, ctx, arena, node, resolve, agg_specs):
        """Compile an expression; aggregate calls become group-slot reads."""
        ntype = arena.node_type(node)
        if ntype is NodeType.EXPR_CALL:
            name_node = arena.find_child(node, AttrKey.NAME)
            func = arena.node_text(name_node).lower()
            if func in AGGREGATES:
                slot = len(agg_specs)
                agg_specs.append(self._compile_aggregate(ctx, arena, node, resolve, func))
                dtype = agg_specs[-1][2]
                return (lambda env, _s=slot: env[1][_s]), dtype
        if ntype in _BINARY_ARITH or ntype in _BINARY_CMP or ntype in (
            NodeType.OP_AND,
            NodeType.OP_OR,
        ):
            lnode, rnode = _binary_nodes(arena, node)
            left, lt = self._compile_with_aggs(ctx, arena, lnode, resolve, agg_specs)
            right, rt = self._compile_with_aggs(ctx, arena, rnode, resolve, agg_specs)
            return _combine_binary(ntype, left, lt, right, rt)
        if ntype in (NodeType.OP_NOT, NodeType.OP_NEG, NodeType.OP_IS_NULL, NodeType.OP_IS_NOT_NULL):
            operand, dt = self._compile_with_aggs(ctx, arena, _operand(arena, node), resolve, agg_specs)
            return _combine_unary(ntype, operand, dt)
        fn, dtype = compile_expr(ctx, arena, node, resolve)
        return (lambda env, _f=fn: _f(env[0])), dtype

    def _compile_aggregate(self, ctx, arena, node, resolve, func):
        args = [c for c in arena.children(node) if arena.attribute_key(c) is not AttrKey.NAME]
        if func == "count":
            if len(args) == 1 and arena.node_type(args[0]) is NodeType.PROJ_STAR:
                return ("count_star", [], DType.BIGINT)
            _require(len(args) == 1, "count takes one argument")
            fn, _ = compile_expr(ctx, arena, args[0], resolve)
            return ("count", [fn], DType.BIGINT)
        if func in ("sum", "min", "max"):
            _require(len(args) == 1, f"{func} takes one argument")
            fn, dtype = compile_expr(ctx, arena, args[0], resolve)
            return (func, [fn], dtype)
        if func == "avg":
            _require(len(args) == 1, "avg takes one argument")
            fn, dtype = compile_expr(ctx, arena, args[0], resolve)
            _require(dtype in _NUMERIC, "avg needs a numeric argument")
            return ("avg", [fn], DType.DOUBLE)
        if func in ("arg_min", "arg_max"):
            _require(len(args) == 2, f"{func} takes two arguments")
            a_fn, a_dt = compile_expr(ctx, arena, args[0], resolve)
            b_fn, _ = compile_expr(ctx, arena, args[1], resolve)
            return (func, [a_fn, b_fn], a_dt)
        raise ExecError(f"unknown aggregate '{func}'")

    # -- evaluation modes -------------------------------------------------------

    def _eval_plain(self, rows, source, items, compiled_items):
        out_schema = []
        star_slots = []
        slot_cursor = 0
        for (alias, name, expr_node), (oname, fn, dtype) in zip(items, compiled_items):
            if expr_node is None:
                out_schema.append((oname, source.entries[slot_cursor][2]))
                star_slots.append(slot_cursor)
                slot_cursor += 1
            else:
                out_schema.append((oname, dtype))
                star_slots.append(None)
        out_rows = []
        for row in rows:
            env = (row, ())
            values = []
            for slot, (_, fn, _) in zip(star_slots, compiled_items):
                values.append(row[slot] if slot is not None else fn(env))
            out_rows.append((tuple(values), row))
        return out_rows, out_schema

    def _eval_grouped(
        self, ctx, arena, rows, resolve, source, items, compiled_items, agg_specs, group_node, aliases
    ):
        _require(
            all(expr is not None for _, _, expr in items),
            "SELECT * cannot be combined with aggregation",
        )
        group_fns = []
        if group_node is not None:
            for expr in arena.children(group_node):
                if arena.node_type(expr) is NodeType.NAME:
                    name = arena.node_text(expr).lower()
                    if name in aliases:
                        item_idx = aliases[name]
                        inner = compiled_items[item_idx][1]
                        group_fns.append(lambda env, _f=inner: _f((env, ())))
                        continue
                fn, _ = compile_expr(ctx, arena, expr, resolve)
                group_fns.append(fn)

        groups: dict[tuple, list] = {}
        order: list[tuple] = []
        for row in rows:
            key = tuple(fn(row) for fn in group_fns)
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(row)
        if group_node is None and not groups:
            groups[()] = []
            order.append(())

        out_schema = [(name, dtype) for (name, _, dtype) in compiled_items]
        out_rows = []
        for key in order:
            member_rows = groups[key]
            agg_values = tuple(_run_aggregate(spec, member_rows) for spec in agg_specs)
            probe = member_rows[0] if member_rows else None
            env = (probe, agg_values)
            values = tuple(fn(env) for (_, fn, _) in compiled_items)
            out_rows.append((values, env))
        return out_rows, out_schema

    # -- order / paging --------------------------------------------------------

    def _order_rows(self, ctx, arena, out_rows, out_schema, resolve, grouped):
        order_node = arena.find_child(self.root, AttrKey.ORDER_BY)
        if order_node is None:
            return out_rows
        out_names = {name: i for i, (name, _) in enumerate(out_schema)}

        specs = []
        for item in arena.children(order_node):
            expr = arena.find_child(item, AttrKey.VALUE)
            dir_node = arena.find_child(item, AttrKey.TYPE)
            descending = dir_node is not None and arena.value(dir_node) == 1
            key_fn = self._order_key_fn(ctx, arena, expr, out_names, resolve, grouped)
            specs.append((key_fn, descending))

        for key_fn, descending in reversed(specs):
            out_rows.sort(
                key=lambda pair, _f=key_fn: _null_key(_f(pair)), reverse=descending
            )
        return out_rows

    def _order_key_fn(self, ctx, arena, expr, out_names, resolve, grouped):
        text = _expr_name(arena, expr)
        if arena.node_type(expr) is NodeType.NAME:
            name = arena.node_text(expr).lower()
            if name in out_names:
                idx = out_names[name]
                return lambda pair, _i=idx: pair[0][_i]
        if text in out_names:
            idx = out_names[text]
            return lambda pair, _i=idx: pair[0][_i]
        if grouped:
            raise ExecError(f"ORDER BY expression '{text}' must name an output column")
        fn, _ = compile_expr(ctx, arena, expr, resolve)
        return lambda pair, _f=fn: _f(pair[1])

    def _page_rows(self, ctx, arena, out_rows):
        limit_node = arena.find_child(self.root, AttrKey.LIMIT)
        offset_node = arena.find_child(self.root, AttrKey.OFFSET)
        offset = 0
        if offset_node is not None:
            fn, dt = compile_expr(ctx, arena, offset_node, _const_resolver)
            _require(dt is DType.BIGINT, "OFFSET must be an integer")
            offset = fn(())
        if limit_node is not None:
            fn, dt = compile_expr(ctx, arena, limit_node, _const_resolver)
            _require(dt is DType.BIGINT, "LIMIT must be an integer")
            limit = fn(())
            return out_rows[offset : offset + limit]
        return out_rows[offset:] if offset else out_rows


def _null_key(value):
    return (value is None, 0 if value is None else value)


def _dedupe_names(names: list[str]) -> list[str]:
    seen: dict[str, int] = {}
    out = []
    for name in names:
        if name in seen:
            seen[name] += 1
            out.append(f"{name}_{seen[name]}")
        else:
            seen[name] = 0
            out.append(name)
    return out


def _expr_name(arena: AstArena, node: int) -> str:
    return "".join(arena.node_text(node).split()).lower()


def _combine_binary(ntype, left, lt, right, rt):
    if ntype in _BINARY_ARITH:
        op = _BINARY_ARITH[ntype]
        out = _arith_result_type(op, lt, rt)
        if op == "/":
            def fn(env):
                a, b = left(env), right(env)
                if a is None or b is None:
                    return None
                if b == 0:
                    raise ExecError("division by zero")
                return a / b
        elif op == "%":
            def fn(env):
                a, b = left(env), right(env)
                if a is None or b is None:
                    return None
                if b == 0:
                    raise ExecError("division by zero")
                return a % b
        else:
            pyop = {"+": lambda a, b: a + b, "-": lambda a, b: a - b, "*": lambda a, b: a * b}[op]

            def fn(env):
                a, b = left(env), right(env)
                return None if a is None or b is None else pyop(a, b)
        return fn, out
    if ntype in _BINARY_CMP:
        op = _BINARY_CMP[ntype]
        cmp = {
            "=": lambda a, b: a == b,
            "!=": lambda a, b: a != b,
            "<": lambda a, b: a < b,
            "<=": lambda a, b: a <= b,
            ">": lambda a, b: a > b,
            ">=": lambda a, b: a >= b,
        }[op]

        def fn(env):
            a, b = left(env), right(env)
            if a is None or b is None:
                return None
            return cmp(a, b)

        return fn, DType.BOOL
    if ntype is NodeType.OP_AND:
        return (lambda env: _and3(left(env), right(env))), DType.BOOL
    return (lambda env: _or3(left(env), right(env))), DType.BOOL


def _combine_unary(ntype, operand, dt):
    if ntype is NodeType.OP_NOT:
        return (lambda env: None if operand(env) is None else not operand(env)), DType.BOOL
    if ntype is NodeType.OP_NEG:
        return (lambda env: None if operand(env) is None else -operand(env)), dt
    if ntype is NodeType.OP_IS_NULL:
        return (lambda env: operand(env) is None), DType.BOOL
    return (lambda env: operand(env) is not None), DType.BOOL


def _run_aggregate(spec, rows):
    func, fns, _ = spec
    if func == "count_star":
        return len(rows)
    if func == "count":
        fn = fns[0]
        return sum(1 for r in rows if fn(r) is not None)
    if func in ("sum", "min", "max"):
        fn = fns[0]
        values = [v for v in (fn(r) for r in rows) if v is not None]
        if not values:
            return None
        if func == "sum":
            return sum(values)
        return min(values) if func == "min" else max(values)
    if func == "avg":
        fn = fns[0]
        values = [v for v in (fn(r) for r in rows) if v is not None]
        return sum(values) / len(values) if values else None
    if func in ("arg_min", "arg_max"):
        a_fn, b_fn = fns
        a_col = [a_fn(r) for r in rows]
        b_col = [b_fn(r) for r in rows]
        return arg_min(a_col, b_col) if func == "arg_min" else arg_max(a_col, b_col)
    raise ExecError(f"unknown aggregate '{func}'")
