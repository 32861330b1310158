"""Semantic analysis: statement info, produced/consumed names, input
references, settings extraction, and the statement dependency DAG.

A VISUALIZE over an inline SELECT is desugared here into an anonymous view
statement preceding the VISUALIZE, so task derivation stays uniform. The
anonymous view's name is derived from a structural fingerprint of the
query, which keeps it stable across whitespace edits and statement moves.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .arena import AstArena, AttrKey, NodeType
from .lexer import unquote
from .parser import (
    Diagnostic,
    FormatTag,
    ParsedScript,
    SchemeTag,
    StatementKind,
    TypeTag,
    VizKind,
)


class KeyValueList:
    """Ordered key-value pairs mirroring the round-bracket settings syntax.

    Keys are lower-cased; values are scalars, strings, lists, or nested
    KeyValueList objects. Dotted keys are kept as written and resolved on
    lookup.
    """

    def __init__(self, pairs: Optional[list[tuple[str, object]]] = None):
        self.pairs: list[tuple[str, object]] = pairs or []

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[tuple[str, object]]:
        return iter(self.pairs)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, KeyValueList) and self.pairs == other.pairs

    def __repr__(self) -> str:
        return f"KeyValueList({self.pairs!r})"

    def get(self, dotted: str, default: object = None) -> object:
        """Resolve a dotted path against both dotted keys and nesting."""
        dotted = dotted.lower()
        for key, value in self.pairs:
            if key == dotted:
                return value
            if dotted.startswith(key + "."):
                rest = dotted[len(key) + 1 :]
                if isinstance(value, KeyValueList):
                    found = value.get(rest, _MISSING)
                    if found is not _MISSING:
                        return found
        return default

    def flatten(self, prefix: str = "") -> dict[str, object]:
        """Fully-dotted view; nested lists expand, leaf values stay as-is."""
        out: dict[str, object] = {}
        for key, value in self.pairs:
            path = f"{prefix}{key}"
            if isinstance(value, KeyValueList):
                out.update(value.flatten(path + "."))
            else:
                out[path] = value
        return out

    def to_nested(self) -> dict:
        """Dict with dotted keys expanded into nested objects."""

        def convert(value: object) -> object:
            if isinstance(value, KeyValueList):
                return value.to_nested()
            if isinstance(value, list):
                return [convert(v) for v in value]
            return value

        out: dict = {}
        for key, value in self.pairs:
            parts = key.split(".")
            cursor = out
            for part in parts[:-1]:
                nxt = cursor.get(part)
                if not isinstance(nxt, dict):
                    nxt = {}
                    cursor[part] = nxt
                cursor = nxt
            leaf = convert(value)
            existing = cursor.get(parts[-1])
            if isinstance(existing, dict) and isinstance(leaf, dict):
                existing.update(leaf)
            else:
                cursor[parts[-1]] = leaf
        return out


_MISSING = object()


@dataclass
class InputDecl:
    name: str
    sql_type: TypeTag
    component: Optional[str] = None
    default: object = None


@dataclass
class FetchInfo:
    uri: Optional[str] = None
    scheme: Optional[SchemeTag] = None


@dataclass
class LoadInfo:
    source: str = ""
    format: Optional[FormatTag] = None


@dataclass
class VizInfo:
    target: str = ""
    kind: Optional[VizKind] = None
    spec: Optional[KeyValueList] = None  # verbose form


@dataclass
class CreateInfo:
    name: str = ""
    query_root: int = -1
    is_view: bool = False


@dataclass
class StatementInfo:
    index: int
    kind: Optional[StatementKind]
    root: Optional[int]
    loc: tuple[int, int]
    error: Optional[Diagnostic] = None
    produces: Optional[str] = None
    produced_type: Optional[str] = None  # buffer | table | view | input
    consumes: set[str] = field(default_factory=set)
    input_refs: set[str] = field(default_factory=set)
    settings: KeyValueList = field(default_factory=KeyValueList)
    unresolved: set[str] = field(default_factory=set)
    blocked: bool = False
    synthetic_origin: Optional[int] = None  # source statement index when desugared
    input_decl: Optional[InputDecl] = None
    fetch: Optional[FetchInfo] = None
    load: Optional[LoadInfo] = None
    viz: Optional[VizInfo] = None
    create: Optional[CreateInfo] = None
    query_root: Optional[int] = None  # SELECT_QUERY node for queries/views

    @property
    def synthetic(self) -> bool:
        return self.synthetic_origin is not None


@dataclass
class ProgramDescription:
    arena: AstArena
    parsed: ParsedScript
    statements: list[StatementInfo] = field(default_factory=list)
    dependency_edges: list[tuple[int, int]] = field(default_factory=list)
    diagnostics: list[Diagnostic] = field(default_factory=list)
    inputs: dict[str, InputDecl] = field(default_factory=dict)

    def statement_text(self, index: int) -> str:
        off, length = self.statements[index].loc
        return self.arena.script_text[off : off + length]

    def consumers_of(self, producer_idx: int) -> list[int]:
        return [c for (p, c) in self.dependency_edges if p == producer_idx]


class AnalyzerError(Exception):
    pass


def analyze(parsed: ParsedScript) -> ProgramDescription:
    """Build the program description for a parsed script.

    Duplicate produced names and dependency cycles block the offending
    statements; unresolved references are warnings (the catalog may already
    hold the name at run time).
    """
    arena = parsed.arena
    desc = ProgramDescription(arena=arena, parsed=parsed)

    for src_idx, stmt in enumerate(parsed.statements):
        if stmt.error is not None or stmt.root is None:
            info = StatementInfo(
                index=len(desc.statements), kind=stmt.kind, root=None, loc=stmt.loc, error=stmt.error
            )
            info.blocked = True
            desc.statements.append(info)
            desc.diagnostics.append(stmt.error)
            continue
        for info in _statement_infos(arena, stmt.kind, stmt.root, stmt.loc, src_idx):
            info.index = len(desc.statements)
            desc.statements.append(info)

    _resolve(desc)
    return desc


def _statement_infos(arena, kind, root, loc, src_idx) -> list[StatementInfo]:
    """One StatementInfo per statement, plus a preceding synthetic view for
    a VISUALIZE over an inline SELECT."""
    info = StatementInfo(index=-1, kind=kind, root=root, loc=loc)
    settings_node = arena.find_child(root, AttrKey.SETTINGS)
    if settings_node is not None:
        info.settings = extract_kv(arena, settings_node)

    if kind is StatementKind.SET:
        return [info]

    if kind is StatementKind.INPUT:
        name = arena.node_text(arena.find_child(root, AttrKey.NAME))
        type_node = arena.find_child(root, AttrKey.TYPE)
        comp_node = arena.find_child(root, AttrKey.COMPONENT)
        decl = InputDecl(
            name=name.lower(),
            sql_type=TypeTag(arena.value(type_node)),
            component=arena.node_text(comp_node) if comp_node is not None else None,
            default=info.settings.get("default"),
        )
        info.input_decl = decl
        info.produces = decl.name
        info.produced_type = "input"
        return [info]

    if kind is StatementKind.FETCH:
        name = arena.node_text(arena.find_child(root, AttrKey.NAME)).lower()
        info.produces = name
        info.produced_type = "buffer"
        fetch = FetchInfo()
        uri_node = arena.find_child(root, AttrKey.URI)
        if uri_node is not None:
            fetch.uri = unquote(arena.node_text(uri_node))
        scheme_node = arena.find_child(root, AttrKey.SOURCE)
        if scheme_node is not None:
            fetch.scheme = SchemeTag(arena.value(scheme_node))
            url = info.settings.get("url")
            if isinstance(url, str):
                fetch.uri = url
        info.fetch = fetch
        return [info]

    if kind is StatementKind.LOAD:
        name = arena.node_text(arena.find_child(root, AttrKey.NAME)).lower()
        source = arena.node_text(arena.find_child(root, AttrKey.SOURCE)).lower()
        fmt_node = arena.find_child(root, AttrKey.FORMAT)
        info.produces = name
        info.produced_type = "table"
        info.consumes = {source}
        info.load = LoadInfo(
            source=source, format=FormatTag(arena.value(fmt_node)) if fmt_node is not None else None
        )
        return [info]

    if kind in (StatementKind.CREATE_TABLE_AS, StatementKind.CREATE_VIEW_AS):
        name = arena.node_text(arena.find_child(root, AttrKey.NAME)).lower()
        query = arena.find_child(root, AttrKey.VALUE)
        info.produces = name
        is_view = kind is StatementKind.CREATE_VIEW_AS
        info.produced_type = "view" if is_view else "table"
        info.create = CreateInfo(name=name, query_root=query, is_view=is_view)
        info.query_root = query
        info.consumes = set(query_relations(arena, query))
        info.input_refs = set(query_input_refs(arena, query))
        return [info]

    if kind is StatementKind.SELECT:
        query = arena.find_child(root, AttrKey.VALUE)
        info.query_root = query
        info.consumes = set(query_relations(arena, query))
        info.input_refs = set(query_input_refs(arena, query))
        return [info]

    if kind is StatementKind.VISUALIZE:
        target = arena.find_child(root, AttrKey.TARGET)
        kind_node = arena.find_child(root, AttrKey.VIZ_KIND)
        viz = VizInfo()
        if kind_node is not None:
            viz.kind = VizKind(arena.value(kind_node))
        else:
            viz.spec = info.settings
        if arena.node_type(target) is NodeType.SELECT_QUERY:
            view_name = f"__viz_{tree_fingerprint(arena, target)}"
            view = StatementInfo(
                index=-1,
                kind=StatementKind.CREATE_VIEW_AS,
                root=target,
                loc=(arena.node(target).loc_offset, arena.node(target).loc_length),
                synthetic_origin=src_idx,
            )
            view.produces = view_name
            view.produced_type = "view"
            view.create = CreateInfo(name=view_name, query_root=target, is_view=True)
            view.query_root = target
            view.consumes = set(query_relations(arena, target))
            view.input_refs = set(query_input_refs(arena, target))
            viz.target = view_name
            info.consumes = {view_name}
            info.viz = viz
            return [view, info]
        viz.target = arena.node_text(target).lower()
        info.consumes = {viz.target}
        info.viz = viz
        return [info]

    raise AnalyzerError(f"unhandled statement kind {kind}")


def _resolve(desc: ProgramDescription) -> None:
    producers: dict[str, int] = {}
    for info in desc.statements:
        if info.produces is None:
            continue
        if info.produces in producers:
            info.blocked = True
            info.error = Diagnostic(
                f"name '{info.produces}' is already defined by statement "
                f"{producers[info.produces]}",
                info.loc[0],
                info.loc[1],
            )
            desc.diagnostics.append(info.error)
            continue
        producers[info.produces] = info.index
        if info.input_decl is not None:
            desc.inputs[info.input_decl.name] = info.input_decl

    edges: set[tuple[int, int]] = set()
    for info in desc.statements:
        for name in sorted(info.consumes):
            producer = producers.get(name)
            if producer is None:
                info.unresolved.add(name)
            elif producer != info.index:
                edges.add((producer, info.index))
        for name in sorted(info.input_refs):
            producer = producers.get(name)
            if producer is None:
                info.unresolved.add(f"main.{name}")
            elif producer != info.index:
                edges.add((producer, info.index))
        if info.unresolved:
            desc.diagnostics.append(
                Diagnostic(
                    "unresolved reference(s): " + ", ".join(sorted(info.unresolved)),
                    info.loc[0],
                    info.loc[1],
                )
            )
    desc.dependency_edges = sorted(edges)

    # Cycle detection: statements on a cycle are blocked.
    incoming: dict[int, set[int]] = {i.index: set() for i in desc.statements}
    outgoing: dict[int, set[int]] = {i.index: set() for i in desc.statements}
    for p, c in desc.dependency_edges:
        incoming[c].add(p)
        outgoing[p].add(c)
    ready = [i for i, deps in incoming.items() if not deps]
    seen = 0
    incoming_work = {k: set(v) for k, v in incoming.items()}
    while ready:
        node = ready.pop()
        seen += 1
        for nxt in outgoing[node]:
            incoming_work[nxt].discard(node)
            if not incoming_work[nxt]:
                ready.append(nxt)
    if seen != len(desc.statements):
        for info in desc.statements:
            if incoming_work[info.index]:
                info.blocked = True
                err = Diagnostic("statement participates in a dependency cycle", info.loc[0], info.loc[1])
                info.error = info.error or err
                desc.diagnostics.append(err)


def topo_order(desc: ProgramDescription) -> list[int]:
    """Statement indices in dependency order (stable by index)."""
    incoming: dict[int, set[int]] = {i.index: set() for i in desc.statements}
    for p, c in desc.dependency_edges:
        incoming[c].add(p)
    order: list[int] = []
    done: set[int] = set()
    pending = sorted(incoming)
    while pending:
        progress = False
        rest = []
        for idx in pending:
            if incoming[idx] <= done:
                order.append(idx)
                done.add(idx)
                progress = True
            else:
                rest.append(idx)
        pending = rest
        if not progress:
            order.extend(pending)  # cycle remainder, already blocked
            break
    return order


# -- AST walks ----------------------------------------------------------------


def query_relations(arena: AstArena, query: int) -> list[str]:
    """Relation names consumed by a SELECT subtree (nested FROMs included)."""
    names: list[str] = []
    for idx in arena.walk(query):
        if arena.node_type(idx) is NodeType.REL_NAME:
            names.append(arena.node_text(idx).lower())
    return names


def query_input_refs(arena: AstArena, query: int) -> list[str]:
    """Names referenced through the default schema, as in `main.x`."""
    refs: list[str] = []
    for idx in arena.walk(query):
        if arena.node_type(idx) is NodeType.NAME_PATH:
            kids = list(arena.children(idx))
            if len(kids) == 2 and arena.node_text(kids[0]).lower() == "main":
                refs.append(arena.node_text(kids[1]).lower())
    return refs


def query_column_refs(arena: AstArena, query: int) -> Optional[set[str]]:
    """Columns the query needs from its source, or None for all (star).

    A bare name at the top of a GROUP BY/ORDER BY item may reference a
    projection alias; such names are not source columns unless the same
    name is also used as a column elsewhere.
    """
    columns: set[str] = set()
    aliases: set[str] = set()
    alias_refs: set[str] = set()
    star = False

    def collect(idx: int) -> None:
        nonlocal star
        ntype = arena.node_type(idx)
        if ntype is NodeType.PROJ_STAR:
            star = True
            return
        if ntype is NodeType.NAME:
            if arena.attribute_key(idx) is not AttrKey.NAME:  # skip function names
                columns.add(arena.node_text(idx).lower())
            return
        if ntype is NodeType.NAME_PATH:
            kids = list(arena.children(idx))
            if len(kids) == 2 and arena.node_text(kids[0]).lower() != "main":
                columns.add(arena.node_text(kids[1]).lower())
            return
        if ntype is NodeType.SUBQUERY:
            return  # nested query reads its own source
        for child in arena.children(idx):
            collect(child)

    projection = arena.find_child(query, AttrKey.PROJECTION)
    if projection is not None:
        for item in arena.children(projection):
            if arena.node_type(item) is NodeType.PROJ_STAR:
                star = True
                continue
            alias = arena.find_child(item, AttrKey.ALIAS)
            if alias is not None:
                aliases.add(arena.node_text(alias).lower())
            value = arena.find_child(item, AttrKey.VALUE)
            if value is not None:
                collect(value)
    for key in (AttrKey.WHERE, AttrKey.LIMIT, AttrKey.OFFSET):
        node = arena.find_child(query, key)
        if node is not None:
            collect(node)
    for key in (AttrKey.GROUP_BY, AttrKey.ORDER_BY):
        node = arena.find_child(query, key)
        if node is None:
            continue
        for item in arena.children(node):
            expr = item
            if arena.node_type(item) is NodeType.ORDER_ITEM:
                expr = arena.find_child(item, AttrKey.VALUE)
            if arena.node_type(expr) is NodeType.NAME:
                alias_refs.add(arena.node_text(expr).lower())
            else:
                collect(expr)
    if star:
        return None
    for name in alias_refs:
        if name not in aliases or name in columns:
            columns.add(name)
    return columns


def query_where_conjuncts(arena: AstArena, query: int) -> list[int]:
    """Top-level AND conjunct roots of the query's WHERE clause."""
    where = arena.find_child(query, AttrKey.WHERE)
    if where is None:
        return []
    out: list[int] = []
    stack = [where]
    while stack:
        idx = stack.pop()
        if arena.node_type(idx) is NodeType.OP_AND:
            stack.extend(arena.children(idx))
        else:
            out.append(idx)
    return out


def extract_kv(arena: AstArena, obj: int) -> KeyValueList:
    """Decode an OBJECT node into a KeyValueList (keys lower-cased)."""
    pairs: list[tuple[str, object]] = []
    for entry in arena.children(obj):
        key_node = arena.find_child(entry, AttrKey.KEY)
        value_node = arena.find_child(entry, AttrKey.VALUE)
        key_text = arena.node_text(key_node)
        if key_text[:1] in ("'", '"'):
            key_text = unquote(key_text)
        key = "".join(key_text.split()).lower()
        pairs.append((key, kv_value(arena, value_node)))
    return KeyValueList(pairs)


def kv_value(arena: AstArena, idx: int) -> object:
    ntype = arena.node_type(idx)
    if ntype is NodeType.OBJECT:
        return extract_kv(arena, idx)
    if ntype is NodeType.ARRAY:
        return [kv_value(arena, child) for child in arena.children(idx)]
    if ntype is NodeType.LITERAL_STRING:
        return unquote(arena.node_text(idx))
    if ntype is NodeType.LITERAL_INT:
        return int(arena.node_text(idx))
    if ntype is NodeType.LITERAL_FLOAT:
        return arena.literals[arena.value(idx)]
    if ntype is NodeType.LITERAL_BOOL:
        return arena.value(idx) == 1
    if ntype is NodeType.LITERAL_NULL:
        return None
    if ntype is NodeType.LITERAL_INTERVAL:
        return arena.literals[arena.value(idx)]
    if ntype is NodeType.NAME:
        return arena.node_text(idx)
    raise AnalyzerError(f"unsupported settings value node {ntype}")


def tree_fingerprint(arena: AstArena, root: int) -> str:
    """Stable structural hash of a subtree: node types, attribute keys, and
    leaf texts (whitespace between tokens does not contribute)."""
    hasher = hashlib.sha1()
    for idx in arena.walk(root):
        node_type = arena.node_type(idx)
        key = arena.attribute_key(idx)
        hasher.update(bytes((int(node_type), int(key))))
        if not arena.children(idx):
            hasher.update(arena.node_text(idx).encode())
        hasher.update(b"\x00")
    return hasher.hexdigest()[:10]


def to_dot(desc: ProgramDescription) -> str:
    """Dependency DAG in DOT format."""
    lines = ["digraph script {", "  rankdir=LR;"]
    for info in desc.statements:
        kind = info.kind.name if info.kind else "ERROR"
        label = kind
        if info.produces:
            label += f"\\n{info.produces}"
        shape = "box" if not info.synthetic else "ellipse"
        lines.append(f'  s{info.index} [label="{info.index}: {label}", shape={shape}];')
    for p, c in desc.dependency_edges:
        lines.append(f"  s{p} -> s{c};")
    lines.append("}")
    return "\n".join(lines)


def normalized_script(parsed: ParsedScript) -> str:
    """Canonical text form: statement texts joined by newlines."""
    return "\n".join(
        parsed.statement_text(i) for i, s in enumerate(parsed.statements) if s.error is None
    )
