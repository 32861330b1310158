"""The session: script lifecycle, task runtimes, and workflow state.

A session owns the catalog, the read ledger, and the current task graph.
Loading a script parses, analyzes, plans materialization, diffs against
the previous version, derives the next graph, and runs it. Setting an
input value re-runs only the dependent tasks. `now()` is snapshotted at
run start so repeated reads within one run agree.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .analyzer import ProgramDescription, StatementInfo, analyze
from .differ import ScriptDiff, Verdict, diff_scripts
from .executor import (
    EvalContext,
    ExecError,
    PushedScan,
    ScanDirective,
    create_table_as,
    create_view_as,
    eval_select,
    resolve_relation,
)
from .ingest import (
    DEFAULT_TRANSFORMS,
    FetchSource,
    IngestError,
    ReadLedger,
    TransformHook,
    load_csv,
    load_json,
    open_reader,
    parse_source,
)
from .optimizer import (
    Am4Params,
    MaterializationPlan,
    am4_points,
    decide_materialization,
    infer_format,
    inject_am4,
    page_rows,
)
from .parser import FormatTag, StatementKind, TypeTag, VizKind, parse_script
from .relation import Catalog, DType, LazyTable, Relation, iso_to_micros, micros_to_iso
from .rgf import RgfScanner
from .taskgraph import (
    Artifact,
    RunReport,
    Task,
    TaskGraph,
    TaskKind,
    TaskStatus,
    derive_initial,
    derive_next,
    run as run_graph,
)
from .vizgen import ChartSpec, emit_vega_lite, expand_statement_text, lower_to_spec, table_artifact
from .parser import interval_micros


class EngineError(Exception):
    pass


def _default_clock() -> int:
    return int(time.time() * 1_000_000)


@dataclass
class FetchHandle:
    source: FetchSource
    reader: object
    buffer: Optional[bytes] = None


@dataclass
class VizOutput:
    type: str  # chart | table
    target: str
    spec: Optional[ChartSpec] = None
    vega: Optional[dict] = None
    table: Optional[dict] = None
    reduced: bool = False  # True when AM4 kicked in


@dataclass
class ScriptResult:
    generation: int
    statements: list[dict]
    diagnostics: list[str]
    diff: list[dict]
    report: RunReport
    inputs: list[dict]

    def to_json(self) -> dict:
        return {
            "generation": self.generation,
            "statements": self.statements,
            "diagnostics": self.diagnostics,
            "diff": self.diff,
            "tasks": self.report.tasks,
            "inputs": self.inputs,
        }


class Session:
    """One script, one workflow state, evolving across edits and inputs."""

    def __init__(
        self,
        fixtures_dir: Optional[str] = None,
        workers: int = 4,
        clock: Callable[[], int] = _default_clock,
        canvas_width: int = 1000,
        pixel_ratio: int = 2,
        force_materialize: bool = False,
    ):
        self.catalog = Catalog()
        self.ledger = ReadLedger()
        self.transforms: list[TransformHook] = list(DEFAULT_TRANSFORMS)
        self.fixtures_dir = fixtures_dir
        self.workers = workers
        self.clock = clock
        self.canvas_width = canvas_width
        self.pixel_ratio = pixel_ratio
        self.force_materialize = force_materialize
        self.script_text: Optional[str] = None
        self.desc: Optional[ProgramDescription] = None
        self.graph: Optional[TaskGraph] = None
        self.plan: MaterializationPlan = MaterializationPlan()
        self.input_values: dict[str, object] = {}
        self.script_settings: dict[str, object] = {}
        self.last_now: int = 0
        self._id_counter = 0
        self._mutation_lock = threading.Lock()
        self._listeners: list[Callable[[Task, TaskStatus], None]] = []

    # -- events -------------------------------------------------------------

    def add_listener(self, listener: Callable[[Task, TaskStatus], None]) -> None:
        self._listeners.append(listener)

    def remove_listener(self, listener) -> None:
        if listener in self._listeners:
            self._listeners.remove(listener)

    def _emit(self, task: Task, status: TaskStatus) -> None:
        for listener in list(self._listeners):
            listener(task, status)

    def _next_id(self) -> int:
        self._id_counter += 1
        return self._id_counter

    # -- script lifecycle ------------------------------------------------------

    def load_script(self, text: str) -> ScriptResult:
        """Parse, diff against the previous version, migrate what holds,
        and execute the rest."""
        with self._mutation_lock:
            parsed = parse_script(text)
            desc = analyze(parsed)
            plan = decide_materialization(desc)
            if self.force_materialize:
                for decision in plan.loads.values():
                    decision.decision = "MATERIALIZE"
                    decision.projection = None
                    decision.consumer_scans.clear()
                    decision.reasons.append("forced by session configuration")
            diff: Optional[ScriptDiff] = None
            if self.graph is None or self.desc is None:
                graph = derive_initial(desc, self._next_id)
                graph.generation = 1
            else:
                diff = diff_scripts(self.desc, desc)
                graph = derive_next(self.graph, self.desc, diff, desc, self._next_id)
            self._retire_inputs(desc)
            self.script_text = text
            self.desc = desc
            self.plan = plan
            self.graph = graph
            self.script_settings = _collect_settings(desc)
            self.last_now = self.clock()
            report = run_graph(graph, self._run_task, workers=self.workers, on_event=self._emit)
            return self._result(report, diff)

    def set_input(self, name: str, value: object) -> ScriptResult:
        """Re-run only the tasks transitively depending on the input."""
        with self._mutation_lock:
            if self.desc is None or self.graph is None:
                raise EngineError("no script loaded")
            decl = self.desc.inputs.get(name.lower())
            if decl is None:
                raise EngineError(f"unknown input '{name}'")
            coerced = _coerce_input(decl.sql_type, value)
            current = self.catalog.input_value(decl.name)
            if coerced == current:
                report = RunReport(generation=self.graph.generation)
                return self._result(report, None)
            self.input_values[decl.name] = coerced
            input_tid = None
            for tid, task in self.graph.tasks.items():
                if (
                    task.kind is TaskKind.INPUT
                    and task.origin_statement is not None
                    and self.desc.statements[task.origin_statement].produces == decl.name
                ):
                    input_tid = tid
                    break
            if input_tid is None:
                raise EngineError(f"no task for input '{name}'")
            invalidated = self.graph.transitive_dependents({input_tid})
            for tid in invalidated:
                task = self.graph.tasks[tid]
                task.status = TaskStatus.PENDING
                task.error = None
                task.migrated = False
                info = self.desc.statements[task.origin_statement] if task.origin_statement is not None else None
                if info is not None and info.produces:
                    task.replaces = info.produces
            self.graph.generation += 1
            self.last_now = self.clock()
            report = run_graph(self.graph, self._run_task, workers=self.workers, on_event=self._emit)
            return self._result(report, None)

    def _retire_inputs(self, next_desc: ProgramDescription) -> None:
        if self.desc is None:
            return
        for name in list(self.catalog.inputs):
            if name not in next_desc.inputs:
                del self.catalog.inputs[name]
                self.input_values.pop(name, None)

    def _result(self, report: RunReport, diff: Optional[ScriptDiff]) -> ScriptResult:
        statements = []
        for info in self.desc.statements:
            tid = self.graph.task_for_statement.get(info.index)
            task = self.graph.tasks.get(tid) if tid is not None else None
            statements.append(
                {
                    "index": info.index,
                    "kind": info.kind.name if info.kind else None,
                    "loc": list(info.loc),
                    "synthetic": info.synthetic,
                    "produces": info.produces,
                    "error": str(info.error) if info.error else None,
                    "task_status": task.status.name if task else None,
                }
            )
        diff_entries = []
        if diff is not None:
            for e in diff.entries:
                diff_entries.append(
                    {
                        "prev": e.prev_idx,
                        "next": e.next_idx,
                        "verdict": e.verdict.name,
                        "similarity": round(e.similarity, 6),
                    }
                )
        return ScriptResult(
            generation=self.graph.generation,
            statements=statements,
            diagnostics=[str(d) for d in self.desc.diagnostics],
            diff=diff_entries,
            report=report,
            inputs=self.describe_inputs(),
        )

    def describe_inputs(self) -> list[dict]:
        if self.desc is None:
            return []
        out = []
        for decl in self.desc.inputs.values():
            value = self.catalog.input_value(decl.name)
            if decl.sql_type is TypeTag.TIMESTAMP and value is not None:
                value = micros_to_iso(value)
            out.append(
                {
                    "name": decl.name,
                    "type": decl.sql_type.name,
                    "component": decl.component,
                    "value": value,
                }
            )
        return out

    # -- task runtime -------------------------------------------------------------

    def _ctx(self, statement: Optional[int] = None) -> EvalContext:
        scans = {}
        if statement is not None and self.desc is not None:
            scans = self.plan.scans_for_consumer(self.desc, statement)
        return EvalContext(
            catalog=self.catalog,
            arena=self.desc.arena,
            now_micros=self.last_now,
            scans=scans,
        )

    def _info(self, task: Task) -> StatementInfo:
        return self.desc.statements[task.origin_statement]

    def _run_task(self, task: Task) -> Optional[Artifact]:
        handler = {
            TaskKind.SET: self._run_set,
            TaskKind.INPUT: self._run_input,
            TaskKind.FETCH: self._run_fetch,
            TaskKind.LOAD: self._run_load,
            TaskKind.CREATE_TABLE: self._run_create,
            TaskKind.CREATE_VIEW: self._run_create,
            TaskKind.VISUALIZE: self._run_visualize,
            TaskKind.QUERY: self._run_query,
            TaskKind.DROP_TABLE: self._run_drop,
            TaskKind.DROP_VIEW: self._run_drop,
            TaskKind.DROP_VIZ: self._run_drop,
            TaskKind.DROP_BUFFER: self._run_drop,
        }[task.kind]
        return handler(task)

    def _run_set(self, task: Task) -> Optional[Artifact]:
        return None

    def _run_input(self, task: Task) -> Artifact:
        decl = self._info(task).input_decl
        value = self.input_values.get(decl.name, decl.default)
        coerced = _coerce_input(decl.sql_type, value)
        self.catalog.set_input(decl.name, decl.sql_type, coerced)
        return Artifact(name=decl.name, type="value", payload=coerced)

    def _consumer_loads(self, fetch_info: StatementInfo) -> list[StatementInfo]:
        return [
            self.desc.statements[c]
            for (p, c) in self.desc.dependency_edges
            if p == fetch_info.index and self.desc.statements[c].kind is StatementKind.LOAD
        ]

    def _run_fetch(self, task: Task) -> Artifact:
        info = self._info(task)
        source = parse_source(info.fetch.uri, info.fetch.scheme, info.settings)
        reader = open_reader(source, self.ledger, self.fixtures_dir)
        loads = self._consumer_loads(info)
        all_lazy = bool(loads) and all(
            (d := self.plan.decision_for(l.index)) is not None and d.decision == "LAZY"
            for l in loads
        )
        handle = FetchHandle(source=source, reader=reader)
        if not all_lazy:
            # Someone materializes: download once and cache the buffer.
            handle.buffer = reader.read_all()
        return Artifact(name=info.produces, type="buffer", payload=handle)

    def _drop_replaced(self, task: Task, name: str) -> bool:
        """In-place redo: the old artifact goes away before re-creation so
        a failing redo leaves the same state as a fresh run would."""
        if task.replaces == name:
            if self.catalog.kind_of(name) is not None:
                self.catalog.drop(name)
            return True
        return False

    def _run_load(self, task: Task) -> Artifact:
        info = self._info(task)
        replace = self._drop_replaced(task, info.produces)
        source_artifact = self.graph.artifact_by_name(info.load.source)
        if source_artifact is None or not isinstance(source_artifact.payload, FetchHandle):
            raise EngineError(f"load source '{info.load.source}' is not a fetched buffer")
        handle: FetchHandle = source_artifact.payload
        decision = self.plan.decision_for(info.index)
        fmt = decision.format if decision is not None else infer_format(info, self.desc)
        if fmt is None:
            raise EngineError(f"cannot infer a format for load '{info.produces}'")

        if decision is not None and decision.decision == "LAZY":
            scanner = RgfScanner(handle.reader.read, handle.reader.size())
            self.catalog.register_lazy(
                LazyTable(
                    name=info.produces,
                    schema=scanner.schema,
                    scan=scanner.scan,
                    row_count=scanner.footer.row_count,
                ),
                replace=replace,
            )
            return Artifact(name=info.produces, type="lazy", payload=scanner)

        data = handle.buffer if handle.buffer is not None else handle.reader.read_all()
        if fmt is FormatTag.CSV:
            relation = load_csv(data, info.settings)
        elif fmt is FormatTag.JSON:
            relation = load_json(data, info.settings, self.transforms)
        elif fmt is FormatTag.RGF:
            scanner = RgfScanner(lambda off, ln: data[off : off + ln], len(data))
            projection = sorted(decision.projection) if decision and decision.projection else None
            relation = scanner.scan(ScanDirective(projection=projection))
        elif fmt is FormatTag.PARQUET:
            raise IngestError("PARQUET loading is not available in this engine; use RGF")
        else:
            raise IngestError(f"unsupported load format {fmt}")
        self.catalog.create_table(info.produces, relation, replace=replace)
        return Artifact(name=info.produces, type="table", payload=None)

    def _run_create(self, task: Task) -> Artifact:
        info = self._info(task)
        replace = self._drop_replaced(task, info.produces)
        ctx = self._ctx(info.index)
        if info.create.is_view:
            create_view_as(ctx, info.produces, info.create.query_root, replace=replace)
            return Artifact(name=info.produces, type="view", payload=None)
        create_table_as(ctx, info.produces, info.create.query_root, replace=replace)
        return Artifact(name=info.produces, type="table", payload=None)

    def _run_query(self, task: Task) -> Artifact:
        info = self._info(task)
        ctx = self._ctx(info.index)
        relation = eval_select(ctx, info.query_root)
        return Artifact(name=f"query#{task.id}", type="result", payload=relation)

    def _run_visualize(self, task: Task) -> Artifact:
        info = self._info(task)
        viz = info.viz
        ctx = self._ctx(info.index)
        if viz.kind is VizKind.TABLE:
            output = VizOutput(type="table", target=viz.target, table=table_artifact(ctx, viz.target))
            return Artifact(name=f"viz#{task.id}", type="viz", payload=output)
        spec = lower_to_spec(ctx, viz)
        data, reduced = self._chart_data(ctx, spec)
        output = VizOutput(
            type="chart",
            target=viz.target,
            spec=spec,
            vega=emit_vega_lite(spec, data_records=data.to_records()),
            reduced=reduced,
        )
        return Artifact(name=f"viz#{task.id}", type="viz", payload=output)

    def _estimated_rows(self, ctx: EvalContext, target: str) -> int:
        kind = self.catalog.kind_of(target)
        if kind == "table":
            return self.catalog.tables[target].row_count
        if kind == "lazy":
            return self.catalog.lazy_tables[target].row_count
        return resolve_relation(ctx, target).row_count

    def _chart_data(self, ctx: EvalContext, spec: ChartSpec) -> tuple[Relation, bool]:
        """Backing rows for a chart, AM4-reduced when the pass applies."""
        x_field = spec.get("encoding.x.field")
        y_field = spec.get("encoding.y.field")
        x_type = spec.get("encoding.x.type")
        y_type = spec.get("encoding.y.type")
        color_field = spec.get("encoding.color.field")
        mark = spec.get("mark")
        mark_type = mark.get("type") if isinstance(mark, dict) else mark
        kind = spec.kind
        if kind is None:
            kind = {"line": VizKind.MULTI_LINE if color_field else VizKind.LINE, "area": VizKind.AREA}.get(
                mark_type
            )

        rewrite = None
        domain = spec.get("encoding.x.scale.domain")
        if (
            kind in (VizKind.LINE, VizKind.MULTI_LINE, VizKind.AREA)
            and isinstance(domain, list)
            and len(domain) == 2
            and isinstance(x_field, str)
            and isinstance(y_field, str)
        ):
            lb, ub = (_domain_bound(v, x_type) for v in domain)
            if lb is not None and ub is not None and ub >= lb:
                params = Am4Params(
                    width=int(spec.get("width") or self.canvas_width * self.pixel_ratio),
                    lb=lb,
                    ub=ub,
                    x_field=x_field,
                    y_field=y_field,
                )
                rewrite = inject_am4(
                    target=spec.target,
                    kind=kind,
                    x_field=x_field,
                    y_field=y_field,
                    x_type=str(x_type),
                    y_type=str(y_type),
                    params=params,
                    estimated_rows=self._estimated_rows(ctx, spec.target),
                    color_field=color_field if kind is VizKind.MULTI_LINE else None,
                )
        if rewrite is not None:
            scan_ctx = EvalContext(
                catalog=ctx.catalog,
                arena=rewrite.desc.arena,
                now_micros=ctx.now_micros,
                scans=self._am4_scans(spec.target, x_field, y_field, color_field, ctx),
            )
            aggregates = eval_select(scan_ctx, rewrite.query_root)
            return am4_points(aggregates, x_field, y_field, rewrite.color_field), True
        return resolve_relation(ctx, spec.target), False

    def _am4_scans(self, target, x_field, y_field, color_field, ctx):
        """Project the aggregation's scan onto the fields it touches."""
        scans = dict(ctx.scans)
        if self.catalog.kind_of(target) == "lazy":
            columns = [c for c in (x_field, y_field, color_field) if c]
            scans[target] = PushedScan(projection=sorted(set(columns)))
        return scans

    def _run_drop(self, task: Task) -> Optional[Artifact]:
        if task.kind in (TaskKind.DROP_TABLE, TaskKind.DROP_VIEW):
            self.catalog.drop(task.drop_target)
        # DROP_VIZ and DROP_BUFFER release artifacts held by the previous
        # generation's tasks; the state is gone with the generation swap.
        return None

    # -- reads ---------------------------------------------------------------------

    def outputs(self) -> list[dict]:
        """Per-statement artifacts of the latest generation."""
        if self.desc is None or self.graph is None:
            return []
        out = []
        for info in self.desc.statements:
            tid = self.graph.task_for_statement.get(info.index)
            if tid is None:
                continue
            task = self.graph.tasks[tid]
            entry: dict = {
                "statement": info.index,
                "kind": info.kind.name if info.kind else None,
                "status": task.status.name,
                "synthetic": info.synthetic,
                "error": task.error,
            }
            payload = task.artifact.payload if task.artifact else None
            if isinstance(payload, VizOutput):
                if payload.type == "table":
                    entry["table"] = payload.table
                else:
                    entry["chart"] = payload.vega
                    entry["reduced"] = payload.reduced
            elif isinstance(payload, Relation):
                entry["relation"] = {
                    "schema": [[n, t.value] for n, t in payload.schema],
                    "rows": payload.slice(0, 100).to_records(),
                    "row_count": payload.row_count,
                }
            elif task.kind is TaskKind.INPUT:
                entry["input"] = {
                    "name": info.produces,
                    "type": info.input_decl.sql_type.name,
                    "component": info.input_decl.component,
                }
            out.append(entry)
        return out

    def table_page(self, name: str, offset: int, limit: Optional[int], readahead: int = 0) -> dict:
        """One page of a relation; lazy tables go through limit/offset
        pushdown and read only covering row groups."""
        if self.desc is None:
            raise EngineError("no script loaded")
        ctx = self._ctx()
        relation = page_rows(ctx, name, offset, limit, readahead)
        return {
            "relation": name,
            "offset": offset,
            "schema": [[n, t.value] for n, t in relation.schema],
            "rows": relation.to_records(),
        }

    def expand_statement(self, statement_index: int) -> dict:
        """Verbose replacement text for a short-form VISUALIZE statement,
        with the source span to splice it into."""
        if self.desc is None or self.graph is None:
            raise EngineError("no script loaded")
        if not 0 <= statement_index < len(self.desc.statements):
            raise EngineError(f"no statement {statement_index}")
        info = self.desc.statements[statement_index]
        if info.kind is not StatementKind.VISUALIZE or info.viz is None:
            raise EngineError("only VISUALIZE statements expand")
        tid = self.graph.task_for_statement.get(statement_index)
        task = self.graph.tasks.get(tid) if tid is not None else None
        payload = task.artifact.payload if task and task.artifact else None
        if not isinstance(payload, VizOutput) or payload.spec is None:
            raise EngineError("statement has no lowered chart specification")
        text = expand_statement_text(payload.target, payload.spec)
        return {"statement": statement_index, "text": text, "loc": list(info.loc)}

    # -- state dumps (artifact-equality oracles) ------------------------------------

    def catalog_dump(self) -> str:
        """Deterministic dump of all named relations (views evaluated)."""
        ctx = self._ctx()
        parts = []
        for name in self.catalog.relation_names():
            try:
                relation = resolve_relation(ctx, name)
                parts.append(f"== {name} ==\n{relation.dump()}")
            except ExecError as err:
                parts.append(f"== {name} ==\n<blocked: {err}>")
        return "\n".join(parts)

    def outputs_dump(self) -> str:
        """Deterministic dump of chart specs and table artifacts, keyed by
        produced names rather than task ids."""
        import json as _json

        parts = []
        for entry in self.outputs():
            body = {k: v for k, v in entry.items() if k not in ("statement", "status")}
            parts.append(_json.dumps(body, sort_keys=True, default=str))
        return "\n".join(parts)


def _domain_bound(value: object, enc_type: object) -> Optional[float]:
    """A numeric x-bound from a spec domain entry (ISO text for temporal)."""
    if isinstance(value, str):
        try:
            return float(iso_to_micros(value))
        except ValueError:
            return None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    return None


def _collect_settings(desc: ProgramDescription) -> dict[str, object]:
    merged: dict[str, object] = {}
    for info in desc.statements:
        if info.kind is StatementKind.SET:
            merged.update(info.settings.flatten())
    return merged


def _coerce_input(tag: TypeTag, value: object) -> object:
    if value is None:
        return None
    if tag is TypeTag.VARCHAR or tag is TypeTag.FILE:
        return str(value)
    if tag is TypeTag.BIGINT:
        return int(value)
    if tag is TypeTag.DOUBLE:
        return float(value)
    if tag is TypeTag.BOOLEAN:
        if isinstance(value, str):
            return value.strip().lower() in ("true", "t", "1", "yes")
        return bool(value)
    if tag is TypeTag.TIMESTAMP:
        if isinstance(value, str):
            return iso_to_micros(value)
        return int(value)
    if tag is TypeTag.INTERVAL:
        if isinstance(value, str):
            text = value.strip()
            parts = text.split()
            if len(parts) == 2 and parts[0].lstrip("-").isdigit():
                return interval_micros(int(parts[0]), parts[1])
            return int(text)
        return int(value)
    raise EngineError(f"unsupported input type {tag}")
