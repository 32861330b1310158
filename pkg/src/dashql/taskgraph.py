"""Tasks, the adaptive task graph, and the scheduler.

Statements derive tasks; script diffs derive graph updates: applicable
tasks migrate with their artifacts and stay COMPLETED, updated statements
get an undo/redo pair, deleted statements get undo tasks, and new
statements get fresh tasks. Independent tasks run concurrently; a failed
task skips its dependents and the run continues elsewhere.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum, auto
from typing import Callable, Optional

from .analyzer import ProgramDescription
from .differ import ScriptDiff, Verdict
from .parser import StatementKind


class TaskKind(Enum):
    SET = auto()
    INPUT = auto()
    FETCH = auto()
    LOAD = auto()
    CREATE_TABLE = auto()
    CREATE_VIEW = auto()
    VISUALIZE = auto()
    QUERY = auto()
    DROP_TABLE = auto()
    DROP_VIEW = auto()
    DROP_VIZ = auto()
    DROP_BUFFER = auto()


UNDO_KINDS = {
    TaskKind.DROP_TABLE,
    TaskKind.DROP_VIEW,
    TaskKind.DROP_VIZ,
    TaskKind.DROP_BUFFER,
}

_STATEMENT_TASK_KIND = {
    StatementKind.SET: TaskKind.SET,
    StatementKind.INPUT: TaskKind.INPUT,
    StatementKind.FETCH: TaskKind.FETCH,
    StatementKind.LOAD: TaskKind.LOAD,
    StatementKind.CREATE_TABLE_AS: TaskKind.CREATE_TABLE,
    StatementKind.CREATE_VIEW_AS: TaskKind.CREATE_VIEW,
    StatementKind.VISUALIZE: TaskKind.VISUALIZE,
    StatementKind.SELECT: TaskKind.QUERY,
}

_UNDO_FOR = {
    TaskKind.FETCH: TaskKind.DROP_BUFFER,
    TaskKind.LOAD: TaskKind.DROP_TABLE,
    TaskKind.CREATE_TABLE: TaskKind.DROP_TABLE,
    TaskKind.CREATE_VIEW: TaskKind.DROP_VIEW,
    TaskKind.VISUALIZE: TaskKind.DROP_VIZ,
}


class TaskStatus(Enum):
    PENDING = auto()
    RUNNING = auto()
    COMPLETED = auto()
    FAILED = auto()
    SKIPPED = auto()


@dataclass
class Artifact:
    name: str
    type: str  # table | view | lazy | buffer | viz | value | result
    payload: object = None


@dataclass
class Task:
    id: int
    kind: TaskKind
    origin_statement: Optional[int]  # analyzed statement index, None for undo tasks
    deps: set[int] = field(default_factory=set)
    status: TaskStatus = TaskStatus.PENDING
    artifact: Optional[Artifact] = None
    error: Optional[str] = None
    migrated: bool = False
    replaces: Optional[str] = None  # artifact name this redo overwrites in place
    drop_target: Optional[str] = None  # undo tasks: artifact name to drop
    drop_artifact: Optional[Artifact] = None
    duration_ms: float = 0.0

    @property
    def is_undo(self) -> bool:
        return self.kind in UNDO_KINDS


class GraphError(Exception):
    pass


class TaskGraph:
    def __init__(self, generation: int):
        self.generation = generation
        self.tasks: dict[int, Task] = {}
        self.artifact_owner: dict[str, int] = {}
        self.task_for_statement: dict[int, int] = {}

    def add(self, task: Task) -> Task:
        self.tasks[task.id] = task
        if task.origin_statement is not None:
            self.task_for_statement[task.origin_statement] = task.id
        return task

    def register_artifact(self, name: str, task_id: int) -> None:
        owner = self.artifact_owner.get(name)
        if owner is not None and owner != task_id:
            raise GraphError(f"artifact '{name}' already owned by task {owner}")
        self.artifact_owner[name] = task_id

    def artifact_by_name(self, name: str) -> Optional[Artifact]:
        owner = self.artifact_owner.get(name)
        if owner is None:
            return None
        return self.tasks[owner].artifact

    def topo_order(self) -> list[int]:
        pending = {tid: set(t.deps) for tid, t in self.tasks.items()}
        done: set[int] = set()
        order: list[int] = []
        while pending:
            ready = sorted(tid for tid, deps in pending.items() if deps <= done)
            if not ready:
                raise GraphError("task graph has a cycle")
            for tid in ready:
                order.append(tid)
                done.add(tid)
                del pending[tid]
        return order

    def executable_tasks(self) -> list[Task]:
        return [t for t in self.tasks.values() if not t.migrated]

    def dependents(self) -> dict[int, set[int]]:
        out: dict[int, set[int]] = {tid: set() for tid in self.tasks}
        for task in self.tasks.values():
            for dep in task.deps:
                out[dep].add(task.id)
        return out

    def transitive_dependents(self, roots: set[int]) -> set[int]:
        forward = self.dependents()
        seen = set(roots)
        stack = list(roots)
        while stack:
            for nxt in forward[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen


def _statement_tasks(desc: ProgramDescription) -> list[int]:
    """Statements that derive a task: parsed fine and not blocked."""
    return [
        s.index
        for s in desc.statements
        if s.root is not None and not s.blocked and s.kind in _STATEMENT_TASK_KIND
    ]


def derive_initial(desc: ProgramDescription, id_gen: Callable[[], int]) -> TaskGraph:
    """One PENDING task per statement; edges mirror the dependency DAG."""
    graph = TaskGraph(generation=0)
    eligible = set(_statement_tasks(desc))
    for idx in sorted(eligible):
        info = desc.statements[idx]
        graph.add(Task(id=id_gen(), kind=_STATEMENT_TASK_KIND[info.kind], origin_statement=idx))
    for producer, consumer in desc.dependency_edges:
        if producer in eligible and consumer in eligible:
            graph.tasks[graph.task_for_statement[consumer]].deps.add(
                graph.task_for_statement[producer]
            )
    for idx in sorted(eligible):
        info = desc.statements[idx]
        if info.produces:
            graph.register_artifact(info.produces, graph.task_for_statement[idx])
    return graph


def applicability(prev_graph: TaskGraph, prev_desc: ProgramDescription, diff: ScriptDiff) -> set[int]:
    """Prev tasks whose state can migrate: statement EQUAL, completed, no
    transitive dependency on an inapplicable task, and no later
    inapplicable task that successfully modified the same output."""
    by_prev = diff.by_prev()
    applicable: set[int] = set()
    order = prev_graph.topo_order()
    for tid in order:
        task = prev_graph.tasks[tid]
        if task.is_undo or task.origin_statement is None:
            continue
        entry = by_prev.get(task.origin_statement)
        if entry is None or entry.verdict is not Verdict.EQUAL:
            continue
        if task.status is not TaskStatus.COMPLETED:
            continue
        if not all(d in applicable for d in task.deps if not prev_graph.tasks[d].is_undo):
            continue
        applicable.add(tid)

    # Backward pass: a later inapplicable task that completed a write to the
    # same artifact name invalidates the earlier owner's state.
    position = {tid: i for i, tid in enumerate(order)}
    changed = True
    while changed:
        changed = False
        for tid in list(applicable):
            task = prev_graph.tasks[tid]
            name = task.artifact.name if task.artifact else None
            if name is None:
                continue
            for other_id in order:
                if position[other_id] <= position[tid] or other_id in applicable:
                    continue
                other = prev_graph.tasks[other_id]
                if (
                    other.status is TaskStatus.COMPLETED
                    and other.artifact is not None
                    and other.artifact.name == name
                ):
                    applicable.discard(tid)
                    changed = True
                    break
        if changed:
            # Dependents of a freshly inapplicable task lose applicability too.
            for tid in list(applicable):
                task = prev_graph.tasks[tid]
                if not all(d in applicable for d in task.deps if not prev_graph.tasks[d].is_undo):
                    applicable.discard(tid)
    return applicable


def derive_next(
    prev_graph: TaskGraph,
    prev_desc: ProgramDescription,
    diff: ScriptDiff,
    next_desc: ProgramDescription,
    id_gen: Callable[[], int],
) -> TaskGraph:
    """The next generation: migrated tasks stay COMPLETED with their
    artifacts; DELETED statements emit undo tasks; UPDATED statements emit
    undo+redo pairs; EQUAL-but-inapplicable statements re-create their
    output in place; NEW statements get fresh tasks."""
    applicable = applicability(prev_graph, prev_desc, diff)
    graph = TaskGraph(generation=prev_graph.generation + 1)
    by_prev = diff.by_prev()
    by_next = diff.by_next()
    eligible = set(_statement_tasks(next_desc))

    # Undo tasks: deleted statements, updated statements' old output, and
    # stale catalog state (tables, views, lazy scans) of equal statements
    # that lost applicability through their dependencies. The drop runs
    # even when the re-creation later fails, matching a from-scratch run.
    undo_for_prev: dict[int, Task] = {}  # prev task id -> undo task
    for entry in diff.entries:
        if entry.prev_idx is None:
            continue
        prev_tid = prev_graph.task_for_statement.get(entry.prev_idx)
        if prev_tid is None:
            continue
        prev_task = prev_graph.tasks[prev_tid]
        undo_kind = _UNDO_FOR.get(prev_task.kind)
        if (
            undo_kind is None
            or prev_task.status is not TaskStatus.COMPLETED
            or prev_task.artifact is None
        ):
            continue
        next_survives = entry.next_idx is not None and entry.next_idx in eligible
        if entry.verdict is Verdict.EQUAL and next_survives:
            if prev_tid in applicable:
                continue
            if prev_task.artifact.type not in ("table", "view", "lazy"):
                continue  # task-held artifacts are replaced in place
        elif entry.verdict is Verdict.UPDATED and next_survives:
            pass  # undo + redo pair
        elif entry.verdict is Verdict.NEW:
            continue
        # remaining cases: DELETED, or mapped to a statement that derives
        # no task (e.g. blocked duplicate) - state loses its owner
        undo = Task(
            id=id_gen(),
            kind=undo_kind,
            origin_statement=None,
            drop_target=prev_task.artifact.name,
            drop_artifact=prev_task.artifact,
        )
        graph.add(undo)
        undo_for_prev[prev_tid] = undo

    # Undo ordering: dropping a consumer's artifact precedes dropping its
    # producer's ("drop the view before the table it reads").
    for producer, consumer in prev_desc.dependency_edges:
        p_tid = prev_graph.task_for_statement.get(producer)
        c_tid = prev_graph.task_for_statement.get(consumer)
        if p_tid in undo_for_prev and c_tid in undo_for_prev:
            undo_for_prev[p_tid].deps.add(undo_for_prev[c_tid].id)

    # Tasks for next-script statements.
    for idx in sorted(eligible):
        info = next_desc.statements[idx]
        kind = _STATEMENT_TASK_KIND[info.kind]
        entry = by_next.get(idx)
        prev_tid = (
            prev_graph.task_for_statement.get(entry.prev_idx)
            if entry is not None and entry.prev_idx is not None
            else None
        )
        if (
            entry is not None
            and entry.verdict is Verdict.EQUAL
            and prev_tid is not None
            and prev_tid in applicable
        ):
            prev_task = prev_graph.tasks[prev_tid]
            task = Task(
                id=id_gen(),
                kind=kind,
                origin_statement=idx,
                status=TaskStatus.COMPLETED,
                artifact=prev_task.artifact,
                migrated=True,
            )
            graph.add(task)
            continue
        task = Task(id=id_gen(), kind=kind, origin_statement=idx)
        if prev_tid in undo_for_prev:
            # Redo waits for its own undo (covers updated statements and
            # equal ones whose catalog state was dropped).
            task.deps.add(undo_for_prev[prev_tid].id)
        elif (
            entry is not None
            and entry.verdict is Verdict.EQUAL
            and prev_tid is not None
            and prev_graph.tasks[prev_tid].status is TaskStatus.COMPLETED
            and prev_graph.tasks[prev_tid].artifact is not None
        ):
            # Task-held artifacts (chart specs, buffers) are replaced when
            # the redo runs; no separate undo task.
            task.replaces = prev_graph.tasks[prev_tid].artifact.name
        graph.add(task)

    # Data edges from the next script.
    for producer, consumer in next_desc.dependency_edges:
        if producer in eligible and consumer in eligible:
            graph.tasks[graph.task_for_statement[consumer]].deps.add(
                graph.task_for_statement[producer]
            )

    # Undo tasks run before any re-execution: a redo must observe the
    # post-undo catalog (exactly what a from-scratch run would see).
    undo_ids = {u.id for u in undo_for_prev.values()}
    for idx in sorted(eligible):
        task = graph.tasks[graph.task_for_statement[idx]]
        if not task.migrated:
            task.deps |= undo_ids

    for idx in sorted(eligible):
        info = next_desc.statements[idx]
        if info.produces:
            graph.register_artifact(info.produces, graph.task_for_statement[idx])
    return graph


# -- scheduler -----------------------------------------------------------------


EventCallback = Callable[[Task, TaskStatus], None]


@dataclass
class RunReport:
    generation: int
    tasks: list[dict] = field(default_factory=list)

    @property
    def executed(self) -> list[dict]:
        return [t for t in self.tasks if not t["migrated"]]

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for t in self.tasks:
            out[t["status"]] = out.get(t["status"], 0) + 1
        return out


def run(
    graph: TaskGraph,
    runtime: Callable[[Task], Optional[Artifact]],
    workers: int = 4,
    on_event: Optional[EventCallback] = None,
) -> RunReport:
    """Execute all runnable tasks. A task starts when every dependency is
    COMPLETED; failures propagate SKIPPED to dependents; independent
    branches keep running."""
    lock = threading.Lock()
    forward = graph.dependents()
    remaining: dict[int, set[int]] = {}
    for tid, task in graph.tasks.items():
        remaining[tid] = {
            d for d in task.deps if graph.tasks[d].status is not TaskStatus.COMPLETED
        }

    def emit(task: Task, status: TaskStatus) -> None:
        if on_event is None:
            return
        try:
            on_event(task, status)
        except Exception:
            pass  # a broken listener must not take the run down

    def skip_dependents(tid: int) -> list[Task]:
        skipped = []
        stack = [tid]
        while stack:
            for nxt in forward[stack.pop()]:
                task = graph.tasks[nxt]
                if task.status is TaskStatus.PENDING:
                    task.status = TaskStatus.SKIPPED
                    task.error = f"dependency task {tid} did not complete"
                    skipped.append(task)
                    stack.append(nxt)
        return skipped

    done_event = threading.Event()
    pool = ThreadPoolExecutor(max_workers=max(1, workers))

    def all_settled_locked() -> bool:
        return not any(
            t.status in (TaskStatus.PENDING, TaskStatus.RUNNING) for t in graph.tasks.values()
        )

    def finish(tid: int, status: TaskStatus, error: Optional[str]) -> None:
        newly_ready: list[int] = []
        skipped: list[Task] = []
        with lock:
            task = graph.tasks[tid]
            task.status = status
            task.error = error
            if status is TaskStatus.COMPLETED:
                for nxt in forward[tid]:
                    remaining[nxt].discard(tid)
                    if not remaining[nxt] and graph.tasks[nxt].status is TaskStatus.PENDING:
                        newly_ready.append(nxt)
            else:
                skipped = skip_dependents(tid)
        emit(graph.tasks[tid], status)
        for s in skipped:
            emit(s, TaskStatus.SKIPPED)
        for nxt in newly_ready:
            pool.submit(body, nxt)
        with lock:
            if all_settled_locked():
                done_event.set()

    def body(tid: int) -> None:
        task = graph.tasks[tid]
        with lock:
            if task.status is not TaskStatus.PENDING:
                return
            task.status = TaskStatus.RUNNING
        emit(task, TaskStatus.RUNNING)
        start = time.perf_counter()
        try:
            artifact = runtime(task)
            task.artifact = artifact if artifact is not None else task.artifact
            task.duration_ms = (time.perf_counter() - start) * 1000
            finish(tid, TaskStatus.COMPLETED, None)
        except Exception as err:  # per-task failure keeps the run going
            task.duration_ms = (time.perf_counter() - start) * 1000
            finish(tid, TaskStatus.FAILED, str(err))

    with lock:
        # Failures left over from an earlier run of this generation
        # (e.g. after an input change) still block their dependents.
        for tid, task in list(graph.tasks.items()):
            if task.status in (TaskStatus.FAILED, TaskStatus.SKIPPED):
                skip_dependents(tid)
        ready = [
            tid
            for tid, task in graph.tasks.items()
            if task.status is TaskStatus.PENDING and not remaining[tid]
        ]
        if all_settled_locked():
            done_event.set()
    for tid in ready:
        pool.submit(body, tid)
    done_event.wait()
    pool.shutdown(wait=True)

    report = RunReport(generation=graph.generation)
    for tid in graph.topo_order():
        task = graph.tasks[tid]
        report.tasks.append(
            {
                "id": task.id,
                "kind": task.kind.name,
                "origin_statement": task.origin_statement,
                "status": task.status.name,
                "migrated": task.migrated,
                "artifact": task.artifact.name if task.artifact else None,
                "drop_target": task.drop_target,
                "error": task.error,
                "duration_ms": round(task.duration_ms, 3),
            }
        )
    return report
