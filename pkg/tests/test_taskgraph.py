"""Task derivation, applicability, graph migration, and scheduling."""

import threading
import time

from dashql.analyzer import analyze
from dashql.differ import diff_scripts
from dashql.parser import parse_script
from dashql.taskgraph import (
    Artifact,
    Task,
    TaskGraph,
    TaskKind,
    TaskStatus,
    applicability,
    derive_initial,
    derive_next,
    run,
)

from conftest import FIG3_NEXT, FIG3_PREV


def counter():
    state = {"n": 0}

    def next_id():
        state["n"] += 1
        return state["n"]

    return next_id


def desc_of(text):
    return analyze(parse_script(text))


def completed(graph, desc):
    """Pretend a successful run: tasks completed, artifacts registered."""
    for tid, task in graph.tasks.items():
        task.status = TaskStatus.COMPLETED
        info = desc.statements[task.origin_statement]
        name = info.produces or f"anon#{tid}"
        task.artifact = Artifact(name=name, type=info.produced_type or "result")
    return graph


def test_derive_initial_fig3():
    desc = desc_of(FIG3_PREV)
    graph = derive_initial(desc, counter())
    kinds = [graph.tasks[graph.task_for_statement[i]].kind for i in range(6)]
    assert kinds == [
        TaskKind.INPUT,
        TaskKind.FETCH,
        TaskKind.LOAD,
        TaskKind.CREATE_VIEW,
        TaskKind.VISUALIZE,
        TaskKind.VISUALIZE,
    ]
    assert all(t.status is TaskStatus.PENDING for t in graph.tasks.values())
    view_task = graph.tasks[graph.task_for_statement[3]]
    assert view_task.deps == {
        graph.task_for_statement[0],
        graph.task_for_statement[2],
    }


def test_derive_initial_empty_script():
    graph = derive_initial(desc_of(""), counter())
    assert graph.tasks == {}


def test_derive_initial_three_stage_chain():
    desc = desc_of(
        'FETCH data FROM "test://x.rgf";\nLOAD t FROM data USING RGF;\nVISUALIZE t USING TABLE;'
    )
    graph = derive_initial(desc, counter())
    chain = [graph.tasks[graph.task_for_statement[i]] for i in range(3)]
    assert chain[0].deps == set()
    assert chain[1].deps == {chain[0].id}
    assert chain[2].deps == {chain[1].id}


def test_applicability_fig3():
    prev_desc = desc_of(FIG3_PREV)
    next_desc = desc_of(FIG3_NEXT)
    prev_graph = completed(derive_initial(prev_desc, counter()), prev_desc)
    diff = diff_scripts(prev_desc, next_desc)
    applicable = applicability(prev_graph, prev_desc, diff)
    names = {
        prev_graph.tasks[t].kind.name for t in applicable
    }
    assert names == {"INPUT", "FETCH", "LOAD"}
    # view is UPDATED; both visualizations depend on it transitively
    assert prev_graph.task_for_statement[3] not in applicable
    assert prev_graph.task_for_statement[4] not in applicable
    assert prev_graph.task_for_statement[5] not in applicable


def test_applicability_all_equal():
    desc = desc_of(FIG3_PREV)
    graph = completed(derive_initial(desc, counter()), desc)
    diff = diff_scripts(desc, desc_of(FIG3_PREV))
    assert applicability(graph, desc, diff) == set(graph.tasks)


def test_applicability_chain_rule():
    text = (
        "CREATE TABLE a AS SELECT 1 AS x;\n"
        "CREATE TABLE b AS SELECT x FROM a;\n"
        "CREATE TABLE c AS SELECT x FROM b;"
    )
    prev_desc = desc_of(text)
    next_desc = desc_of(text.replace("SELECT x FROM a", "SELECT x + 1 AS x FROM a"))
    graph = completed(derive_initial(prev_desc, counter()), prev_desc)
    diff = diff_scripts(prev_desc, next_desc)
    applicable = applicability(graph, prev_desc, diff)
    assert applicable == {graph.task_for_statement[0]}


def test_failed_tasks_are_not_applicable():
    desc = desc_of("CREATE TABLE a AS SELECT 1 AS x;")
    graph = derive_initial(desc, counter())
    for task in graph.tasks.values():
        task.status = TaskStatus.FAILED
    diff = diff_scripts(desc, desc_of("CREATE TABLE a AS SELECT 1 AS x;"))
    assert applicability(graph, desc, diff) == set()


def test_fig3_derive_next_exact_task_set():
    prev_desc = desc_of(FIG3_PREV)
    next_desc = desc_of(FIG3_NEXT)
    prev_graph = completed(derive_initial(prev_desc, counter()), prev_desc)
    diff = diff_scripts(prev_desc, next_desc)
    graph = derive_next(prev_graph, prev_desc, diff, next_desc, counter())

    migrated = sorted(t.kind.name for t in graph.tasks.values() if t.migrated)
    assert migrated == ["FETCH", "INPUT", "LOAD"]
    assert all(
        t.status is TaskStatus.COMPLETED and t.artifact is not None
        for t in graph.tasks.values()
        if t.migrated
    )

    executable = [t for t in graph.tasks.values() if not t.migrated]
    kinds = sorted(t.kind.name for t in executable)
    assert kinds == ["CREATE_VIEW", "DROP_VIEW", "DROP_VIZ", "VISUALIZE"]

    # undo ordering: the dependent visualization drops before the view,
    # and the re-created view waits for the old view's drop
    drop_viz = next(t for t in executable if t.kind is TaskKind.DROP_VIZ)
    drop_view = next(t for t in executable if t.kind is TaskKind.DROP_VIEW)
    create_view = next(t for t in executable if t.kind is TaskKind.CREATE_VIEW)
    viz = next(t for t in executable if t.kind is TaskKind.VISUALIZE)
    assert drop_viz.id in drop_view.deps
    assert drop_view.id in create_view.deps
    assert create_view.id in viz.deps
    assert drop_view.drop_target == "grouped"
    # undo tasks carry no statement in the new script
    assert drop_viz.origin_statement is None and drop_view.origin_statement is None


def test_derive_next_noop_migrates_everything():
    desc = desc_of(FIG3_PREV)
    graph = completed(derive_initial(desc, counter()), desc)
    next_desc = desc_of(FIG3_PREV)
    diff = diff_scripts(desc, next_desc)
    graph2 = derive_next(graph, desc, diff, next_desc, counter())
    assert all(t.migrated for t in graph2.tasks.values())
    report = run(graph2, lambda task: None)
    assert all(t["status"] == "COMPLETED" for t in report.tasks)


def test_deleting_producer_drops_consumers_first():
    text = "CREATE TABLE t AS SELECT 1 AS a;\nVISUALIZE t USING TABLE;"
    prev_desc = desc_of(text)
    graph = completed(derive_initial(prev_desc, counter()), prev_desc)
    next_desc = desc_of("")
    diff = diff_scripts(prev_desc, next_desc)
    graph2 = derive_next(graph, prev_desc, diff, next_desc, counter())
    kinds = sorted(t.kind.name for t in graph2.tasks.values())
    assert kinds == ["DROP_TABLE", "DROP_VIZ"]
    drop_table = next(t for t in graph2.tasks.values() if t.kind is TaskKind.DROP_TABLE)
    drop_viz = next(t for t in graph2.tasks.values() if t.kind is TaskKind.DROP_VIZ)
    assert drop_viz.id in drop_table.deps


def test_equal_inapplicable_task_recreates_in_place():
    text = "CREATE TABLE t AS SELECT 1 AS a;\nVISUALIZE t USING TABLE;"
    prev_desc = desc_of(text)
    graph = completed(derive_initial(prev_desc, counter()), prev_desc)
    next_desc = desc_of("CREATE TABLE t AS SELECT 2 AS a;\nVISUALIZE t USING TABLE;")
    diff = diff_scripts(prev_desc, next_desc)
    graph2 = derive_next(graph, prev_desc, diff, next_desc, counter())
    viz = next(t for t in graph2.tasks.values() if t.kind is TaskKind.VISUALIZE)
    assert not viz.migrated
    assert viz.replaces is not None  # no separate DROP_VIZ for it
    assert sorted(t.kind.name for t in graph2.tasks.values() if t.is_undo) == ["DROP_TABLE"]


def test_artifact_registry_rejects_two_owners():
    desc = desc_of("CREATE TABLE t AS SELECT 1 AS a;")
    graph = derive_initial(desc, counter())
    try:
        graph.register_artifact("t", 999)
    except Exception as err:
        assert "already owned" in str(err)
    else:
        raise AssertionError("expected a registry conflict")


# -- scheduler ------------------------------------------------------------------


def chain_graph(statuses=None):
    desc = desc_of(
        'FETCH data FROM "test://x.rgf";\nLOAD t FROM data USING RGF;\nVISUALIZE t USING TABLE;'
    )
    return derive_initial(desc, counter()), desc


def test_failed_task_skips_dependents():
    graph, desc = chain_graph()

    def runtime(task):
        if task.kind is TaskKind.LOAD:
            raise RuntimeError("boom")
        return None

    report = run(graph, runtime)
    by_kind = {t["kind"]: t["status"] for t in report.tasks}
    assert by_kind == {"FETCH": "COMPLETED", "LOAD": "FAILED", "VISUALIZE": "SKIPPED"}
    statuses = [t["status"] for t in report.tasks]
    assert statuses.count("FAILED") == 1


def test_independent_branch_continues_after_failure():
    desc = desc_of("CREATE TABLE a AS SELECT 1 AS x;\nCREATE TABLE b AS SELECT 2 AS x;")
    graph = derive_initial(desc, counter())

    def runtime(task):
        info = desc.statements[task.origin_statement]
        if info.produces == "a":
            raise RuntimeError("boom")
        return None

    report = run(graph, runtime)
    statuses = {desc.statements[t["origin_statement"]].produces: t["status"] for t in report.tasks}
    assert statuses == {"a": "FAILED", "b": "COMPLETED"}


def test_diamond_runs_middle_tasks_concurrently():
    ids = counter()
    graph = TaskGraph(generation=1)
    a = graph.add(Task(id=ids(), kind=TaskKind.QUERY, origin_statement=None))
    b = graph.add(Task(id=ids(), kind=TaskKind.QUERY, origin_statement=None, deps={a.id}))
    c = graph.add(Task(id=ids(), kind=TaskKind.QUERY, origin_statement=None, deps={a.id}))
    d = graph.add(Task(id=ids(), kind=TaskKind.QUERY, origin_statement=None, deps={b.id, c.id}))

    spans = {}
    lock = threading.Lock()

    def runtime(task):
        start = time.perf_counter()
        if task.id in (b.id, c.id):
            time.sleep(0.15)
        with lock:
            spans[task.id] = (start, time.perf_counter())
        return None

    report = run(graph, runtime, workers=2)
    assert all(t["status"] == "COMPLETED" for t in report.tasks)
    (b0, b1), (c0, c1) = spans[b.id], spans[c.id]
    assert max(b0, c0) < min(b1, c1), "middle tasks must overlap"
    assert spans[d.id][0] >= max(b1, c1)


def test_events_running_precedes_completion():
    graph, desc = chain_graph()
    events = []

    def on_event(task, status):
        events.append((task.id, status.name))

    run(graph, lambda t: None, on_event=on_event)
    for tid in graph.tasks:
        sequence = [s for t, s in events if t == tid]
        assert sequence.index("RUNNING") < sequence.index("COMPLETED")


def test_no_completed_task_reexecutes_within_generation():
    graph, desc = chain_graph()
    runs = []
    run(graph, lambda t: runs.append(t.id))
    run(graph, lambda t: runs.append(t.id))  # second run: nothing PENDING
    assert len(runs) == 3
