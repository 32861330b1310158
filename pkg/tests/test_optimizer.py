"""AM4/M4 kernels, AM4 injection, paging pushdown, and materialization."""

import random

import pytest

from dashql.analyzer import analyze
from dashql.executor import EvalContext, eval_select
from dashql.optimizer import (
    Am4Params,
    am4_native,
    am4_points,
    decide_materialization,
    inject_am4,
    m4_oracle,
    pushdown_limit_offset,
)
from dashql.parser import VizKind, parse_script
from dashql.relation import Catalog, DType, LazyTable, Relation


def brute_bin_extrema(xs, ys, params):
    bins = {}
    for x, y in zip(xs, ys):
        if x is None or y is None:
            continue
        if params.ub == params.lb:
            k = 0
        else:
            raw = round(float(params.width) * (float(x) - float(params.lb)) / (float(params.ub) - float(params.lb)))
            k = int(min(max(raw, 0), params.width))
        slot = bins.setdefault(k, [None, None, None, None])
        slot[0] = x if slot[0] is None else min(slot[0], x)
        slot[1] = x if slot[1] is None else max(slot[1], x)
        slot[2] = y if slot[2] is None else min(slot[2], y)
        slot[3] = y if slot[3] is None else max(slot[3], y)
    return bins


def output_bin_extrema(relation, params):
    out = {}
    for x, y in zip(relation.column(params.x_field), relation.column(params.y_field)):
        raw = round(float(params.width) * (float(x) - float(params.lb)) / (float(params.ub) - float(params.lb))) if params.ub != params.lb else 0
        k = int(min(max(raw, 0), params.width))
        slot = out.setdefault(k, [None, None, None, None])
        slot[0] = x if slot[0] is None else min(slot[0], x)
        slot[1] = x if slot[1] is None else max(slot[1], x)
        slot[2] = y if slot[2] is None else min(slot[2], y)
        slot[3] = y if slot[3] is None else max(slot[3], y)
    return out


def test_constant_series_emits_at_most_two_points_per_bin():
    xs = [float(i) for i in range(5000)]
    ys = [42.0] * 5000
    params = Am4Params(width=10, lb=0.0, ub=4999.0)
    out = am4_native(xs, ys, params)
    assert out.row_count <= 2 * 11
    assert out.row_count < 5000
    assert set(out.column("y")) == {42.0}


def test_three_points_one_bin_dedup():
    xs, ys = [0.0, 1.0, 2.0], [5.0, 9.0, 1.0]
    params = Am4Params(width=1, lb=0.0, ub=2.0)
    out = am4_native(xs, ys, params)
    points = set(zip(out.column("x"), out.column("y")))
    # bin 0 holds x=0 only; bin 1 holds x in {1, 2}
    assert points == {(0.0, 5.0), (1.0, 9.0), (2.0, 1.0)}


def test_equal_bounds_collapse_to_single_bin():
    xs, ys = [3.0, 3.0, 3.0], [1.0, 2.0, 3.0]
    params = Am4Params(width=5, lb=3.0, ub=3.0)
    out = am4_native(xs, ys, params)
    assert set(zip(out.column("x"), out.column("y"))) == {(3.0, 1.0), (3.0, 3.0)}


def test_null_rows_are_skipped():
    xs = [0.0, None, 2.0, 3.0]
    ys = [1.0, 2.0, None, 4.0]
    out = am4_native(xs, ys, Am4Params(width=2, lb=0.0, ub=3.0))
    assert None not in out.column("x") and None not in out.column("y")


def test_out_of_domain_rows_clamp_into_boundary_bins():
    xs = [-100.0, 0.0, 1.0, 200.0]
    ys = [9.0, 1.0, 2.0, 8.0]
    out = am4_native(xs, ys, Am4Params(width=1, lb=0.0, ub=1.0))
    assert (-100.0, 9.0) in set(zip(out.column("x"), out.column("y")))
    assert out.row_count <= 8


def test_empty_input():
    assert am4_native([], [], Am4Params(width=5, lb=0.0, ub=1.0)).row_count == 0
    assert m4_oracle([], [], Am4Params(width=5, lb=0.0, ub=1.0)).row_count == 0


@pytest.mark.parametrize("seed", range(12))
def test_am4_per_bin_extrema_match_brute_force(seed):
    rng = random.Random(seed)
    n = rng.choice([100, 1000, 5000])
    xs = [rng.uniform(0, 500) for _ in range(n)]
    ys = [rng.choice([rng.uniform(-100, 100), float(rng.randint(-3, 3))]) for _ in range(n)]
    params = Am4Params(width=rng.choice([5, 30, 150]), lb=0.0, ub=500.0)
    out = am4_native(xs, ys, params)
    assert output_bin_extrema(out, params) == brute_bin_extrema(xs, ys, params)
    assert out.row_count <= 4 * (params.width + 1)


@pytest.mark.parametrize("seed", range(12))
def test_am4_points_contained_in_m4(seed):
    rng = random.Random(100 + seed)
    xs = [rng.uniform(0, 100) for _ in range(2000)]
    ys = [float(rng.randint(0, 20)) for _ in range(2000)]
    params = Am4Params(width=20, lb=0.0, ub=100.0)
    am4 = set(zip(am4_native(xs, ys, params).column("x"), am4_native(xs, ys, params).column("y")))
    m4 = set(zip(m4_oracle(xs, ys, params).column("x"), m4_oracle(xs, ys, params).column("y")))
    assert am4 <= m4


def test_m4_distinct_collapses_duplicate_pairs():
    # Repeated (x, y) pairs with constant y: the join-back would emit the
    # whole input; distinct on (bin, x, y) halves it.
    xs = [float(i // 2) for i in range(1000)]
    ys = [42.0] * 1000
    params = Am4Params(width=10, lb=0.0, ub=499.0)
    out = m4_oracle(xs, ys, params)
    assert out.row_count == 500


def test_m4_matches_brute_force_extrema():
    rng = random.Random(77)
    xs = [rng.uniform(0, 50) for _ in range(3000)]
    ys = [rng.uniform(-5, 5) for _ in range(3000)]
    params = Am4Params(width=25, lb=0.0, ub=50.0)
    out = m4_oracle(xs, ys, params)
    got = output_bin_extrema(out, params)
    assert got == brute_bin_extrema(xs, ys, params)


# -- AM4 injection -----------------------------------------------------------


def big_series_catalog(n=30_000):
    rng = random.Random(5)
    cat = Catalog()
    cat.create_table(
        "series",
        Relation(
            [("x", DType.DOUBLE), ("y", DType.DOUBLE), ("tag", DType.VARCHAR)],
            [
                [rng.uniform(0, 100) for _ in range(n)],
                [rng.gauss(0, 10) for _ in range(n)],
                [rng.choice(["a", "b", "c"]) for _ in range(n)],
            ],
        ),
    )
    return cat


def evaluate_rewrite(cat, rewrite):
    ctx = EvalContext(catalog=cat, arena=rewrite.desc.arena, now_micros=0)
    aggregates = eval_select(ctx, rewrite.query_root)
    return am4_points(aggregates, rewrite.x_field, rewrite.y_field, rewrite.color_field)


def test_inject_am4_bounds_output_cardinality():
    cat = big_series_catalog()
    params = Am4Params(width=100, lb=0.0, ub=100.0)
    rewrite = inject_am4(
        target="series",
        kind=VizKind.LINE,
        x_field="x",
        y_field="y",
        x_type="quantitative",
        y_type="quantitative",
        params=params,
        estimated_rows=30_000,
    )
    assert rewrite is not None
    points = evaluate_rewrite(cat, rewrite)
    assert 0 < points.row_count <= 4 * (params.width + 1)


def test_inject_am4_multi_line_bounds_per_series():
    cat = big_series_catalog()
    params = Am4Params(width=50, lb=0.0, ub=100.0)
    rewrite = inject_am4(
        target="series",
        kind=VizKind.MULTI_LINE,
        x_field="x",
        y_field="y",
        x_type="quantitative",
        y_type="quantitative",
        params=params,
        estimated_rows=30_000,
        color_field="tag",
    )
    points = evaluate_rewrite(cat, rewrite)
    assert points.row_count <= 3 * 4 * (params.width + 1)
    assert set(points.column("tag")) == {"a", "b", "c"}


def test_inject_am4_declines_small_inputs():
    params = Am4Params(width=100, lb=0.0, ub=1.0)
    assert (
        inject_am4(
            target="t",
            kind=VizKind.LINE,
            x_field="x",
            y_field="y",
            x_type="quantitative",
            y_type="quantitative",
            params=params,
            estimated_rows=10,
        )
        is None
    )


def test_inject_am4_declines_wrong_kind_or_type():
    params = Am4Params(width=10, lb=0.0, ub=1.0)
    common = dict(target="t", x_field="x", y_field="y", params=params, estimated_rows=10_000)
    assert inject_am4(kind=VizKind.BAR, x_type="quantitative", y_type="quantitative", **common) is None
    assert inject_am4(kind=VizKind.LINE, x_type="nominal", y_type="quantitative", **common) is None
    assert inject_am4(kind=VizKind.LINE, x_type="temporal", y_type="nominal", **common) is None


def test_am4_injection_matches_kernel():
    cat = big_series_catalog(20_000)
    params = Am4Params(width=40, lb=0.0, ub=100.0, x_field="x", y_field="y")
    rewrite = inject_am4(
        target="series",
        kind=VizKind.LINE,
        x_field="x",
        y_field="y",
        x_type="quantitative",
        y_type="quantitative",
        params=params,
        estimated_rows=20_000,
    )
    via_sql = evaluate_rewrite(cat, rewrite)
    rel = cat.tables["series"]
    via_kernel = am4_native(rel.column("x"), rel.column("y"), params)
    assert set(zip(via_sql.column("x"), via_sql.column("y"))) == set(
        zip(via_kernel.column("x"), via_kernel.column("y"))
    )


# -- paging pushdown -----------------------------------------------------------


def test_pushdown_applies_only_to_bare_lazy_scans():
    cat = Catalog()
    cat.create_table("mat", Relation([("a", DType.BIGINT)], [[1, 2, 3]]))
    assert pushdown_limit_offset(cat, "mat", 0, 20) is None
    cat.register_lazy(LazyTable(name="lz", schema=[("a", DType.BIGINT)], scan=lambda d: None, row_count=3))
    directive = pushdown_limit_offset(cat, "lz", 5, 20)
    assert directive is not None and directive.offset == 5 and directive.limit == 20


# -- adaptive materialization ------------------------------------------------------


def plan_for(script):
    desc = analyze(parse_script(script))
    return desc, decide_materialization(desc)


def test_rgf_single_consumer_is_lazy_with_projection():
    desc, plan = plan_for(
        'FETCH data FROM "test://x.rgf";\n'
        "LOAD activity FROM data USING RGF;\n"
        "CREATE VIEW grouped AS SELECT date_trunc('day', ts) AS time, sum(hits), site "
        "FROM activity WHERE ts > (now() - main.duration) GROUP BY time, site ORDER BY time, site;"
    )
    decision = plan.decision_for(1)
    assert decision.decision == "LAZY"
    assert decision.projection == {"ts", "hits", "site"}
    pushed = decision.consumer_scans[2]
    assert pushed.projection == ["hits", "site", "ts"]
    assert [(c, op) for c, op, _ in pushed.predicates] == [("ts", ">")]


def test_rgf_two_consumers_materialize_with_union():
    desc, plan = plan_for(
        'FETCH data FROM "test://x.rgf";\n'
        "LOAD t FROM data USING RGF;\n"
        "CREATE VIEW a AS SELECT c1 FROM t;\n"
        "CREATE VIEW b AS SELECT c2 FROM t;"
    )
    decision = plan.decision_for(1)
    assert decision.decision == "MATERIALIZE"
    assert decision.projection == {"c1", "c2"}


def test_csv_always_materializes():
    desc, plan = plan_for(
        'FETCH data FROM "test://x.csv";\nLOAD t FROM data USING CSV;\nCREATE VIEW a AS SELECT c FROM t;'
    )
    assert plan.decision_for(1).decision == "MATERIALIZE"


def test_json_always_materializes():
    desc, plan = plan_for(
        "FETCH d FROM 'https://api';\nLOAD cities FROM d USING JSON;\nLOAD counties FROM d USING JSON;"
    )
    assert plan.decision_for(1).decision == "MATERIALIZE"
    assert plan.decision_for(2).decision == "MATERIALIZE"


def test_format_inferred_from_uri_extension():
    desc, plan = plan_for(
        'FETCH data FROM "https://host/file.rgf";\nLOAD t FROM data;\nCREATE VIEW a AS SELECT c FROM t;'
    )
    assert plan.decision_for(1).decision == "LAZY"


def test_parquet_plans_like_a_partial_scan_format():
    desc, plan = plan_for(
        'FETCH data FROM "s3://bucket/file1";\n'
        "LOAD activity FROM data USING PARQUET;\n"
        "CREATE VIEW g AS SELECT a FROM activity;"
    )
    assert plan.decision_for(1).decision == "LAZY"


def test_or_predicates_are_not_pushed():
    desc, plan = plan_for(
        'FETCH data FROM "test://x.rgf";\n'
        "LOAD t FROM data USING RGF;\n"
        "CREATE VIEW a AS SELECT c FROM t WHERE c > 1 OR c < -1;"
    )
    pushed = plan.decision_for(1).consumer_scans[2]
    assert pushed.predicates == []


def test_conjunct_with_column_on_both_sides_not_pushed():
    desc, plan = plan_for(
        'FETCH data FROM "test://x.rgf";\n'
        "LOAD t FROM data USING RGF;\n"
        "CREATE VIEW a AS SELECT c, d FROM t WHERE c > d AND c > 5;"
    )
    pushed = plan.decision_for(1).consumer_scans[2]
    assert [(c, op) for c, op, _ in pushed.predicates] == [("c", ">")]
