"""Chart spec completion: channels, field assignment, types, domains."""

import pytest

from dashql.analyzer import analyze
from dashql.executor import EvalContext
from dashql.parser import VizKind, parse_script
from dashql.relation import Catalog, DType, Relation, iso_to_micros
from dashql.vizgen import (
    VizError,
    assign_fields,
    emit_vega_lite,
    expand_statement_text,
    infer_encoding_type,
    lower_to_spec,
    required_channels,
    table_artifact,
)

from conftest import FIG5_SHORT, FIG5_VERBOSE

SITES = ["https://github.com/dashql", "https://app.dashql.com", "https://www.dashql.com"]


@pytest.fixture
def catalog():
    cat = Catalog()
    ts = [
        iso_to_micros("2022-10-15 00:00:00"),
        iso_to_micros("2022-10-18 12:00:00"),
        iso_to_micros("2022-10-23 00:00:00"),
    ]
    cat.create_table(
        "activity",
        Relation(
            [("time", DType.TIMESTAMP), ("hits", DType.BIGINT), ("site", DType.VARCHAR)],
            [ts, [1205, 2000, 4178], SITES],
        ),
    )
    return cat


def lower(catalog, script):
    desc = analyze(parse_script(script))
    viz = desc.statements[-1].viz
    ctx = EvalContext(catalog=catalog, arena=desc.arena, now_micros=0)
    return lower_to_spec(ctx, viz)


def test_required_channels():
    assert required_channels(VizKind.TABLE) == []
    assert required_channels(VizKind.LINE) == ["x", "y"]
    assert required_channels(VizKind.AREA) == ["x", "y"]
    assert required_channels(VizKind.MULTI_LINE) == ["x", "y", "color"]
    assert required_channels(VizKind.STACKED_BAR) == ["x", "y", "color"]


def test_assign_fields_in_schema_order():
    schema = [("time", DType.TIMESTAMP), ("hits", DType.BIGINT), ("site", DType.VARCHAR)]
    assert assign_fields(schema, VizKind.MULTI_LINE) == {
        "x": "time",
        "y": "hits",
        "color": "site",
    }


def test_assign_fields_alias_wins():
    schema = [("a", DType.BIGINT), ("y", DType.BIGINT), ("x", DType.TIMESTAMP)]
    assert assign_fields(schema, VizKind.LINE) == {"x": "x", "y": "y"}
    # the paper's SELECT v AS y, t AS x example
    schema2 = [("y", DType.BIGINT), ("x", DType.TIMESTAMP)]
    assert assign_fields(schema2, VizKind.LINE) == {"x": "x", "y": "y"}


def test_assign_fields_arity_error():
    with pytest.raises(VizError):
        assign_fields([("only", DType.BIGINT)], VizKind.LINE)


def test_encoding_types():
    assert infer_encoding_type("x", DType.TIMESTAMP) == "temporal"
    assert infer_encoding_type("y", DType.BIGINT) == "quantitative"
    assert infer_encoding_type("y", DType.DOUBLE) == "quantitative"
    assert infer_encoding_type("color", DType.VARCHAR) == "nominal"
    assert infer_encoding_type("color", DType.BOOL) == "nominal"
    assert infer_encoding_type("y", DType.INTERVAL) == "quantitative"


def test_fig5_lowering_matches_verbose_spec(catalog):
    short = lower(catalog, FIG5_SHORT)
    assert short.doc["mark"] == "line"
    enc = short.doc["encoding"]
    assert enc["x"]["field"] == "time" and enc["x"]["type"] == "temporal"
    assert enc["y"]["field"] == "hits" and enc["y"]["type"] == "quantitative"
    assert enc["color"]["field"] == "site" and enc["color"]["type"] == "nominal"
    assert enc["y"]["scale"]["domain"] == [1205, 4178]
    assert enc["x"]["scale"]["domain"] == ["2022-10-15 00:00:00", "2022-10-23 00:00:00"]
    assert enc["color"]["scale"]["domain"] == sorted(SITES)


def test_constant_column_domain_collapses(catalog):
    catalog.create_table(
        "flat", Relation([("t", DType.BIGINT), ("c", DType.BIGINT)], [[1, 2, 3], [7, 7, 7]])
    )
    spec = lower(catalog, "VISUALIZE flat USING LINE;")
    assert spec.doc["encoding"]["y"]["scale"]["domain"] == [7, 7]


def test_empty_relation_omits_domains(catalog):
    catalog.create_table("none", Relation([("t", DType.BIGINT), ("v", DType.BIGINT)], [[], []]))
    spec = lower(catalog, "VISUALIZE none USING LINE;")
    assert spec.get("encoding.y.scale.domain") is None


def test_verbose_spec_passthrough_preserves_user_keys(catalog):
    script = (
        "VISUALIZE activity USING (\n"
        "  title = 'Website Views',\n"
        "  mark = (type = 'area', line = true, opacity = 0.5),\n"
        "  encoding = (x = (field = 'time', type = 'temporal', axis.tick_count = 5),\n"
        "              y = (field = 'hits', type = 'quantitative', scale = (domain = [0, 9999]))));"
    )
    spec = lower(catalog, script)
    assert spec.doc["title"] == "Website Views"
    assert spec.doc["mark"] == {"type": "area", "line": True, "opacity": 0.5}
    assert spec.doc["encoding"]["x"]["axis"]["tick_count"] == 5
    # user-set domain survives; missing x domain was computed
    assert spec.doc["encoding"]["y"]["scale"]["domain"] == [0, 9999]
    assert spec.doc["encoding"]["x"]["scale"]["domain"] == [
        "2022-10-15 00:00:00",
        "2022-10-23 00:00:00",
    ]
    assert "encoding.y.scale.domain" in spec.user_keys


def test_short_and_verbose_fig5_lower_identically(catalog):
    short = lower(catalog, FIG5_SHORT)
    verbose = lower(catalog, FIG5_VERBOSE)
    # same keys modulo the nominal domain order, which is ascending for
    # inferred domains but user-defined in the verbose text
    v_color = verbose.doc["encoding"]["color"]["scale"]["domain"]
    s_color = short.doc["encoding"]["color"]["scale"]["domain"]
    assert sorted(v_color) == s_color
    verbose.doc["encoding"]["color"]["scale"]["domain"] = s_color
    assert verbose.doc == short.doc


def test_expand_round_trip(catalog):
    for script in (FIG5_SHORT, "VISUALIZE activity USING LINE;", "VISUALIZE activity USING STACKED BAR CHART;"):
        spec = lower(catalog, script)
        text = expand_statement_text("activity", spec)
        desc = analyze(parse_script(text))
        assert desc.statements[-1].error is None
        respec = lower(catalog, text)
        assert respec.doc == spec.doc, script


def test_expand_of_verbose_is_identity(catalog):
    spec = lower(catalog, FIG5_VERBOSE)
    text = expand_statement_text("activity", spec)
    respec = lower(catalog, text)
    assert respec.doc == spec.doc


def test_inferred_domains_contain_all_values(catalog):
    spec = lower(catalog, FIG5_SHORT)
    rel = catalog.tables["activity"]
    lo, hi = spec.doc["encoding"]["y"]["scale"]["domain"]
    assert all(lo <= v <= hi for v in rel.column("hits"))
    assert set(rel.column("site")) <= set(spec.doc["encoding"]["color"]["scale"]["domain"])


def test_table_artifact_shape(catalog):
    desc = analyze(parse_script("VISUALIZE activity USING TABLE;"))
    ctx = EvalContext(catalog=catalog, arena=desc.arena, now_micros=0)
    art = table_artifact(ctx, "activity")
    assert art == {
        "kind": "table",
        "relation": "activity",
        "schema": [["time", "TIMESTAMP"], ["hits", "BIGINT"], ["site", "VARCHAR"]],
        "row_count": 3,
    }


def test_emit_vega_lite_camelizes_keys(catalog):
    spec = lower(catalog, "VISUALIZE activity USING ( encoding = ( x = (field = 'time', type = 'temporal', axis.tick_count = 5), y = (field = 'hits', type = 'quantitative') ), mark = 'line' );")
    doc = emit_vega_lite(spec)
    assert doc["encoding"]["x"]["axis"]["tickCount"] == 5
    assert doc["$schema"].endswith("v5.json")
    assert doc["data"] == {"name": "activity"}


def test_stacked_kinds_set_stack(catalog):
    spec = lower(catalog, "VISUALIZE activity USING STACKED BAR CHART;")
    assert spec.doc["mark"] == "bar"
    assert spec.doc["encoding"]["y"]["stack"] is True
    assert spec.doc["encoding"]["color"]["field"] == "site"
