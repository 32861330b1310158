"""Shared fixtures: paper scripts, fixture data, pinned-clock sessions."""

from __future__ import annotations

import os

import pytest

from dashql.engine import Session
from dashql.relation import iso_to_micros

FIXTURES_DIR = os.path.join(os.path.dirname(__file__), "..", "fixtures")

# The two Fig. 3 scripts: previous groups by day and shows a table; the
# next script groups by hour and drops the table visualization.
FIG3_PREV = """INPUT duration TYPE INTERVAL;
FETCH data FROM "s3://bucket/file1";
LOAD activity FROM data USING PARQUET;

CREATE VIEW grouped AS
  SELECT date_trunc(  'day'  , ts) AS time, sum(hits), site
  FROM activity WHERE ts > (now() - main.duration)
  GROUP BY time, site ORDER BY time, site;

VISUALIZE grouped USING TABLE;
VISUALIZE grouped USING STACKED BAR CHART;
"""

FIG3_NEXT = """INPUT duration TYPE INTERVAL;
FETCH data FROM "s3://bucket/file1";
LOAD activity FROM data USING PARQUET;

CREATE VIEW grouped AS
  SELECT date_trunc(  'hour'  , ts) AS time, sum(hits), site
  FROM activity WHERE ts > (now() - main.duration)
  GROUP BY time, site ORDER BY time, site;

VISUALIZE grouped USING STACKED BAR CHART;
"""

FIG4 = """FETCH d FROM 'https://api';
LOAD cities FROM d USING JSON (
    jmespath = '{
      city: keys(@.cities),
      pop: values(@.cities)
    }'
);
LOAD counties FROM d USING JSON (
    jmespath = '@.counties[*].{
      county: @.key, pop: @.value
    }',
);
"""

FIG5_SHORT = "VISUALIZE activity USING MULTI LINE CHART;"

FIG5_VERBOSE = """VISUALIZE activity USING (
  mark = 'line',
  encoding = (
    x = (
      field = 'time',
      type = 'temporal',
      scale = (
        domain = [
          '2022-10-15 00:00:00',
          '2022-10-23 00:00:00'
        ]
    )),
    y = (
      field = 'hits',
      type = 'quantitative',
      scale = (domain = [1205, 4178])
    ),
    color = (
      field = 'site',
      type = 'nominal',
      scale = (
        domain = [
          'https://github.com/dashql',
          'https://app.dashql.com',
          'https://www.dashql.com'
        ]
    ))));
"""

FIG8 = """FETCH data FROM "https://static.dashql.com/data/examples/infovis.parquet";
LOAD activity FROM data USING PARQUET;
VISUALIZE activity USING TABLE;

INPUT website TYPE VARCHAR;

CREATE TABLE activity_grouped AS
  SELECT date_trunc('hour', timestamp) AS hour, sum(views) AS views
  FROM activity
  WHERE (website IS NULL OR website = main.website)
  GROUP BY hour;

VISUALIZE activity_grouped USING (
  title = 'Website Views',
  mark = (type = 'area', line = true, opacity = 0.5),
  encoding = (x = (field = 'hour', type = 'temporal', "title" = 'Time', axis.tick_count = 5),
              y = (field = 'views', type = 'quantitative', "title" = 'Views')));
"""

# Fig. 8 step scripts against the local RGF stand-in; the filter names the
# input explicitly so a NULL input keeps every row.
FIG8_STEP1 = """FETCH data FROM "test://infovis.rgf";
LOAD activity FROM data USING RGF;
VISUALIZE activity USING TABLE;
"""

FIG8_STEP3 = """FETCH data FROM "test://infovis.rgf";
LOAD activity FROM data USING RGF;
VISUALIZE activity USING TABLE;

INPUT website TYPE VARCHAR;

CREATE TABLE activity_grouped AS
  SELECT date_trunc('hour', timestamp) AS hour, sum(views) AS views
  FROM activity
  WHERE (main.website IS NULL OR website = main.website)
  GROUP BY hour;
VISUALIZE activity_grouped USING AREA CHART;
"""

SECTION_21 = [
    "VISUALIZE a USING LINE;",
    "VISUALIZE a USING MULTI LINE;",
    "CREATE TABLE a AS SELECT t, v FROM source_data;",
    "SELECT v AS y, t AS x FROM source_data;",
]

FIG2 = "VISUALIZE (SELECT * FROM activity, countries WHERE code = country) USING TABLE;"

PAPER_CORPUS = {
    "fig3_prev": FIG3_PREV,
    "fig3_next": FIG3_NEXT,
    "fig4": FIG4,
    "fig5_short": FIG5_SHORT,
    "fig5_verbose": FIG5_VERBOSE,
    "fig8": FIG8,
    "fig2": FIG2,
    "sec21_0": SECTION_21[0],
    "sec21_1": SECTION_21[1],
    "sec21_2": SECTION_21[2],
    "sec21_3": SECTION_21[3],
    "set_form": "SET 'title' = 'Site Analytics';\nSET ( version = 3, theme = 'dark' );",
    "input_component": "INPUT started TYPE TIMESTAMP USING calendar ( default = '2022-10-15 00:00:00' );",
    "fetch_explicit": "FETCH d FROM HTTPS ( url = 'https://api.example.com/data.json', method = 'GET', header.accept = 'application/json' );",
    "scatter": "VISUALIZE points USING SCATTER CHART;",
    "fig8_step3": FIG8_STEP3,
}

TEST_CLOCK_ISO = "2022-10-25 12:00:00"


def test_clock() -> int:
    return iso_to_micros(TEST_CLOCK_ISO)


@pytest.fixture
def fixtures_dir() -> str:
    return os.path.abspath(FIXTURES_DIR)


@pytest.fixture
def session(fixtures_dir) -> Session:
    return Session(fixtures_dir=fixtures_dir, workers=2, clock=test_clock)


def make_session(fixtures_dir: str, **kwargs) -> Session:
    kwargs.setdefault("workers", 2)
    kwargs.setdefault("clock", test_clock)
    return Session(fixtures_dir=fixtures_dir, **kwargs)
