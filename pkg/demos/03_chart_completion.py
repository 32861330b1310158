"""Completing a chart specification from query metadata.

`VISUALIZE activity USING MULTI LINE CHART` expands into a full spec: the
first three columns map to x/y/color, column types pick the encoding
types, and min/max/distinct queries fill the scale domains. The lowered
spec can be rewritten back into verbose statement text for fine-tuning.
"""

import json
import os

from dashql import Session
from dashql.vizgen import expand_statement_text

fixtures = os.path.join(os.path.dirname(__file__), "..", "fixtures")
session = Session(fixtures_dir=fixtures)
session.load_script(
    'FETCH f FROM "test://fig5_activity.csv";\n'
    "LOAD activity FROM f USING CSV;\n"
    "VISUALIZE activity USING MULTI LINE CHART;"
)

chart = [o for o in session.outputs() if "chart" in o][0]["chart"]
print("emitted Vega-Lite (data values elided):")
print(json.dumps({k: v for k, v in chart.items() if k != "data"}, indent=2))
print(f"... with {len(chart['data']['values'])} inline data rows")
print()

expansion = session.expand_statement(2)
print("verbose rewrite of the short statement:")
print(expansion["text"])
