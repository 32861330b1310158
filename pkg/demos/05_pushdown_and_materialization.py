"""Partial reads: limit/offset pushdown and adaptive materialization.

The table visualization below never downloads the whole file: the scan
reads the footer, then only the row groups covering the requested page.
The LOAD stays lazy because RGF supports partial scans and exactly one
statement consumes it; a CSV in the same position would materialize once
and be shared.
"""

import os

from dashql import Session, analyze, decide_materialization, parse_script

fixtures = os.path.join(os.path.dirname(__file__), "..", "fixtures")
size = os.path.getsize(os.path.join(fixtures, "pushdown.rgf"))

session = Session(fixtures_dir=fixtures)
session.load_script(
    'FETCH packed FROM "test://pushdown.rgf";\n'
    "LOAD rows FROM packed USING RGF;\n"
    "VISUALIZE rows USING TABLE;"
)
print(f"file size: {size} bytes")
print(f"after the run (footer only):   {session.ledger.total_bytes():6d} bytes read")

session.table_page("rows", offset=0, limit=20)
print(f"after page(0, 20):             {session.ledger.total_bytes():6d} bytes read")

session.table_page("rows", offset=20, limit=20)  # same row group: cached
print(f"after page(20, 20), cached:    {session.ledger.total_bytes():6d} bytes read")

session.table_page("rows", offset=4990, limit=20)  # spans two groups
print(f"after page(4990, 20):          {session.ledger.total_bytes():6d} bytes read")
print()

for script, label in [
    (
        'FETCH d FROM "test://pushdown.rgf";\nLOAD t FROM d USING RGF;\n'
        "CREATE VIEW v AS SELECT ts, val FROM t WHERE val > 500;",
        "RGF, one consumer",
    ),
    (
        'FETCH d FROM "test://pushdown.rgf";\nLOAD t FROM d USING RGF;\n'
        "CREATE VIEW a AS SELECT ts FROM t;\nCREATE VIEW b AS SELECT val FROM t;",
        "RGF, two consumers",
    ),
    (
        'FETCH d FROM "test://pool_small.csv";\nLOAD t FROM d USING CSV;\n'
        "CREATE VIEW a AS SELECT views FROM t;",
        "CSV",
    ),
]:
    plan = decide_materialization(analyze(parse_script(script)))
    decision = next(iter(plan.loads.values()))
    projection = sorted(decision.projection) if decision.projection else "all columns"
    print(f"{label:22} -> {decision.decision:11} ({decision.reasons[0]}; projection: {projection})")
