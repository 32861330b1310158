"""Script diffing and task-graph migration.

Editing one literal deep inside a view marks that statement UPDATED and
deleting a visualization marks it DELETED; everything upstream migrates
with its completed state, and the engine runs only the undo/redo tasks.
"""

import os

from dashql import Session, analyze, diff_scripts, parse_script
from dashql.differ import format_diff

PREV = """\
FETCH data FROM "test://infovis.rgf";
LOAD activity FROM data USING RGF;
CREATE TABLE grouped AS
  SELECT date_trunc('day', timestamp) AS time, sum(views) AS views
  FROM activity GROUP BY time ORDER BY time;
VISUALIZE grouped USING TABLE;
VISUALIZE grouped USING LINE;
"""

NEXT = PREV.replace("'day'", "'hour'").replace("VISUALIZE grouped USING TABLE;\n", "")

print("statement mapping (prev -> next):")
print(format_diff(diff_scripts(analyze(parse_script(PREV)), analyze(parse_script(NEXT)))))
print()

fixtures = os.path.join(os.path.dirname(__file__), "..", "fixtures")
session = Session(fixtures_dir=fixtures)
session.load_script(PREV)
result = session.load_script(NEXT)

print("second run:")
for task in result.report.tasks:
    marker = "migrated " if task["migrated"] else "executed "
    target = task["artifact"] or task["drop_target"] or ""
    print(f"  {marker}{task['kind']:12} {task['status']:10} {target}")
