"""Parsing into the flat arena.

Every AST node is 20 bytes in one contiguous buffer; children sit in a
sorted, contiguous span before their parent, and each node points back at
the substring it matched, so the arena is an index into the script rather
than a copy of it.
"""

from dashql import AttrKey, parse_script

SCRIPT = """\
INPUT duration TYPE INTERVAL;
FETCH data FROM "s3://bucket/file1";
LOAD activity FROM data USING PARQUET;

CREATE VIEW grouped AS
  SELECT date_trunc('day', ts) AS time, sum(hits), site
  FROM activity WHERE ts > (now() - main.duration)
  GROUP BY time, site ORDER BY time, site;

VISUALIZE grouped USING TABLE;
VISUALIZE grouped USING STACKED BAR CHART;
"""

parsed = parse_script(SCRIPT)
arena = parsed.arena

print(f"{len(parsed.statements)} statements, {len(arena)} nodes, "
      f"{len(arena.to_bytes())} bytes serialized ({len(arena.to_bytes()) // len(arena)} per node)")
print()

for stmt in parsed.statements:
    text = parsed.arena.script_text[stmt.loc[0] : stmt.loc[0] + stmt.loc[1]]
    print(f"  [{stmt.loc[0]:4}] {stmt.kind.name:16} {text.splitlines()[0][:60]}")
print()

# Key lookups are binary searches over the sorted children span.
view_root = parsed.statements[3].root
query = arena.find_child(view_root, AttrKey.VALUE)
where = arena.find_child(query, AttrKey.WHERE)
print("WHERE clause text:", arena.node_text(where))
print("FROM clause text: ", arena.node_text(arena.find_child(query, AttrKey.FROM)))
print()

print("first nodes of the buffer:")
print("\n".join(arena.dump().splitlines()[:8]))
