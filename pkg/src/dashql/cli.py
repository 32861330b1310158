"""Command line entry points.

Subcommands: parse, plan, diff, run, watch, serve, rgf pack/stats, and
bench am4. Exit codes: 0 success, 1 script errors, 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from .analyzer import analyze, to_dot
from .differ import diff_scripts, format_diff
from .engine import Session
from .ingest import load_csv
from .optimizer import Am4Params, am4_native, m4_oracle
from .parser import parse_script
from .relation import DType
from .rgf import RgfScanner, stats_report, write_rgf


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get("DASHQL_WORKERS")
    return int(env) if env else 4


def cmd_parse(args) -> int:
    parsed = parse_script(_read(args.file))
    if args.dump_ast:
        print(parsed.arena.dump())
    for stmt in parsed.statements:
        kind = stmt.kind.name if stmt.kind else "ERROR"
        line = f"[{stmt.loc[0]}:{stmt.loc[0] + stmt.loc[1]}] {kind}"
        if stmt.error:
            line += f"  {stmt.error}"
        print(line)
    return 1 if parsed.errors else 0


def cmd_plan(args) -> int:
    desc = analyze(parse_script(_read(args.file)))
    print(to_dot(desc))
    return 1 if any(s.error for s in desc.statements) else 0


def cmd_diff(args) -> int:
    prev = analyze(parse_script(_read(args.prev)))
    nxt = analyze(parse_script(_read(args.next)))
    print(format_diff(diff_scripts(prev, nxt)))
    return 0


def _session(args) -> Session:
    fixtures = args.fixtures_dir or os.path.dirname(os.path.abspath(args.file))
    return Session(fixtures_dir=fixtures, workers=_workers(args))


def _print_report(result, as_json: bool) -> None:
    if as_json:
        print(json.dumps(result.to_json(), indent=2, default=str))
        return
    for task in result.report.tasks:
        flag = "migrated" if task["migrated"] else ""
        err = f"  {task['error']}" if task["error"] else ""
        print(f"{task['status']:9} {task['kind']:12} {task['artifact'] or '-':24} {flag}{err}")
    for diag in result.diagnostics:
        print(f"warning: {diag}", file=sys.stderr)


def cmd_run(args) -> int:
    session = _session(args)
    result = session.load_script(_read(args.file))
    _print_report(result, args.json)
    failed = any(t["status"] == "FAILED" for t in result.report.tasks)
    return 1 if (result.diagnostics and not result.report.tasks) or failed else 0


def cmd_watch(args) -> int:
    session = _session(args)
    path = args.file
    stamp = None
    print(f"watching {path} (interval {args.interval}s, ctrl-c to stop)")
    try:
        while True:
            current = os.path.getmtime(path)
            if current != stamp:
                stamp = current
                print(f"--- run @ {time.strftime('%H:%M:%S')}")
                try:
                    result = session.load_script(_read(path))
                    _print_report(result, args.json)
                except Exception as err:
                    print(f"error: {err}", file=sys.stderr)
            time.sleep(args.interval)
    except KeyboardInterrupt:
        return 0


def cmd_serve(args) -> int:
    from .service import serve

    fixtures = args.fixtures_dir or os.getcwd()
    serve(
        port=args.port,
        fixtures_dir=fixtures,
        workers=_workers(args),
        frontend_dir=args.frontend,
    )
    return 0


def cmd_rgf_pack(args) -> int:
    with open(args.csv, "rb") as fh:
        relation = load_csv(fh.read())
    blob = write_rgf(relation, row_group_size=args.row_group)
    with open(args.out, "wb") as fh:
        fh.write(blob)
    print(f"{args.out}: {relation.row_count} rows, {len(blob)} bytes")
    return 0


def cmd_rgf_stats(args) -> int:
    data = open(args.file, "rb").read()
    scanner = RgfScanner(lambda off, ln: data[off : off + ln], len(data))
    print(json.dumps(stats_report(scanner.footer), indent=2))
    return 0


def cmd_bench_am4(args) -> int:
    import random

    rng = random.Random(args.seed)
    xs = [rng.uniform(0.0, 1000.0) for _ in range(args.rows)]
    ys = [rng.gauss(0.0, 25.0) for _ in range(args.rows)]
    params = Am4Params(width=args.width, lb=0.0, ub=1000.0)
    algo = am4_native if args.algo == "am4" else m4_oracle
    best = None
    for _ in range(args.repeat):
        start = time.perf_counter()
        out = algo(xs, ys, params, DType.DOUBLE, DType.DOUBLE)
        elapsed = (time.perf_counter() - start) * 1000
        best = elapsed if best is None else min(best, elapsed)
    print(
        json.dumps(
            {
                "algo": args.algo,
                "rows_in": args.rows,
                "rows_out": out.row_count,
                "width": args.width,
                "wall_ms": round(best, 3),
            }
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dashql", description="DashQL script engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse a script and report diagnostics")
    p.add_argument("file")
    p.add_argument("--dump-ast", action="store_true")
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("plan", help="print the dependency DAG in DOT format")
    p.add_argument("file")
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("diff", help="statement mapping between two scripts")
    p.add_argument("prev")
    p.add_argument("next")
    p.set_defaults(fn=cmd_diff)

    for name, fn in (("run", cmd_run), ("watch", cmd_watch)):
        p = sub.add_parser(name, help=f"{name} a script")
        p.add_argument("file")
        p.add_argument("--json", action="store_true")
        p.add_argument("--fixtures-dir")
        p.add_argument("--workers", type=int)
        if name == "watch":
            p.add_argument("--interval", type=float, default=0.5)
        p.set_defaults(fn=fn)

    p = sub.add_parser("serve", help="HTTP service for the dashboard UI")
    p.add_argument("--port", type=int, default=8624)
    p.add_argument("--fixtures-dir")
    p.add_argument("--workers", type=int)
    p.add_argument("--frontend", help="directory with the built web UI")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("rgf", help="RGF file utilities")
    rgf_sub = p.add_subparsers(dest="rgf_command", required=True)
    pk = rgf_sub.add_parser("pack", help="pack a CSV file into RGF")
    pk.add_argument("csv")
    pk.add_argument("out")
    pk.add_argument("--row-group", type=int, default=1000)
    pk.set_defaults(fn=cmd_rgf_pack)
    st = rgf_sub.add_parser("stats", help="print footer statistics")
    st.add_argument("file")
    st.set_defaults(fn=cmd_rgf_stats)

    p = sub.add_parser("bench", help="micro benchmarks")
    bench_sub = p.add_subparsers(dest="bench_command", required=True)
    am4 = bench_sub.add_parser("am4", help="AM4 vs M4 wall time")
    am4.add_argument("--rows", type=int, default=500_000)
    am4.add_argument("--width", type=int, default=2000)
    am4.add_argument("--algo", choices=["am4", "m4"], default="am4")
    am4.add_argument("--seed", type=int, default=1)
    am4.add_argument("--repeat", type=int, default=3)
    am4.set_defaults(fn=cmd_bench_am4)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
