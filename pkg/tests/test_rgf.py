"""RGF format: round trips, footer statistics, and partial scans."""

import random

import pytest

from dashql.executor import ScanDirective
from dashql.relation import DType, Relation
from dashql.rgf import RgfError, RgfScanner, read_footer, scan_rgf, write_rgf


def mem_reader(blob):
    reads = []

    def read(offset, length):
        reads.append((offset, length))
        return blob[offset : offset + length]

    return read, reads


def make_relation(n, seed=0, with_nulls=True):
    rng = random.Random(seed)
    return Relation(
        [("ts", DType.BIGINT), ("v", DType.DOUBLE), ("tag", DType.VARCHAR), ("ok", DType.BOOL)],
        [
            sorted(rng.randint(0, 10_000) for _ in range(n)),
            [None if with_nulls and rng.random() < 0.1 else round(rng.uniform(-5, 5), 4) for _ in range(n)],
            [None if with_nulls and rng.random() < 0.1 else rng.choice("abcde") for _ in range(n)],
            [rng.random() < 0.5 for _ in range(n)],
        ],
    )


def test_single_row_single_group():
    rel = Relation([("a", DType.BIGINT)], [[7]])
    blob = write_rgf(rel, row_group_size=1000)
    read, _ = mem_reader(blob)
    footer = read_footer(read, len(blob))
    assert len(footer.row_groups) == 1
    assert footer.row_groups[0].columns["a"].min == 7


def test_2500_rows_make_three_groups():
    rel = Relation([("a", DType.BIGINT)], [list(range(2500))])
    blob = write_rgf(rel, row_group_size=1000)
    read, _ = mem_reader(blob)
    footer = read_footer(read, len(blob))
    assert [g.row_count for g in footer.row_groups] == [1000, 1000, 500]
    assert [g.row_offset for g in footer.row_groups] == [0, 1000, 2000]


@pytest.mark.parametrize("seed", range(5))
def test_round_trip_property(seed):
    rel = make_relation(random.Random(seed).randint(0, 700), seed=seed)
    blob = write_rgf(rel, row_group_size=128)
    read, _ = mem_reader(blob)
    assert RgfScanner(read, len(blob)).scan() == rel


def test_footer_stats_are_exact_extrema():
    rel = make_relation(500, seed=3)
    blob = write_rgf(rel, row_group_size=100)
    read, _ = mem_reader(blob)
    scanner = RgfScanner(read, len(blob))
    for g_idx, group in enumerate(scanner.footer.row_groups):
        for name, _ in rel.schema:
            values = scanner._column_values(g_idx, name)
            non_null = [v for v in values if v is not None]
            stats = group.columns[name]
            assert stats.min == (min(non_null) if non_null else None)
            assert stats.max == (max(non_null) if non_null else None)
            assert stats.null_count == sum(1 for v in values if v is None)


def test_bad_magic_rejected():
    blob = b"X" * 20
    with pytest.raises(RgfError):
        read_footer(lambda o, l: blob[o : o + l], len(blob))


def test_footer_reads_are_two_tail_ranges():
    rel = make_relation(300, seed=1)
    blob = write_rgf(rel, row_group_size=100)
    read, reads = mem_reader(blob)
    read_footer(read, len(blob))
    assert reads[0] == (len(blob) - 8, 8)
    assert len(reads) == 2 and reads[1][0] + reads[1][1] == len(blob) - 8


def test_full_scan_equals_relation_and_reads_everything():
    rel = make_relation(400, seed=2)
    blob = write_rgf(rel, row_group_size=100)
    read, reads = mem_reader(blob)
    out = scan_rgf(read, len(blob))
    assert out == rel


def test_predicate_skips_leading_groups():
    rel = Relation([("ts", DType.BIGINT), ("v", DType.BIGINT)], [list(range(1000)), [i % 7 for i in range(1000)]])
    blob = write_rgf(rel, row_group_size=100)
    read, reads = mem_reader(blob)
    scanner = RgfScanner(read, len(blob))
    k = 4  # skip groups 0..3
    threshold = scanner.footer.row_groups[k - 1].columns["ts"].max
    reads.clear()
    out = scanner.scan(ScanDirective(predicates=[("ts", ">", threshold)]))
    assert out.column("ts") == list(range(400, 1000))
    skipped_offsets = {
        scanner.footer.row_groups[g].columns[c].byte_offset
        for g in range(k)
        for c in ("ts", "v")
    }
    assert not skipped_offsets & {off for off, _ in reads}


def test_pushdown_soundness_random_predicates():
    rng = random.Random(99)
    rel = make_relation(600, seed=9)
    blob = write_rgf(rel, row_group_size=64)
    read, _ = mem_reader(blob)
    scanner = RgfScanner(read, len(blob))
    full = scanner.scan()
    for _ in range(40):
        col = rng.choice(["ts", "v", "tag"])
        op = rng.choice([">", ">=", "<", "<=", "="])
        idx = {"ts": 0, "v": 1, "tag": 2}[col]
        candidates = [v for v in rel.columns[idx] if v is not None]
        value = rng.choice(candidates) if candidates else 0
        got = scanner.scan(ScanDirective(predicates=[(col, op, value)]))
        keep = []
        for row_idx in range(full.row_count):
            cell = full.columns[idx][row_idx]
            if cell is None:
                continue
            ok = {
                ">": cell > value,
                ">=": cell >= value,
                "<": cell < value,
                "<=": cell <= value,
                "=": cell == value,
            }[op]
            if ok:
                keep.append(row_idx)
        expected = Relation(full.schema, [[c[i] for i in keep] for c in full.columns])
        assert got == expected, (col, op, value)


def test_predicate_never_increases_bytes_read():
    rel = make_relation(600, seed=5)
    blob = write_rgf(rel, row_group_size=64)

    read_plain, reads_plain = mem_reader(blob)
    RgfScanner(read_plain, len(blob)).scan()
    plain_bytes = sum(l for _, l in reads_plain)

    read_pred, reads_pred = mem_reader(blob)
    RgfScanner(read_pred, len(blob)).scan(ScanDirective(predicates=[("ts", ">", 5000)]))
    pred_bytes = sum(l for _, l in reads_pred)
    assert pred_bytes <= plain_bytes


def test_limit_offset_window_reads_one_group():
    rel = Relation([("a", DType.BIGINT)], [list(range(10_000))])
    blob = write_rgf(rel, row_group_size=1000)
    read, reads = mem_reader(blob)
    scanner = RgfScanner(read, len(blob))
    reads.clear()
    out = scanner.scan(ScanDirective(limit=20, offset=0))
    assert out.column("a") == list(range(20))
    group_offsets = [g.columns["a"].byte_offset for g in scanner.footer.row_groups]
    touched = {off for off, _ in reads}
    assert group_offsets[0] in touched
    assert not touched & set(group_offsets[1:])


def test_page_spanning_group_boundary_reads_two_groups():
    rel = Relation([("a", DType.BIGINT)], [list(range(10_000))])
    blob = write_rgf(rel, row_group_size=1000)
    read, reads = mem_reader(blob)
    scanner = RgfScanner(read, len(blob))
    reads.clear()
    out = scanner.scan(ScanDirective(limit=20, offset=990))
    assert out.column("a") == list(range(990, 1010))
    group_offsets = [g.columns["a"].byte_offset for g in scanner.footer.row_groups]
    touched = {off for off, _ in reads}
    assert group_offsets[0] in touched and group_offsets[1] in touched
    assert not touched & set(group_offsets[2:])


def test_readahead_caches_next_group():
    rel = Relation([("a", DType.BIGINT)], [list(range(5000))])
    blob = write_rgf(rel, row_group_size=1000)
    read, reads = mem_reader(blob)
    scanner = RgfScanner(read, len(blob))
    reads.clear()
    scanner.scan(ScanDirective(limit=10, offset=0, readahead=1))
    after_first = len(reads)
    assert after_first == 2  # group 0 plus one readahead group
    scanner.scan(ScanDirective(limit=10, offset=1000))
    assert len(reads) == after_first  # served from cache


def test_projection_reads_only_requested_columns():
    rel = make_relation(300, seed=7)
    blob = write_rgf(rel, row_group_size=100)
    read, reads = mem_reader(blob)
    scanner = RgfScanner(read, len(blob))
    reads.clear()
    out = scanner.scan(ScanDirective(projection=["ts", "tag"]))
    assert out.column_names == ["ts", "tag"]
    v_offsets = {g.columns["v"].byte_offset for g in scanner.footer.row_groups}
    assert not v_offsets & {off for off, _ in reads}


def test_null_predicate_value_yields_empty():
    rel = make_relation(100, seed=8)
    blob = write_rgf(rel, row_group_size=50)
    read, _ = mem_reader(blob)
    out = RgfScanner(read, len(blob)).scan(ScanDirective(predicates=[("ts", ">", None)]))
    assert out.row_count == 0
