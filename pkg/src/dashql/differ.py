"""Statement-level script diffing.

Statements are compared through their ASTs (whitespace never matters): two
simultaneous DFS traversals count equal nodes, each weighted by 1/(1+depth)
so edits near the root cost more than deep ones. Unique exact matches are
computed first, a longest increasing subsequence over them anchors the
remaining assignments, and leftovers inside each anchor gap are matched by
descending similarity. Unmatched statements become NEW or DELETED.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field
from enum import Enum, auto
from typing import Optional

from .analyzer import ProgramDescription, tree_fingerprint
from .arena import AstArena

# Pairs scoring below this are treated as unrelated statements
# (delete + insert) rather than updates.
SIMILARITY_THRESHOLD = 0.35


class Verdict(Enum):
    EQUAL = auto()
    UPDATED = auto()
    NEW = auto()
    DELETED = auto()


@dataclass(frozen=True)
class DiffEntry:
    prev_idx: Optional[int]
    next_idx: Optional[int]
    verdict: Verdict
    similarity: float


@dataclass
class ScriptDiff:
    entries: list[DiffEntry] = field(default_factory=list)

    def by_prev(self) -> dict[int, DiffEntry]:
        return {e.prev_idx: e for e in self.entries if e.prev_idx is not None}

    def by_next(self) -> dict[int, DiffEntry]:
        return {e.next_idx: e for e in self.entries if e.next_idx is not None}

    @property
    def deleted(self) -> set[int]:
        return {e.prev_idx for e in self.entries if e.verdict is Verdict.DELETED}

    @property
    def new(self) -> set[int]:
        return {e.next_idx for e in self.entries if e.verdict is Verdict.NEW}

    def all_equal(self) -> bool:
        return all(e.verdict is Verdict.EQUAL for e in self.entries)


# -- tree similarity -----------------------------------------------------------


def _subtree_weight(arena: AstArena, root: int) -> float:
    total = 0.0
    stack = [(root, 0)]
    while stack:
        idx, depth = stack.pop()
        total += 1.0 / (1 + depth)
        for child in arena.children(idx):
            stack.append((child, depth + 1))
    return total


def _subtree_size(arena: AstArena, root: int) -> int:
    return sum(1 for _ in arena.walk(root))


def _paired_children(arena_a: AstArena, a: int, arena_b: AstArena, b: int):
    """Zip children by attribute key; same-key runs pair positionally."""
    kids_a = list(arena_a.children(a))
    kids_b = list(arena_b.children(b))
    pairs = []
    i = j = 0
    while i < len(kids_a) and j < len(kids_b):
        key_a = int(arena_a.attribute_key(kids_a[i]))
        key_b = int(arena_b.attribute_key(kids_b[j]))
        if key_a == key_b:
            pairs.append((kids_a[i], kids_b[j]))
            i += 1
            j += 1
        elif key_a < key_b:
            i += 1
        else:
            j += 1
    return pairs


def _match(arena_a: AstArena, a: int, arena_b: AstArena, b: int, depth: int) -> tuple[float, int]:
    """Matched weight and matched node count for a node pair."""
    if arena_a.node_type(a) is not arena_b.node_type(b):
        return 0.0, 0
    if arena_a.attribute_key(a) is not arena_b.attribute_key(b):
        return 0.0, 0
    a_kids = arena_a.children(a)
    b_kids = arena_b.children(b)
    if not a_kids and not b_kids:
        if arena_a.node_text(a) != arena_b.node_text(b):
            return 0.0, 0
        return 1.0 / (1 + depth), 1
    if bool(a_kids) != bool(b_kids):
        return 0.0, 0
    weight = 1.0 / (1 + depth)
    count = 1
    for child_a, child_b in _paired_children(arena_a, a, arena_b, b):
        w, c = _match(arena_a, child_a, arena_b, child_b, depth + 1)
        weight += w
        count += c
    return weight, count


def statement_similarity(arena_a: AstArena, root_a: int, arena_b: AstArena, root_b: int) -> float:
    """Score in [0, 1]; exactly 1 iff the trees are type/key/text-equal."""
    matched_weight, matched_count = _match(arena_a, root_a, arena_b, root_b, 0)
    size_a = _subtree_size(arena_a, root_a)
    size_b = _subtree_size(arena_b, root_b)
    if matched_count == size_a == size_b:
        return 1.0
    denom = max(_subtree_weight(arena_a, root_a), _subtree_weight(arena_b, root_b))
    if denom == 0:
        return 0.0
    return min(matched_weight / denom, 0.9999999999)


def trees_equal(arena_a: AstArena, root_a: int, arena_b: AstArena, root_b: int) -> bool:
    _, matched = _match(arena_a, root_a, arena_b, root_b, 0)
    return matched == _subtree_size(arena_a, root_a) == _subtree_size(arena_b, root_b)


# -- script diff ----------------------------------------------------------------


def _longest_increasing(pairs: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """LIS over next indices of (prev, next) pairs sorted by prev index."""
    tails: list[int] = []
    tail_ids: list[int] = []
    back: list[Optional[int]] = [None] * len(pairs)
    for i, (_, nxt) in enumerate(pairs):
        pos = bisect_left(tails, nxt)
        if pos > 0:
            back[i] = tail_ids[pos - 1]
        if pos < len(tails):
            tails[pos] = nxt
            tail_ids[pos] = i
        else:
            tails.append(nxt)
            tail_ids.append(i)
    if not tail_ids:
        return []
    chain = []
    cursor: Optional[int] = tail_ids[-1]
    while cursor is not None:
        chain.append(pairs[cursor])
        cursor = back[cursor]
    chain.reverse()
    return chain


def diff_scripts(prev: ProgramDescription, next_: ProgramDescription) -> ScriptDiff:
    arena_a, arena_b = prev.arena, next_.arena
    stmts_a, stmts_b = prev.statements, next_.statements

    fp_a = {
        s.index: (s.kind, tree_fingerprint(arena_a, s.root))
        for s in stmts_a
        if s.root is not None
    }
    fp_b = {
        s.index: (s.kind, tree_fingerprint(arena_b, s.root))
        for s in stmts_b
        if s.root is not None
    }

    count_a: dict[tuple, list[int]] = {}
    count_b: dict[tuple, list[int]] = {}
    for idx, fp in fp_a.items():
        count_a.setdefault(fp, []).append(idx)
    for idx, fp in fp_b.items():
        count_b.setdefault(fp, []).append(idx)

    mapped: dict[int, int] = {}  # prev -> next, unique exact matches
    for fp, prev_ids in count_a.items():
        next_ids = count_b.get(fp, [])
        if len(prev_ids) == 1 and len(next_ids) == 1:
            mapped[prev_ids[0]] = next_ids[0]

    unique_pairs = sorted(mapped.items())
    anchors = _longest_increasing(unique_pairs)

    # Partition unmapped statements into the gaps between consecutive anchors.
    anchor_prev = [a for a, _ in anchors]
    anchor_next = [b for _, b in anchors]
    mapped_next = set(mapped.values())

    def gap_of_prev(idx: int) -> int:
        return bisect_left(anchor_prev, idx)

    def gap_of_next(idx: int) -> int:
        return bisect_left(anchor_next, idx)

    free_a = [s.index for s in stmts_a if s.index not in mapped]
    free_b = [s.index for s in stmts_b if s.index not in mapped_next]

    gap_b: dict[int, list[int]] = {}
    for idx in free_b:
        gap_b.setdefault(gap_of_next(idx), []).append(idx)

    # Candidate pairs per gap, assigned greedily by descending similarity;
    # ties break toward the closest original statement position.
    candidates: list[tuple[float, int, int, int]] = []
    sim_cache: dict[tuple[int, int], float] = {}
    for a_idx in free_a:
        root_a = stmts_a[a_idx].root
        if root_a is None:
            continue
        for b_idx in gap_b.get(gap_of_prev(a_idx), []):
            root_b = stmts_b[b_idx].root
            if root_b is None or stmts_a[a_idx].kind is not stmts_b[b_idx].kind:
                continue
            sim = statement_similarity(arena_a, root_a, arena_b, root_b)
            sim_cache[(a_idx, b_idx)] = sim
            if sim >= SIMILARITY_THRESHOLD:
                candidates.append((sim, abs(a_idx - b_idx), a_idx, b_idx))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2], c[3]))

    taken_a: set[int] = set()
    taken_b: set[int] = set()
    gap_mapped: dict[int, tuple[int, float]] = {}
    for sim, _, a_idx, b_idx in candidates:
        if a_idx in taken_a or b_idx in taken_b:
            continue
        taken_a.add(a_idx)
        taken_b.add(b_idx)
        gap_mapped[a_idx] = (b_idx, sim)

    entries: list[DiffEntry] = []
    for a_idx in sorted(fp_a.keys() | {s.index for s in stmts_a}):
        if a_idx in mapped:
            entries.append(DiffEntry(a_idx, mapped[a_idx], Verdict.EQUAL, 1.0))
        elif a_idx in gap_mapped:
            b_idx, sim = gap_mapped[a_idx]
            verdict = Verdict.EQUAL if sim >= 1.0 else Verdict.UPDATED
            entries.append(DiffEntry(a_idx, b_idx, verdict, sim))
        else:
            entries.append(DiffEntry(a_idx, None, Verdict.DELETED, 0.0))
    for b_idx in sorted(idx for idx in (s.index for s in stmts_b) if idx not in mapped_next and idx not in taken_b):
        entries.append(DiffEntry(None, b_idx, Verdict.NEW, 0.0))

    entries.sort(key=lambda e: (e.next_idx if e.next_idx is not None else e.prev_idx, e.verdict.name))
    return ScriptDiff(entries=entries)


def format_diff(diff: ScriptDiff) -> str:
    """Human-readable mapping table."""
    lines = [f"{'prev':>4}  {'next':>4}  {'verdict':8}  similarity"]
    for e in diff.entries:
        prev = "-" if e.prev_idx is None else str(e.prev_idx)
        nxt = "-" if e.next_idx is None else str(e.next_idx)
        lines.append(f"{prev:>4}  {nxt:>4}  {e.verdict.name:8}  {e.similarity:.3f}")
    return "\n".join(lines)
