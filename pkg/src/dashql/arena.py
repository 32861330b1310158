"""Flat, append-only AST storage.

Every syntax node lives in one contiguous buffer and is addressed by index.
A node serializes to exactly 20 bytes:

    loc_offset  u32   byte offset into the script text
    loc_length  u32   byte length of the matched substring
    node_type   u8
    attr_byte   u8    low 6 bits: attribute key, high 2 bits: payload tag
    parent      u32   index of the parent node (self for statement roots)
    payload     u32 + u16  either {children_begin, children_count}
                           or a 48-bit raw value

Children are emitted before their parents and each node's direct children
occupy one contiguous index range, sorted ascending by attribute key, so
key lookups are binary searches and trees compare cheaply.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator, Optional

NODE_STRUCT = struct.Struct("<IIBBIIH")
NODE_SIZE = NODE_STRUCT.size
assert NODE_SIZE == 20, "node encoding must serialize to exactly 20 bytes"

# Payload tags (stored in the top 2 bits of the attribute byte).
PAYLOAD_NONE = 0
PAYLOAD_VALUE = 1
PAYLOAD_CHILDREN = 2

_KEY_MASK = 0x3F
_VALUE_MAX = 1 << 48


class NodeType(IntEnum):
    """What a node is."""

    NONE = 0
    # statement roots
    STMT_SET = 1
    STMT_INPUT = 2
    STMT_FETCH = 3
    STMT_LOAD = 4
    STMT_VISUALIZE = 5
    STMT_CREATE_TABLE = 6
    STMT_CREATE_VIEW = 7
    STMT_SELECT = 8
    # query structure
    SELECT_QUERY = 10
    PROJECTION = 11
    PROJ_ITEM = 12
    PROJ_STAR = 13
    FROM_CLAUSE = 14
    REL_NAME = 15
    SUBQUERY = 16
    EXPR_LIST = 17
    ORDER_ITEM = 18
    SORT_DIR = 19
    # expressions (one type per operator so trees compare structurally)
    OP_OR = 20
    OP_AND = 21
    OP_NOT = 22
    OP_EQ = 23
    OP_NEQ = 24
    OP_LT = 25
    OP_LE = 26
    OP_GT = 27
    OP_GE = 28
    OP_ADD = 29
    OP_SUB = 30
    OP_MUL = 31
    OP_DIV = 32
    OP_MOD = 33
    OP_NEG = 34
    OP_IS_NULL = 35
    OP_IS_NOT_NULL = 36
    EXPR_CALL = 37
    NAME_PATH = 38
    # leaves
    NAME = 40
    LITERAL_STRING = 41
    LITERAL_INT = 42
    LITERAL_FLOAT = 43
    LITERAL_BOOL = 44
    LITERAL_NULL = 45
    LITERAL_INTERVAL = 46
    TYPE_NAME = 47
    SCHEME = 48
    FORMAT = 49
    VIZ_KIND = 50
    # key-value settings
    OBJECT = 51
    ENTRY = 52
    ARRAY = 53


class AttrKey(IntEnum):
    """The role a node plays under its parent. Values stay below 64 so two
    payload-tag bits fit in the same byte."""

    NONE = 0
    KEY = 1
    VALUE = 2
    NAME = 3
    ALIAS = 4
    TYPE = 5
    COMPONENT = 6
    SETTINGS = 7
    URI = 8
    SOURCE = 9
    FORMAT = 10
    TARGET = 11
    VIZ_KIND = 12
    PROJECTION = 13
    FROM = 14
    WHERE = 15
    GROUP_BY = 16
    ORDER_BY = 17
    LIMIT = 18
    OFFSET = 19
    LEFT = 20
    RIGHT = 21
    OPERAND = 22
    # known chart-spec keys, mapped when a settings entry uses them verbatim
    MARK = 30
    TITLE = 31
    ENCODING = 32
    X = 33
    Y = 34
    COLOR = 35
    FIELD = 36
    SCALE = 37
    DOMAIN = 38
    AXIS = 39
    WIDTH = 40
    HEIGHT = 41


assert max(AttrKey) < 64


class ArenaError(Exception):
    pass


@dataclass(frozen=True)
class AstNode:
    """Read-only view of one arena slot."""

    index: int
    node_type: NodeType
    attribute_key: AttrKey
    loc_offset: int
    loc_length: int
    parent_index: int
    payload_tag: int
    children_begin: int
    children_count: int
    value: int

    @property
    def has_children(self) -> bool:
        return self.payload_tag == PAYLOAD_CHILDREN

    @property
    def is_leaf(self) -> bool:
        return self.payload_tag != PAYLOAD_CHILDREN


class AstArena:
    """Append-only node buffer plus the script text it indexes.

    Immutable once a parse completes; re-parses produce a fresh arena.
    Reads are safe to share across threads.
    """

    def __init__(self, script_text: str):
        self.script_text = script_text
        self._types: list[int] = []
        self._attrs: list[int] = []
        self._loc_off: list[int] = []
        self._loc_len: list[int] = []
        self._parents: list[int] = []
        self._pay_a: list[int] = []  # children_begin | value low 32 bits
        self._pay_b: list[int] = []  # children_count | value high 16 bits
        # Side table for decoded literals that don't fit the 48-bit value slot.
        self.literals: list[object] = []

    def __len__(self) -> int:
        return len(self._types)

    # -- construction -----------------------------------------------------

    def push_node(
        self,
        node_type: NodeType,
        attribute_key: AttrKey,
        loc: tuple[int, int],
        value: Optional[int] = None,
        children: Optional[tuple[int, int]] = None,
    ) -> int:
        """Append one node and return its index.

        A children span must reference already-pushed nodes; pushing the
        parent patches each child's parent index. Statement roots keep the
        default self-parent.
        """
        index = len(self._types)
        if index >= 0xFFFFFFFF:
            raise ArenaError("arena capacity overflow")
        if children is not None:
            begin, count = children
            if count > 0xFFFF:
                raise ArenaError("node has more than 65535 direct children")
            if begin + count > index:
                raise ArenaError("children span must precede the parent")
            tag, pay_a, pay_b = PAYLOAD_CHILDREN, begin, count
        elif value is not None:
            if not 0 <= value < _VALUE_MAX:
                raise ArenaError("value payload out of 48-bit range")
            tag, pay_a, pay_b = PAYLOAD_VALUE, value & 0xFFFFFFFF, value >> 32
        else:
            tag, pay_a, pay_b = PAYLOAD_NONE, 0, 0
        self._types.append(int(node_type))
        self._attrs.append(int(attribute_key) | (tag << 6))
        self._loc_off.append(loc[0])
        self._loc_len.append(loc[1])
        self._parents.append(index)
        self._pay_a.append(pay_a)
        self._pay_b.append(pay_b)
        if children is not None:
            begin, count = children
            for child in range(begin, begin + count):
                self._parents[child] = index
        return index

    def add_literal(self, decoded: object) -> int:
        """Intern a decoded literal and return its side-table index."""
        self.literals.append(decoded)
        return len(self.literals) - 1

    # -- access ------------------------------------------------------------

    def node(self, index: int) -> AstNode:
        attr = self._attrs[index]
        tag = attr >> 6
        if tag == PAYLOAD_CHILDREN:
            begin, count, value = self._pay_a[index], self._pay_b[index], 0
        else:
            begin, count = 0, 0
            value = self._pay_a[index] | (self._pay_b[index] << 32)
        return AstNode(
            index=index,
            node_type=NodeType(self._types[index]),
            attribute_key=AttrKey(attr & _KEY_MASK),
            loc_offset=self._loc_off[index],
            loc_length=self._loc_len[index],
            parent_index=self._parents[index],
            payload_tag=tag,
            children_begin=begin,
            children_count=count,
            value=value,
        )

    def node_type(self, index: int) -> NodeType:
        return NodeType(self._types[index])

    def attribute_key(self, index: int) -> AttrKey:
        return AttrKey(self._attrs[index] & _KEY_MASK)

    def payload_tag(self, index: int) -> int:
        return self._attrs[index] >> 6

    def children(self, index: int) -> range:
        """Index range of the node's direct children (empty for leaves)."""
        if self._attrs[index] >> 6 != PAYLOAD_CHILDREN:
            return range(0)
        begin = self._pay_a[index]
        return range(begin, begin + self._pay_b[index])

    def value(self, index: int) -> int:
        return self._pay_a[index] | (self._pay_b[index] << 32)

    def node_text(self, index: int) -> str:
        off = self._loc_off[index]
        return self.script_text[off : off + self._loc_len[index]]

    def find_child(self, index: int, key: AttrKey) -> Optional[int]:
        """Binary search the sorted children span for the first child with
        the given attribute key; None when absent."""
        span = self.children(index)
        lo, hi = 0, len(span)
        target = int(key)
        while lo < hi:
            mid = (lo + hi) // 2
            if (self._attrs[span[mid]] & _KEY_MASK) < target:
                lo = mid + 1
            else:
                hi = mid
        if lo < len(span) and (self._attrs[span[lo]] & _KEY_MASK) == target:
            return span[lo]
        return None

    def find_children(self, index: int, key: AttrKey) -> list[int]:
        return [c for c in self.children(index) if (self._attrs[c] & _KEY_MASK) == int(key)]

    def walk(self, index: int) -> Iterator[int]:
        """Pre-order traversal of the subtree rooted at `index`."""
        stack = [index]
        while stack:
            cur = stack.pop()
            yield cur
            stack.extend(reversed(self.children(cur)))

    # -- serialization -----------------------------------------------------

    def to_bytes(self) -> bytes:
        """Little-endian on-disk form; 20 bytes per node."""
        out = bytearray()
        for i in range(len(self._types)):
            out += NODE_STRUCT.pack(
                self._loc_off[i],
                self._loc_len[i],
                self._types[i],
                self._attrs[i],
                self._parents[i],
                self._pay_a[i],
                self._pay_b[i],
            )
        return bytes(out)

    def dump(self) -> str:
        """Debug dump: one node per line."""
        lines = []
        for i in range(len(self._types)):
            n = self.node(i)
            if n.payload_tag == PAYLOAD_CHILDREN:
                payload = f"children=[{n.children_begin},{n.children_begin + n.children_count})"
            elif n.payload_tag == PAYLOAD_VALUE:
                payload = f"value={n.value}"
            else:
                payload = "-"
            lines.append(
                f"{i}\t{n.node_type.name}\t{n.attribute_key.name}\t{n.parent_index}"
                f"\tloc=[{n.loc_offset},{n.loc_length})\t{payload}"
            )
        return "\n".join(lines)


class NodeBuilder:
    """Pending node collected while a grammar rule is being matched.

    A node's direct children are written to the arena contiguously (sorted
    by attribute key, stable) when the node's own rule completes; the node
    itself is written when its parent's rule completes. The statement root
    is written last. This keeps every children span contiguous while still
    emitting strictly bottom-up.
    """

    __slots__ = ("node_type", "attribute_key", "loc", "value", "children", "index", "_span")

    def __init__(
        self,
        node_type: NodeType,
        loc: tuple[int, int],
        value: Optional[int] = None,
        children: Optional[list["NodeBuilder"]] = None,
        attribute_key: AttrKey = AttrKey.NONE,
    ):
        self.node_type = node_type
        self.attribute_key = attribute_key
        self.loc = loc
        self.value = value
        self.children = children
        self.index: Optional[int] = None
        self._span: Optional[tuple[int, int]] = None

    def with_key(self, key: AttrKey) -> "NodeBuilder":
        self.attribute_key = key
        return self

    def flush(self, arena: AstArena) -> int:
        """Write this subtree; the root node itself lands last."""
        self._complete(arena)
        self.index = arena.push_node(
            self.node_type, self.attribute_key, self.loc, value=self.value, children=self._span
        )
        return self.index

    def _complete(self, arena: AstArena) -> None:
        if self.children is None:
            return
        for child in self.children:
            child._complete(arena)
        kids = sorted(self.children, key=lambda c: int(c.attribute_key))
        for kid in kids:
            kid.index = arena.push_node(
                kid.node_type, kid.attribute_key, kid.loc, value=kid.value, children=kid._span
            )
        if kids:
            self._span = (kids[0].index, len(kids))
        else:
            self._span = (len(arena), 0)
