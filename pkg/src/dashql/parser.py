"""Recursive-descent parser for DashQL: a SQL subset plus the statements
SET, INPUT, FETCH, LOAD and VISUALIZE.

Parsing emits nodes into an `AstArena` and returns per-statement root
offsets. Errors are reported per statement with a source span; recovery
skips to the next `;` so later statements still parse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum, auto
from typing import Optional

from .arena import ArenaError, AstArena, AttrKey, NodeBuilder, NodeType
from .lexer import KEYWORDS, LexError, Token, TokenKind, tokenize


class StatementKind(Enum):
    SET = auto()
    INPUT = auto()
    FETCH = auto()
    LOAD = auto()
    VISUALIZE = auto()
    CREATE_TABLE_AS = auto()
    CREATE_VIEW_AS = auto()
    SELECT = auto()


class VizKind(IntEnum):
    TABLE = 0
    LINE = 1
    MULTI_LINE = 2
    BAR = 3
    STACKED_BAR = 4
    AREA = 5
    STACKED_AREA = 6
    SCATTER = 7


class TypeTag(IntEnum):
    VARCHAR = 0
    INTERVAL = 1
    FILE = 2
    BIGINT = 3
    DOUBLE = 4
    TIMESTAMP = 5
    BOOLEAN = 6


class SchemeTag(IntEnum):
    HTTP = 0
    HTTPS = 1
    FILE = 2
    TEST = 3


class FormatTag(IntEnum):
    CSV = 0
    JSON = 1
    PARQUET = 2
    RGF = 3


_STMT_NODE_KIND = {
    NodeType.STMT_SET: StatementKind.SET,
    NodeType.STMT_INPUT: StatementKind.INPUT,
    NodeType.STMT_FETCH: StatementKind.FETCH,
    NodeType.STMT_LOAD: StatementKind.LOAD,
    NodeType.STMT_VISUALIZE: StatementKind.VISUALIZE,
    NodeType.STMT_CREATE_TABLE: StatementKind.CREATE_TABLE_AS,
    NodeType.STMT_CREATE_VIEW: StatementKind.CREATE_VIEW_AS,
    NodeType.STMT_SELECT: StatementKind.SELECT,
}

_TYPE_NAMES = {
    "VARCHAR": TypeTag.VARCHAR,
    "TEXT": TypeTag.VARCHAR,
    "INTERVAL": TypeTag.INTERVAL,
    "FILE": TypeTag.FILE,
    "BIGINT": TypeTag.BIGINT,
    "INTEGER": TypeTag.BIGINT,
    "INT": TypeTag.BIGINT,
    "DOUBLE": TypeTag.DOUBLE,
    "FLOAT": TypeTag.DOUBLE,
    "TIMESTAMP": TypeTag.TIMESTAMP,
    "DATETIME": TypeTag.TIMESTAMP,
    "BOOLEAN": TypeTag.BOOLEAN,
    "BOOL": TypeTag.BOOLEAN,
}

_INTERVAL_UNITS = {
    "MICROSECOND": 1,
    "MILLISECOND": 1_000,
    "SECOND": 1_000_000,
    "MINUTE": 60 * 1_000_000,
    "HOUR": 3_600 * 1_000_000,
    "DAY": 86_400 * 1_000_000,
    "WEEK": 7 * 86_400 * 1_000_000,
    "MONTH": 30 * 86_400 * 1_000_000,
    "YEAR": 365 * 86_400 * 1_000_000,
}

# Settings keys that map onto dedicated attribute keys for sorted lookup.
_KNOWN_KV_KEYS = {
    "mark": AttrKey.MARK,
    "title": AttrKey.TITLE,
    "encoding": AttrKey.ENCODING,
    "x": AttrKey.X,
    "y": AttrKey.Y,
    "color": AttrKey.COLOR,
    "field": AttrKey.FIELD,
    "type": AttrKey.TYPE,
    "scale": AttrKey.SCALE,
    "domain": AttrKey.DOMAIN,
    "axis": AttrKey.AXIS,
    "width": AttrKey.WIDTH,
    "height": AttrKey.HEIGHT,
}

_CMP_OPS = {
    TokenKind.EQ: NodeType.OP_EQ,
    TokenKind.NEQ: NodeType.OP_NEQ,
    TokenKind.LT: NodeType.OP_LT,
    TokenKind.LE: NodeType.OP_LE,
    TokenKind.GT: NodeType.OP_GT,
    TokenKind.GE: NodeType.OP_GE,
}


@dataclass(frozen=True)
class Diagnostic:
    message: str
    offset: int
    length: int
    expected: tuple[str, ...] = ()

    def __str__(self) -> str:
        where = f"[{self.offset}:{self.offset + self.length}]"
        if self.expected:
            return f"{where} {self.message} (expected {', '.join(self.expected)})"
        return f"{where} {self.message}"


@dataclass
class ParsedStatement:
    root: Optional[int]  # arena index of the statement root, None on error
    kind: Optional[StatementKind]
    loc: tuple[int, int]
    error: Optional[Diagnostic] = None


@dataclass
class ParsedScript:
    """Arena plus per-statement root offsets: the parser's output."""

    arena: AstArena
    statements: list[ParsedStatement] = field(default_factory=list)

    @property
    def errors(self) -> list[Diagnostic]:
        return [s.error for s in self.statements if s.error is not None]

    def statement_text(self, index: int) -> str:
        off, length = self.statements[index].loc
        return self.arena.script_text[off : off + length]


class ParseError(Exception):
    def __init__(self, message: str, token: Token, expected: tuple[str, ...] = ()):
        super().__init__(f"{message} at {token.start}")
        self.message = message
        self.token = token
        self.expected = expected


def parse_script(script: str) -> ParsedScript:
    """Parse a script into an arena and statement list. An empty script
    yields an empty program; statement errors are recorded, not raised."""
    arena = AstArena(script)
    result = ParsedScript(arena)
    try:
        tokens = tokenize(script)
    except LexError as err:
        result.statements.append(
            ParsedStatement(
                root=None,
                kind=None,
                loc=(err.offset, max(0, len(script) - err.offset)),
                error=Diagnostic(err.message, err.offset, 1),
            )
        )
        return result
    parser = _Parser(tokens, arena)
    while not parser.at_end():
        parser.skip_semicolons()
        if parser.at_end():
            break
        result.statements.append(parser.parse_statement())
    return result


class _Parser:
    def __init__(self, tokens: list[Token], arena: AstArena):
        self.tokens = tokens
        self.pos = 0
        self.arena = arena

    # -- token helpers ------------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def at_end(self) -> bool:
        return self.peek().kind is TokenKind.EOF

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind is not TokenKind.EOF:
            self.pos += 1
        return tok

    def check(self, kind: TokenKind) -> bool:
        return self.peek().kind is kind

    def check_kw(self, *names: str) -> bool:
        tok = self.peek()
        return tok.kind is TokenKind.KEYWORD and tok.keyword in names

    def match(self, kind: TokenKind) -> Optional[Token]:
        if self.check(kind):
            return self.advance()
        return None

    def match_kw(self, *names: str) -> Optional[Token]:
        if self.check_kw(*names):
            return self.advance()
        return None

    def expect(self, kind: TokenKind, what: str) -> Token:
        if self.check(kind):
            return self.advance()
        raise ParseError(f"unexpected {describe(self.peek())}", self.peek(), (what,))

    def expect_kw(self, name: str) -> Token:
        if self.check_kw(name):
            return self.advance()
        raise ParseError(f"unexpected {describe(self.peek())}", self.peek(), (name,))

    def expect_name(self) -> Token:
        if self.check(TokenKind.IDENT):
            return self.advance()
        raise ParseError(f"unexpected {describe(self.peek())}", self.peek(), ("identifier",))

    def skip_semicolons(self) -> None:
        while self.match(TokenKind.SEMICOLON):
            pass

    # -- statements ----------------------------------------------------------

    def parse_statement(self) -> ParsedStatement:
        first = self.peek()
        try:
            builder = self.statement_builder()
            self.finish_statement()
            end = self.tokens[self.pos - 1].end
            builder.loc = (first.start, end - first.start)
            root = builder.flush(self.arena)
            kind = _STMT_NODE_KIND[builder.node_type]
            return ParsedStatement(root=root, kind=kind, loc=builder.loc)
        except (ParseError, ArenaError) as err:
            if isinstance(err, ParseError):
                tok = err.token
                diag = Diagnostic(err.message, tok.start, max(1, tok.end - tok.start), err.expected)
            else:
                diag = Diagnostic(str(err), first.start, 1)
            self.recover()
            end = self.tokens[self.pos - 1].end if self.pos > 0 else first.end
            return ParsedStatement(
                root=None, kind=None, loc=(first.start, max(0, end - first.start)), error=diag
            )

    def finish_statement(self) -> None:
        # Semicolon is optional for the final statement of a script.
        if not self.match(TokenKind.SEMICOLON) and not self.at_end():
            raise ParseError(f"unexpected {describe(self.peek())}", self.peek(), (";",))

    def recover(self) -> None:
        while not self.at_end() and not self.check(TokenKind.SEMICOLON):
            self.advance()
        self.match(TokenKind.SEMICOLON)

    def statement_builder(self) -> NodeBuilder:
        tok = self.peek()
        if tok.kind is TokenKind.KEYWORD:
            if tok.keyword == "SET":
                return self.parse_set()
            if tok.keyword == "INPUT":
                return self.parse_input()
            if tok.keyword == "FETCH":
                return self.parse_fetch()
            if tok.keyword == "LOAD":
                return self.parse_load()
            if tok.keyword == "VISUALIZE":
                return self.parse_visualize()
            if tok.keyword == "CREATE":
                return self.parse_create()
            if tok.keyword == "SELECT":
                query = self.parse_select_query()
                query.with_key(AttrKey.VALUE)
                return NodeBuilder(NodeType.STMT_SELECT, tok.span, children=[query])
        raise ParseError(
            f"unexpected {describe(tok)}",
            tok,
            ("SET", "INPUT", "FETCH", "LOAD", "VISUALIZE", "CREATE", "SELECT"),
        )

    def parse_set(self) -> NodeBuilder:
        start = self.advance()
        if self.check(TokenKind.LPAREN):
            settings = self.parse_kv_object()
        else:
            key = self.parse_kv_key()
            self.expect(TokenKind.EQ, "=")
            value = self.parse_kv_value().with_key(AttrKey.VALUE)
            entry = NodeBuilder(
                NodeType.ENTRY,
                (key.loc[0], value.loc[0] + value.loc[1] - key.loc[0]),
                children=[key, value],
                attribute_key=_KNOWN_KV_KEYS.get(self.arena.script_text[key.loc[0] : key.loc[0] + key.loc[1]].strip("'\"").lower(), AttrKey.NONE),
            )
            settings = NodeBuilder(NodeType.OBJECT, entry.loc, children=[entry])
        settings.with_key(AttrKey.SETTINGS)
        return NodeBuilder(NodeType.STMT_SET, start.span, children=[settings])

    def parse_input(self) -> NodeBuilder:
        start = self.advance()
        name_tok = self.expect_name()
        name = NodeBuilder(NodeType.NAME, name_tok.span, attribute_key=AttrKey.NAME)
        self.expect_kw("TYPE")
        type_tok = self.peek()
        type_word = (type_tok.keyword or type_tok.text).upper()
        if type_tok.kind in (TokenKind.IDENT, TokenKind.KEYWORD) and type_word in _TYPE_NAMES:
            self.advance()
        else:
            raise ParseError(f"unknown input type {describe(type_tok)}", type_tok, ("type name",))
        type_node = NodeBuilder(
            NodeType.TYPE_NAME, type_tok.span, value=int(_TYPE_NAMES[type_word]), attribute_key=AttrKey.TYPE
        )
        children = [name, type_node]
        if self.match_kw("USING"):
            comp = self.expect_name()
            children.append(NodeBuilder(NodeType.NAME, comp.span, attribute_key=AttrKey.COMPONENT))
        if self.check(TokenKind.LPAREN):
            children.append(self.parse_kv_object().with_key(AttrKey.SETTINGS))
        return NodeBuilder(NodeType.STMT_INPUT, start.span, children=children)

    def parse_fetch(self) -> NodeBuilder:
        start = self.advance()
        name_tok = self.expect_name()
        name = NodeBuilder(NodeType.NAME, name_tok.span, attribute_key=AttrKey.NAME)
        self.expect_kw("FROM")
        children = [name]
        scheme_kw = self.match_kw("HTTP", "HTTPS", "FILE", "TEST")
        if scheme_kw is not None:
            scheme = NodeBuilder(
                NodeType.SCHEME,
                scheme_kw.span,
                value=int(SchemeTag[scheme_kw.keyword]),
                attribute_key=AttrKey.SOURCE,
            )
            children.append(scheme)
            children.append(self.parse_kv_object().with_key(AttrKey.SETTINGS))
        else:
            uri = self.expect(TokenKind.STRING, "uri string")
            children.append(NodeBuilder(NodeType.LITERAL_STRING, uri.span, attribute_key=AttrKey.URI))
        return NodeBuilder(NodeType.STMT_FETCH, start.span, children=children)

    def parse_load(self) -> NodeBuilder:
        start = self.advance()
        name_tok = self.expect_name()
        name = NodeBuilder(NodeType.NAME, name_tok.span, attribute_key=AttrKey.NAME)
        self.expect_kw("FROM")
        source_tok = self.expect_name()
        source = NodeBuilder(NodeType.NAME, source_tok.span, attribute_key=AttrKey.SOURCE)
        children = [name, source]
        if self.match_kw("USING"):
            fmt_tok = self.peek()
            if not self.check_kw("CSV", "JSON", "PARQUET", "RGF"):
                raise ParseError(
                    f"unknown load format {describe(fmt_tok)}", fmt_tok, ("CSV", "JSON", "PARQUET", "RGF")
                )
            self.advance()
            children.append(
                NodeBuilder(
                    NodeType.FORMAT,
                    fmt_tok.span,
                    value=int(FormatTag[fmt_tok.keyword]),
                    attribute_key=AttrKey.FORMAT,
                )
            )
            if self.check(TokenKind.LPAREN):
                children.append(self.parse_kv_object().with_key(AttrKey.SETTINGS))
        return NodeBuilder(NodeType.STMT_LOAD, start.span, children=children)

    def parse_visualize(self) -> NodeBuilder:
        start = self.advance()
        if self.check(TokenKind.LPAREN):
            self.advance()
            target = self.parse_select_query().with_key(AttrKey.TARGET)
            self.expect(TokenKind.RPAREN, ")")
        else:
            target_tok = self.expect_name()
            target = NodeBuilder(NodeType.NAME, target_tok.span, attribute_key=AttrKey.TARGET)
        self.expect_kw("USING")
        if self.check(TokenKind.LPAREN):
            spec = self.parse_kv_object().with_key(AttrKey.SETTINGS)
            return NodeBuilder(NodeType.STMT_VISUALIZE, start.span, children=[target, spec])
        kind_node = self.parse_viz_kind()
        return NodeBuilder(NodeType.STMT_VISUALIZE, start.span, children=[target, kind_node])

    def parse_viz_kind(self) -> NodeBuilder:
        first = self.peek()
        modifiers: list[str] = []
        while (
            self.peek().kind is TokenKind.IDENT
            and self.peek().text.upper() in ("STACKED", "MULTI", "GROUPED", "COLORED")
        ):
            modifiers.append(self.advance().text.upper())
        kind_tok = self.peek()
        if not self.check_kw("TABLE", "LINE", "BAR", "AREA", "SCATTER"):
            raise ParseError(
                f"unexpected {describe(kind_tok)}",
                kind_tok,
                ("TABLE", "LINE", "BAR", "AREA", "SCATTER"),
            )
        base = self.advance().keyword
        chart_tok = self.match_kw("CHART")
        end_tok = chart_tok if chart_tok is not None else self.tokens[self.pos - 1]
        kind = _resolve_viz_kind(modifiers, base)
        if kind is None:
            bad = " ".join(modifiers + [base])
            raise ParseError(f"unsupported visualization kind '{bad}'", kind_tok)
        return NodeBuilder(
            NodeType.VIZ_KIND,
            (first.start, end_tok.end - first.start),
            value=int(kind),
            attribute_key=AttrKey.VIZ_KIND,
        )

    def parse_create(self) -> NodeBuilder:
        start = self.advance()
        if self.match_kw("TABLE"):
            node_type = NodeType.STMT_CREATE_TABLE
        elif self.match_kw("VIEW"):
            node_type = NodeType.STMT_CREATE_VIEW
        else:
            raise ParseError(f"unexpected {describe(self.peek())}", self.peek(), ("TABLE", "VIEW"))
        name_tok = self.expect_name()
        name = NodeBuilder(NodeType.NAME, name_tok.span, attribute_key=AttrKey.NAME)
        self.expect_kw("AS")
        query = self.parse_select_query().with_key(AttrKey.VALUE)
        return NodeBuilder(node_type, start.span, children=[name, query])

    # -- SQL subset -----------------------------------------------------------

    def parse_select_query(self) -> NodeBuilder:
        start = self.expect_kw("SELECT")
        items: list[NodeBuilder] = []
        while True:
            items.append(self.parse_projection_item())
            if not self.match(TokenKind.COMMA):
                break
        proj_end = self.tokens[self.pos - 1].end
        projection = NodeBuilder(
            NodeType.PROJECTION,
            (items[0].loc[0], proj_end - items[0].loc[0]),
            children=items,
            attribute_key=AttrKey.PROJECTION,
        )
        children = [projection]
        if self.check_kw("FROM"):
            children.append(self.parse_from_clause())
        if self.match_kw("WHERE"):
            children.append(self.parse_expr().with_key(AttrKey.WHERE))
        if self.check_kw("GROUP"):
            self.advance()
            self.expect_kw("BY")
            exprs = [self.parse_expr()]
            while self.match(TokenKind.COMMA):
                exprs.append(self.parse_expr())
            end = self.tokens[self.pos - 1].end
            children.append(
                NodeBuilder(
                    NodeType.EXPR_LIST,
                    (exprs[0].loc[0], end - exprs[0].loc[0]),
                    children=exprs,
                    attribute_key=AttrKey.GROUP_BY,
                )
            )
        if self.check_kw("ORDER"):
            self.advance()
            self.expect_kw("BY")
            items2 = [self.parse_order_item()]
            while self.match(TokenKind.COMMA):
                items2.append(self.parse_order_item())
            end = self.tokens[self.pos - 1].end
            children.append(
                NodeBuilder(
                    NodeType.EXPR_LIST,
                    (items2[0].loc[0], end - items2[0].loc[0]),
                    children=items2,
                    attribute_key=AttrKey.ORDER_BY,
                )
            )
        if self.match_kw("LIMIT"):
            children.append(self.parse_expr().with_key(AttrKey.LIMIT))
        if self.match_kw("OFFSET"):
            children.append(self.parse_expr().with_key(AttrKey.OFFSET))
        end = self.tokens[self.pos - 1].end
        return NodeBuilder(NodeType.SELECT_QUERY, (start.start, end - start.start), children=children)

    def parse_projection_item(self) -> NodeBuilder:
        if self.check(TokenKind.STAR):
            star = self.advance()
            return NodeBuilder(NodeType.PROJ_STAR, star.span)
        expr = self.parse_expr().with_key(AttrKey.VALUE)
        children = [expr]
        end = expr.loc[0] + expr.loc[1]
        if self.match_kw("AS"):
            alias_tok = self.expect_name()
            children.append(NodeBuilder(NodeType.NAME, alias_tok.span, attribute_key=AttrKey.ALIAS))
            end = alias_tok.end
        return NodeBuilder(NodeType.PROJ_ITEM, (expr.loc[0], end - expr.loc[0]), children=children)

    def parse_from_clause(self) -> NodeBuilder:
        start = self.expect_kw("FROM")
        items: list[NodeBuilder] = []
        while True:
            if self.check(TokenKind.LPAREN):
                lp = self.advance()
                query = self.parse_select_query().with_key(AttrKey.VALUE)
                rp = self.expect(TokenKind.RPAREN, ")")
                sub_children = [query]
                end = rp.end
                if self.check(TokenKind.IDENT):
                    alias_tok = self.advance()
                    sub_children.append(
                        NodeBuilder(NodeType.NAME, alias_tok.span, attribute_key=AttrKey.ALIAS)
                    )
                    end = alias_tok.end
                items.append(
                    NodeBuilder(NodeType.SUBQUERY, (lp.start, end - lp.start), children=sub_children)
                )
            else:
                rel_tok = self.expect_name()
                items.append(NodeBuilder(NodeType.REL_NAME, rel_tok.span))
            if not self.match(TokenKind.COMMA):
                break
        end = self.tokens[self.pos - 1].end
        return NodeBuilder(
            NodeType.FROM_CLAUSE, (start.start, end - start.start), children=items, attribute_key=AttrKey.FROM
        )

    def parse_order_item(self) -> NodeBuilder:
        expr = self.parse_expr().with_key(AttrKey.VALUE)
        children = [expr]
        end = expr.loc[0] + expr.loc[1]
        direction = self.match_kw("ASC", "DESC")
        if direction is not None:
            children.append(
                NodeBuilder(
                    NodeType.SORT_DIR,
                    direction.span,
                    value=1 if direction.keyword == "DESC" else 0,
                    attribute_key=AttrKey.TYPE,
                )
            )
            end = direction.end
        return NodeBuilder(NodeType.ORDER_ITEM, (expr.loc[0], end - expr.loc[0]), children=children)

    # -- expressions ------------------------------------------------------------

    def parse_expr(self) -> NodeBuilder:
        return self.parse_or()

    def parse_or(self) -> NodeBuilder:
        left = self.parse_and()
        while self.check_kw("OR"):
            self.advance()
            right = self.parse_and()
            left = _binary(NodeType.OP_OR, left, right)
        return left

    def parse_and(self) -> NodeBuilder:
        left = self.parse_not()
        while self.check_kw("AND"):
            self.advance()
            right = self.parse_not()
            left = _binary(NodeType.OP_AND, left, right)
        return left

    def parse_not(self) -> NodeBuilder:
        if self.check_kw("NOT"):
            tok = self.advance()
            operand = self.parse_not().with_key(AttrKey.OPERAND)
            end = operand.loc[0] + operand.loc[1]
            return NodeBuilder(NodeType.OP_NOT, (tok.start, end - tok.start), children=[operand])
        return self.parse_comparison()

    def parse_comparison(self) -> NodeBuilder:
        left = self.parse_is()
        while self.peek().kind in _CMP_OPS:
            op = _CMP_OPS[self.advance().kind]
            right = self.parse_is()
            left = _binary(op, left, right)
        return left

    def parse_is(self) -> NodeBuilder:
        operand = self.parse_additive()
        while self.check_kw("IS"):
            self.advance()
            negated = self.match_kw("NOT") is not None
            null_tok = self.expect_kw("NULL")
            node_type = NodeType.OP_IS_NOT_NULL if negated else NodeType.OP_IS_NULL
            operand = NodeBuilder(
                node_type,
                (operand.loc[0], null_tok.end - operand.loc[0]),
                children=[operand.with_key(AttrKey.OPERAND)],
            )
        return operand

    def parse_additive(self) -> NodeBuilder:
        left = self.parse_multiplicative()
        while self.peek().kind in (TokenKind.PLUS, TokenKind.MINUS):
            op = NodeType.OP_ADD if self.advance().kind is TokenKind.PLUS else NodeType.OP_SUB
            right = self.parse_multiplicative()
            left = _binary(op, left, right)
        return left

    def parse_multiplicative(self) -> NodeBuilder:
        left = self.parse_unary()
        while self.peek().kind in (TokenKind.STAR, TokenKind.SLASH, TokenKind.PERCENT):
            kind = self.advance().kind
            op = {
                TokenKind.STAR: NodeType.OP_MUL,
                TokenKind.SLASH: NodeType.OP_DIV,
                TokenKind.PERCENT: NodeType.OP_MOD,
            }[kind]
            right = self.parse_unary()
            left = _binary(op, left, right)
        return left

    def parse_unary(self) -> NodeBuilder:
        if self.check(TokenKind.MINUS):
            tok = self.advance()
            operand = self.parse_unary().with_key(AttrKey.OPERAND)
            end = operand.loc[0] + operand.loc[1]
            return NodeBuilder(NodeType.OP_NEG, (tok.start, end - tok.start), children=[operand])
        if self.check(TokenKind.PLUS):
            self.advance()
            return self.parse_unary()
        return self.parse_primary()

    def parse_primary(self) -> NodeBuilder:
        tok = self.peek()
        if tok.kind is TokenKind.LPAREN:
            self.advance()
            inner = self.parse_expr()
            self.expect(TokenKind.RPAREN, ")")
            return inner
        if tok.kind is TokenKind.INTEGER:
            self.advance()
            raw = int(tok.text)
            value = raw if raw < (1 << 47) else self.arena.add_literal(raw)
            return NodeBuilder(NodeType.LITERAL_INT, tok.span, value=value)
        if tok.kind is TokenKind.FLOAT:
            self.advance()
            idx = self.arena.add_literal(float(tok.text))
            return NodeBuilder(NodeType.LITERAL_FLOAT, tok.span, value=idx)
        if tok.kind is TokenKind.STRING:
            self.advance()
            return NodeBuilder(NodeType.LITERAL_STRING, tok.span)
        if tok.kind is TokenKind.KEYWORD:
            if tok.keyword in ("TRUE", "FALSE"):
                self.advance()
                return NodeBuilder(NodeType.LITERAL_BOOL, tok.span, value=1 if tok.keyword == "TRUE" else 0)
            if tok.keyword == "NULL":
                self.advance()
                return NodeBuilder(NodeType.LITERAL_NULL, tok.span)
            if tok.keyword == "INTERVAL":
                return self.parse_interval_literal()
        if tok.kind is TokenKind.IDENT:
            self.advance()
            if self.check(TokenKind.LPAREN):
                return self.parse_call(tok)
            if self.check(TokenKind.DOT):
                self.advance()
                second = self.expect_name()
                head = NodeBuilder(NodeType.NAME, tok.span)
                tail = NodeBuilder(NodeType.NAME, second.span)
                return NodeBuilder(
                    NodeType.NAME_PATH, (tok.start, second.end - tok.start), children=[head, tail]
                )
            return NodeBuilder(NodeType.NAME, tok.span)
        raise ParseError(f"unexpected {describe(tok)}", tok, ("expression",))

    def parse_call(self, name_tok: Token) -> NodeBuilder:
        self.expect(TokenKind.LPAREN, "(")
        name = NodeBuilder(NodeType.NAME, name_tok.span, attribute_key=AttrKey.NAME)
        args: list[NodeBuilder] = [name]
        if not self.check(TokenKind.RPAREN):
            while True:
                if self.check(TokenKind.STAR):  # count(*)
                    star = self.advance()
                    args.append(NodeBuilder(NodeType.PROJ_STAR, star.span))
                else:
                    args.append(self.parse_expr())
                if not self.match(TokenKind.COMMA):
                    break
        rp = self.expect(TokenKind.RPAREN, ")")
        return NodeBuilder(NodeType.EXPR_CALL, (name_tok.start, rp.end - name_tok.start), children=args)

    def parse_interval_literal(self) -> NodeBuilder:
        start = self.advance()
        amount_tok = self.peek()
        if amount_tok.kind is TokenKind.STRING:
            self.advance()
            amount = int(amount_tok.text[1:-1])
        elif amount_tok.kind is TokenKind.INTEGER:
            self.advance()
            amount = int(amount_tok.text)
        else:
            raise ParseError(
                f"unexpected {describe(amount_tok)}", amount_tok, ("interval amount",)
            )
        unit_tok = self.peek()
        unit_word = (unit_tok.keyword or unit_tok.text).upper()
        if unit_word.endswith("S"):
            unit_word = unit_word[:-1]
        if unit_word not in _INTERVAL_UNITS:
            raise ParseError(f"unknown interval unit {describe(unit_tok)}", unit_tok, ("HOUR", "DAY"))
        self.advance()
        micros = amount * _INTERVAL_UNITS[unit_word]
        idx = self.arena.add_literal(micros)
        return NodeBuilder(
            NodeType.LITERAL_INTERVAL, (start.start, unit_tok.end - start.start), value=idx
        )

    # -- key-value settings ------------------------------------------------------

    def parse_kv_object(self) -> NodeBuilder:
        lp = self.expect(TokenKind.LPAREN, "(")
        entries: list[NodeBuilder] = []
        while not self.check(TokenKind.RPAREN):
            key = self.parse_kv_key()
            self.expect(TokenKind.EQ, "=")
            value = self.parse_kv_value().with_key(AttrKey.VALUE)
            key_text = self.arena.script_text[key.loc[0] : key.loc[0] + key.loc[1]]
            attr = _KNOWN_KV_KEYS.get(key_text.strip("'\"").lower(), AttrKey.NONE)
            entries.append(
                NodeBuilder(
                    NodeType.ENTRY,
                    (key.loc[0], value.loc[0] + value.loc[1] - key.loc[0]),
                    children=[key, value],
                    attribute_key=attr,
                )
            )
            if not self.match(TokenKind.COMMA):
                break
        rp = self.expect(TokenKind.RPAREN, ")")
        return NodeBuilder(NodeType.OBJECT, (lp.start, rp.end - lp.start), children=entries)

    def parse_kv_key(self) -> NodeBuilder:
        tok = self.peek()
        if tok.kind is TokenKind.STRING and tok.text[0] == '"':
            self.advance()
            return NodeBuilder(NodeType.NAME, tok.span, attribute_key=AttrKey.KEY)
        if tok.kind is TokenKind.STRING:
            self.advance()
            return NodeBuilder(NodeType.NAME, tok.span, attribute_key=AttrKey.KEY)
        if tok.kind not in (TokenKind.IDENT, TokenKind.KEYWORD):
            raise ParseError(f"unexpected {describe(tok)}", tok, ("settings key",))
        self.advance()
        end = tok.end
        while self.check(TokenKind.DOT):
            self.advance()
            seg = self.peek()
            if seg.kind not in (TokenKind.IDENT, TokenKind.KEYWORD):
                raise ParseError(f"unexpected {describe(seg)}", seg, ("key segment",))
            self.advance()
            end = seg.end
        return NodeBuilder(NodeType.NAME, (tok.start, end - tok.start), attribute_key=AttrKey.KEY)

    def parse_kv_value(self) -> NodeBuilder:
        tok = self.peek()
        if tok.kind is TokenKind.LPAREN:
            return self.parse_kv_object()
        if tok.kind is TokenKind.LBRACKET:
            self.advance()
            values: list[NodeBuilder] = []
            while not self.check(TokenKind.RBRACKET):
                values.append(self.parse_kv_value())
                if not self.match(TokenKind.COMMA):
                    break
            rb = self.expect(TokenKind.RBRACKET, "]")
            return NodeBuilder(NodeType.ARRAY, (tok.start, rb.end - tok.start), children=values)
        if tok.kind is TokenKind.STRING:
            self.advance()
            return NodeBuilder(NodeType.LITERAL_STRING, tok.span)
        if tok.kind is TokenKind.INTEGER:
            self.advance()
            raw = int(tok.text)
            value = raw if raw < (1 << 47) else self.arena.add_literal(raw)
            return NodeBuilder(NodeType.LITERAL_INT, tok.span, value=value)
        if tok.kind is TokenKind.FLOAT:
            self.advance()
            return NodeBuilder(NodeType.LITERAL_FLOAT, tok.span, value=self.arena.add_literal(float(tok.text)))
        if tok.kind is TokenKind.MINUS:
            self.advance()
            num = self.peek()
            if num.kind is TokenKind.INTEGER:
                self.advance()
                raw = -int(num.text)
                return NodeBuilder(
                    NodeType.LITERAL_INT, (tok.start, num.end - tok.start), value=self.arena.add_literal(raw)
                )
            if num.kind is TokenKind.FLOAT:
                self.advance()
                return NodeBuilder(
                    NodeType.LITERAL_FLOAT,
                    (tok.start, num.end - tok.start),
                    value=self.arena.add_literal(-float(num.text)),
                )
            raise ParseError(f"unexpected {describe(num)}", num, ("number",))
        if tok.kind is TokenKind.KEYWORD and tok.keyword in ("TRUE", "FALSE"):
            self.advance()
            return NodeBuilder(NodeType.LITERAL_BOOL, tok.span, value=1 if tok.keyword == "TRUE" else 0)
        if tok.kind is TokenKind.KEYWORD and tok.keyword == "NULL":
            self.advance()
            return NodeBuilder(NodeType.LITERAL_NULL, tok.span)
        if tok.kind is TokenKind.KEYWORD and tok.keyword == "INTERVAL":
            return self.parse_interval_literal()
        if tok.kind is TokenKind.IDENT:
            self.advance()
            return NodeBuilder(NodeType.NAME, tok.span)
        raise ParseError(f"unexpected {describe(tok)}", tok, ("settings value",))


def _binary(op: NodeType, left: NodeBuilder, right: NodeBuilder) -> NodeBuilder:
    left.with_key(AttrKey.LEFT)
    right.with_key(AttrKey.RIGHT)
    loc = (left.loc[0], right.loc[0] + right.loc[1] - left.loc[0])
    return NodeBuilder(op, loc, children=[left, right])


def _resolve_viz_kind(modifiers: list[str], base: str) -> Optional[VizKind]:
    mods = frozenset(modifiers)
    table = {
        (frozenset(), "TABLE"): VizKind.TABLE,
        (frozenset(), "LINE"): VizKind.LINE,
        (frozenset({"MULTI"}), "LINE"): VizKind.MULTI_LINE,
        (frozenset({"COLORED"}), "LINE"): VizKind.MULTI_LINE,
        (frozenset(), "BAR"): VizKind.BAR,
        (frozenset({"STACKED"}), "BAR"): VizKind.STACKED_BAR,
        (frozenset(), "AREA"): VizKind.AREA,
        (frozenset({"STACKED"}), "AREA"): VizKind.STACKED_AREA,
        (frozenset(), "SCATTER"): VizKind.SCATTER,
    }
    return table.get((mods, base))


def describe(token: Token) -> str:
    if token.kind is TokenKind.EOF:
        return "end of input"
    return f"'{token.text}'"


def interval_micros(amount: int, unit: str) -> int:
    """Micros for one interval component; unit is case-insensitive,
    singular or plural."""
    word = unit.upper()
    if word.endswith("S"):
        word = word[:-1]
    return amount * _INTERVAL_UNITS[word]
