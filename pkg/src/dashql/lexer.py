"""Tokenizer for DashQL scripts.

Keywords are case-insensitive. Both single- and double-quoted strings are
string tokens (double quotes carry URIs and quoted settings keys). `--`
starts a line comment. Type names like VARCHAR or TIMESTAMP are not
reserved; they are matched contextually so they stay usable as column
names.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, auto


class TokenKind(Enum):
    IDENT = auto()
    KEYWORD = auto()
    STRING = auto()
    INTEGER = auto()
    FLOAT = auto()
    # punctuation / operators
    LPAREN = auto()
    RPAREN = auto()
    LBRACKET = auto()
    RBRACKET = auto()
    COMMA = auto()
    SEMICOLON = auto()
    DOT = auto()
    STAR = auto()
    PLUS = auto()
    MINUS = auto()
    SLASH = auto()
    PERCENT = auto()
    EQ = auto()
    NEQ = auto()
    LT = auto()
    LE = auto()
    GT = auto()
    GE = auto()
    EOF = auto()


# Viz modifiers (STACKED, MULTI, GROUPED, COLORED) are deliberately not
# reserved: they are matched contextually so e.g. a view can be named
# `grouped`.
KEYWORDS = {
    "AND", "AREA", "AS", "ASC", "BAR", "BY", "CHART", "CREATE",
    "CSV", "DESC", "FALSE", "FETCH", "FILE", "FROM", "GROUP",
    "HTTP", "HTTPS", "INPUT", "INTERVAL", "IS", "JSON", "LIMIT", "LINE",
    "LOAD", "NOT", "NULL", "OFFSET", "OR", "ORDER", "PARQUET",
    "RGF", "SCATTER", "SELECT", "SET", "TABLE", "TEST", "TRUE",
    "TYPE", "USING", "VIEW", "VISUALIZE", "WHERE",
}


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    start: int
    end: int
    keyword: str = ""  # uppercase keyword name when kind is KEYWORD

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end - self.start)


class LexError(Exception):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.message = message
        self.offset = offset


_PUNCT = {
    "(": TokenKind.LPAREN,
    ")": TokenKind.RPAREN,
    "[": TokenKind.LBRACKET,
    "]": TokenKind.RBRACKET,
    ",": TokenKind.COMMA,
    ";": TokenKind.SEMICOLON,
    ".": TokenKind.DOT,
    "*": TokenKind.STAR,
    "+": TokenKind.PLUS,
    "-": TokenKind.MINUS,
    "/": TokenKind.SLASH,
    "%": TokenKind.PERCENT,
    "=": TokenKind.EQ,
}


def tokenize(script: str) -> list[Token]:
    """Scan the whole script into a token list terminated by EOF."""
    tokens: list[Token] = []
    i = 0
    n = len(script)
    while i < n:
        c = script[i]
        if c in " \t\r\n":
            i += 1
            continue
        if c == "-" and i + 1 < n and script[i + 1] == "-":
            j = script.find("\n", i)
            i = n if j < 0 else j + 1
            continue
        start = i
        if c.isalpha() or c == "_":
            j = i + 1
            while j < n and (script[j].isalnum() or script[j] == "_"):
                j += 1
            word = script[i:j]
            upper = word.upper()
            if upper in KEYWORDS:
                tokens.append(Token(TokenKind.KEYWORD, word, start, j, upper))
            else:
                tokens.append(Token(TokenKind.IDENT, word, start, j))
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and script[j].isdigit():
                j += 1
            is_float = False
            if j < n and script[j] == "." and j + 1 < n and script[j + 1].isdigit():
                is_float = True
                j += 1
                while j < n and script[j].isdigit():
                    j += 1
            if j < n and script[j] in "eE":
                k = j + 1
                if k < n and script[k] in "+-":
                    k += 1
                if k < n and script[k].isdigit():
                    is_float = True
                    j = k
                    while j < n and script[j].isdigit():
                        j += 1
            kind = TokenKind.FLOAT if is_float else TokenKind.INTEGER
            tokens.append(Token(kind, script[i:j], start, j))
            i = j
            continue
        if c == "'" or c == '"':
            quote = c
            j = i + 1
            while j < n:
                if script[j] == quote:
                    if j + 1 < n and script[j + 1] == quote:  # doubled-quote escape
                        j += 2
                        continue
                    break
                j += 1
            if j >= n:
                raise LexError("unterminated string literal", start)
            tokens.append(Token(TokenKind.STRING, script[i : j + 1], start, j + 1))
            i = j + 1
            continue
        if c == "!" and i + 1 < n and script[i + 1] == "=":
            tokens.append(Token(TokenKind.NEQ, "!=", start, i + 2))
            i += 2
            continue
        if c == "<":
            if i + 1 < n and script[i + 1] == ">":
                tokens.append(Token(TokenKind.NEQ, "<>", start, i + 2))
                i += 2
            elif i + 1 < n and script[i + 1] == "=":
                tokens.append(Token(TokenKind.LE, "<=", start, i + 2))
                i += 2
            else:
                tokens.append(Token(TokenKind.LT, "<", start, i + 1))
                i += 1
            continue
        if c == ">":
            if i + 1 < n and script[i + 1] == "=":
                tokens.append(Token(TokenKind.GE, ">=", start, i + 2))
                i += 2
            else:
                tokens.append(Token(TokenKind.GT, ">", start, i + 1))
                i += 1
            continue
        if c in _PUNCT:
            tokens.append(Token(_PUNCT[c], c, start, i + 1))
            i += 1
            continue
        raise LexError(f"unexpected character {c!r}", i)
    tokens.append(Token(TokenKind.EOF, "", n, n))
    return tokens


def unquote(text: str) -> str:
    """Decode a quoted string token's value (doubled quotes unescape)."""
    quote = text[0]
    return text[1:-1].replace(quote + quote, quote)
