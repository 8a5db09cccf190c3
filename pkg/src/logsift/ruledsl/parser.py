"""Lexer and recursive-descent parser for the rule DSL.

Grammar (comments run from '#' to end of line, files are UTF-8):

    rule   := "rule" IDENT kind STRING "{" expr "}"
    kind   := "normal" | "abnormal"
    expr   := or
    or     := and ("or" and)*
    and    := unary ("and" unary)*
    unary  := "not" unary | "(" expr ")" | atom
    atom   := "contains" "(" STRING ")"
            | "matches" "(" REGEX ")"
            | "count" "(" pred ")" cmp INT
            | "ratio" "(" pred ")" cmp FLOAT
            | "all" "(" pred ")"
            | "seq" "(" pred "," pred ")"
            | "numvar" "(" REGEX "," agg cmp NUMBER ")"
    pred   := "contains" "(" STRING ")" | "matches" "(" REGEX ")"
    agg    := "max" | "min" | "mean" | "sum" | "p95"
    cmp    := "<" | "<=" | ">" | ">=" | "==" | "!="

STRING is double-quoted with backslash escapes; REGEX is /.../-delimited
with \\/ for a literal slash.  Regexes are restricted to a linear-time
friendly subset: no backreferences, no lookaround.  Expression trees may
nest at most MAX_DEPTH levels.  All parse failures raise ParseError with a
1-based source position and a category prefix in the message (lexical
error, syntax error, unsupported regex feature, depth overflow).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

try:  # Python >= 3.11 moved the bytecode-level regex parser
    from re import _constants as sre_constants  # type: ignore[attr-defined]
    from re import _parser as sre_parse  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - version fallback
    import sre_constants
    import sre_parse

from .nodes import (
    AGGREGATORS,
    AllMatch,
    And,
    Contains,
    CountCmp,
    Expr,
    KINDS,
    Matches,
    Not,
    NumVarCmp,
    Or,
    RatioCmp,
    Rule,
    SeqBefore,
    ast_depth,
)

MAX_DEPTH = 32

# Guard against pathological nesting before the exact depth check, so deep
# hostile inputs produce a ParseError rather than a RecursionError.
_DESCENT_LIMIT = MAX_DEPTH + 8

_STRING_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", '"': '"'}

_IDENT_START = re.compile(r"[A-Za-z_]")
_IDENT_BODY = re.compile(r"[A-Za-z0-9_]")


class ParseError(ValueError):
    """A positioned parse failure.

    message carries a category prefix; line and column are 1-based and
    always fall within the source text; excerpt is the offending line.
    """

    def __init__(self, message: str, line: int, column: int, excerpt: str = ""):
        super().__init__(f"{message} (line {line}, column {column})")
        self.message = message
        self.line = line
        self.column = column
        self.excerpt = excerpt


@dataclass(frozen=True)
class _Token:
    type: str  # IDENT STRING REGEX INT FLOAT CMP LBRACE RBRACE LPAREN RPAREN COMMA EOF
    value: object
    line: int
    column: int


class _Lexer:
    def __init__(self, source: str):
        self.source = source
        self.pos = 0
        self.line = 1
        self.col = 1
        self.lines = source.splitlines() or [""]

    def _err(self, message: str, line: int | None = None, col: int | None = None):
        line = self.line if line is None else line
        col = self.col if col is None else col
        excerpt = self.lines[line - 1] if line - 1 < len(self.lines) else ""
        raise ParseError(f"lexical error: {message}", line, col, excerpt)

    def _advance(self, ch: str) -> None:
        if ch == "\n":
            self.line += 1
            self.col = 1
        else:
            self.col += 1
        self.pos += 1

    def _take(self) -> str:
        ch = self.source[self.pos]
        self._advance(ch)
        return ch

    def tokens(self) -> list[_Token]:
        out = []
        src = self.source
        while self.pos < len(src):
            ch = src[self.pos]
            if ch in " \t\r\n":
                self._advance(ch)
                continue
            if ch == "#":
                while self.pos < len(src) and src[self.pos] != "\n":
                    self._advance(src[self.pos])
                continue
            start_line, start_col = self.line, self.col
            if ch == '"':
                out.append(self._string(start_line, start_col))
            elif ch == "/":
                out.append(self._regex(start_line, start_col))
            elif ch in "{}(),":
                self._advance(ch)
                kind = {
                    "{": "LBRACE",
                    "}": "RBRACE",
                    "(": "LPAREN",
                    ")": "RPAREN",
                    ",": "COMMA",
                }[ch]
                out.append(_Token(kind, ch, start_line, start_col))
            elif ch in "<>=!":
                out.append(self._comparator(start_line, start_col))
            elif ch == "-" or ch.isdigit():
                out.append(self._number(start_line, start_col))
            elif _IDENT_START.match(ch):
                out.append(self._ident(start_line, start_col))
            else:
                self._err(f"unexpected character {ch!r}")
        out.append(_Token("EOF", None, self.line, max(self.col, 1)))
        return out

    def _string(self, line: int, col: int) -> _Token:
        self._take()  # opening quote
        buf = []
        while True:
            if self.pos >= len(self.source):
                self._err("unterminated string", line, col)
            ch = self._take()
            if ch == '"':
                return _Token("STRING", "".join(buf), line, col)
            if ch == "\\":
                if self.pos >= len(self.source):
                    self._err("unterminated string", line, col)
                esc_line, esc_col = self.line, self.col
                esc = self._take()
                if esc not in _STRING_ESCAPES:
                    self._err(f"unknown string escape \\{esc}", esc_line, esc_col - 1)
                buf.append(_STRING_ESCAPES[esc])
            else:
                buf.append(ch)

    def _regex(self, line: int, col: int) -> _Token:
        self._take()  # opening slash
        buf = []
        while True:
            if self.pos >= len(self.source):
                self._err("unterminated regex", line, col)
            ch = self._take()
            if ch == "/":
                return _Token("REGEX", "".join(buf), line, col)
            if ch == "\\":
                if self.pos >= len(self.source):
                    self._err("unterminated regex", line, col)
                nxt = self._take()
                if nxt == "/":
                    buf.append("/")
                else:
                    buf.append("\\")
                    buf.append(nxt)
            else:
                buf.append(ch)

    def _comparator(self, line: int, col: int) -> _Token:
        ch = self._take()
        two = ch + (self.source[self.pos] if self.pos < len(self.source) else "")
        if two in ("<=", ">=", "==", "!="):
            self._take()
            return _Token("CMP", two, line, col)
        if ch in ("<", ">"):
            return _Token("CMP", ch, line, col)
        self._err(f"unexpected character {ch!r}", line, col)

    def _number(self, line: int, col: int) -> _Token:
        buf = [self._take()]  # '-' or first digit
        if buf[0] == "-" and (
            self.pos >= len(self.source) or not self.source[self.pos].isdigit()
        ):
            self._err("expected digits after '-'", line, col)
        is_float = False
        while self.pos < len(self.source) and self.source[self.pos].isdigit():
            buf.append(self._take())
        if self.pos < len(self.source) and self.source[self.pos] == ".":
            is_float = True
            buf.append(self._take())
            if self.pos >= len(self.source) or not self.source[self.pos].isdigit():
                self._err("expected digits after decimal point", line, col)
            while self.pos < len(self.source) and self.source[self.pos].isdigit():
                buf.append(self._take())
        if self.pos < len(self.source) and self.source[self.pos] in "eE":
            is_float = True
            buf.append(self._take())
            if self.pos < len(self.source) and self.source[self.pos] in "+-":
                buf.append(self._take())
            if self.pos >= len(self.source) or not self.source[self.pos].isdigit():
                self._err("expected digits in exponent", line, col)
            while self.pos < len(self.source) and self.source[self.pos].isdigit():
                buf.append(self._take())
        text = "".join(buf)
        if is_float:
            value = float(text)
            if value != value or value in (float("inf"), float("-inf")):
                self._err(f"non-finite number {text}", line, col)
            return _Token("FLOAT", value, line, col)
        return _Token("INT", int(text), line, col)

    def _ident(self, line: int, col: int) -> _Token:
        buf = [self._take()]
        while self.pos < len(self.source) and _IDENT_BODY.match(self.source[self.pos]):
            buf.append(self._take())
        return _Token("IDENT", "".join(buf), line, col)


def validate_regex(pattern: str, line: int = 1, column: int = 1, excerpt: str = ""):
    """Compile pattern and reject constructs outside the supported subset.

    Returns the compiled pattern.  Backreferences, conditional groups and
    lookaround are rejected; classes, alternation, repetition, anchors and
    plain groups pass.
    """
    try:
        compiled = re.compile(pattern)
    except re.error as exc:
        raise ParseError(f"syntax error: bad regex: {exc}", line, column, excerpt)
    try:
        tree = sre_parse.parse(pattern)
    except re.error as exc:  # pragma: no cover - compile above catches first
        raise ParseError(f"syntax error: bad regex: {exc}", line, column, excerpt)

    def reject(feature: str):
        raise ParseError(
            f"unsupported regex feature: {feature}", line, column, excerpt
        )

    def walk(subpattern):
        for op, av in subpattern:
            if op in (sre_constants.ASSERT, sre_constants.ASSERT_NOT):
                reject("lookaround")
            elif op is sre_constants.GROUPREF:
                reject("backreference")
            elif op is sre_constants.GROUPREF_EXISTS:
                reject("conditional group")
            elif op is sre_constants.SUBPATTERN:
                walk(av[3])
            elif op is sre_constants.BRANCH:
                for branch in av[1]:
                    walk(branch)
            elif op in (sre_constants.MAX_REPEAT, sre_constants.MIN_REPEAT):
                walk(av[2])
            elif getattr(sre_constants, "POSSESSIVE_REPEAT", None) is not None and op in (
                sre_constants.POSSESSIVE_REPEAT,  # pragma: no cover - py3.11+
                getattr(sre_constants, "ATOMIC_GROUP", None),
            ):
                walk(av[2] if op is sre_constants.POSSESSIVE_REPEAT else av)

    walk(tree)
    return compiled


class _Parser:
    def __init__(self, tokens: list[_Token], lines: list[str]):
        self.tokens = tokens
        self.pos = 0
        self.lines = lines

    def _peek(self) -> _Token:
        return self.tokens[self.pos]

    def _next(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.type != "EOF":
            self.pos += 1
        return tok

    def _err(self, message: str, tok: _Token):
        excerpt = self.lines[tok.line - 1] if tok.line - 1 < len(self.lines) else ""
        raise ParseError(message, tok.line, tok.column, excerpt)

    def _syntax(self, message: str, tok: _Token):
        self._err(f"syntax error: {message}", tok)

    def _expect(self, ttype: str, what: str) -> _Token:
        tok = self._next()
        if tok.type != ttype:
            self._syntax(f"expected {what}, got {self._describe(tok)}", tok)
        return tok

    @staticmethod
    def _describe(tok: _Token) -> str:
        if tok.type == "EOF":
            return "end of input"
        return repr(tok.value)

    def _expect_keyword(self, word: str) -> _Token:
        tok = self._next()
        if tok.type != "IDENT" or tok.value != word:
            self._syntax(f"expected {word!r}, got {self._describe(tok)}", tok)
        return tok

    def at_eof(self) -> bool:
        return self._peek().type == "EOF"

    def rule(self) -> Rule:
        start = self._expect_keyword("rule")
        name_tok = self._expect("IDENT", "rule name")
        kind_tok = self._next()
        if kind_tok.type != "IDENT" or kind_tok.value not in KINDS:
            self._syntax(
                f"expected rule kind 'normal' or 'abnormal', got {self._describe(kind_tok)}",
                kind_tok,
            )
        doc_tok = self._expect("STRING", "docstring")
        if not doc_tok.value:
            self._syntax("docstring must be non-empty", doc_tok)
        self._expect("LBRACE", "'{'")
        body = self.expr(1)
        self._expect("RBRACE", "'}'")
        depth = ast_depth(body)
        if depth > MAX_DEPTH:
            self._err(
                f"depth overflow: expression nests {depth} levels (max {MAX_DEPTH})",
                start,
            )
        return Rule(name_tok.value, kind_tok.value, doc_tok.value, body)

    def expr(self, depth: int) -> Expr:
        self._check_depth(depth)
        first = self.and_expr(depth + 1)
        parts = [first]
        while self._peek().type == "IDENT" and self._peek().value == "or":
            self._next()
            parts.append(self.and_expr(depth + 1))
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def and_expr(self, depth: int) -> Expr:
        self._check_depth(depth)
        parts = [self.unary(depth + 1)]
        while self._peek().type == "IDENT" and self._peek().value == "and":
            self._next()
            parts.append(self.unary(depth + 1))
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def unary(self, depth: int) -> Expr:
        self._check_depth(depth)
        tok = self._peek()
        if tok.type == "IDENT" and tok.value == "not":
            self._next()
            return Not(self.unary(depth + 1))
        if tok.type == "LPAREN":
            self._next()
            inner = self.expr(depth + 1)
            self._expect("RPAREN", "')'")
            return inner
        return self.atom(depth)

    def _check_depth(self, depth: int) -> None:
        if depth > _DESCENT_LIMIT:
            tok = self._peek()
            self._err(
                f"depth overflow: expression nests deeper than {MAX_DEPTH} levels",
                tok,
            )

    def atom(self, depth: int) -> Expr:
        tok = self._next()
        if tok.type != "IDENT":
            self._syntax(f"expected an atom, got {self._describe(tok)}", tok)
        name = tok.value
        if name == "contains":
            return self._contains()
        if name == "matches":
            return self._matches()
        if name == "count":
            pred = self._parenthesized_pred()
            op = self._expect("CMP", "comparator").value
            n_tok = self._next()
            if n_tok.type != "INT":
                self._syntax(
                    f"count threshold must be an integer, got {self._describe(n_tok)}",
                    n_tok,
                )
            return CountCmp(pred, op, n_tok.value)
        if name == "ratio":
            pred = self._parenthesized_pred()
            op = self._expect("CMP", "comparator").value
            x_tok = self._next()
            if x_tok.type not in ("FLOAT", "INT"):
                self._syntax(
                    f"ratio threshold must be a number, got {self._describe(x_tok)}",
                    x_tok,
                )
            return RatioCmp(pred, op, float(x_tok.value))
        if name == "all":
            return AllMatch(self._parenthesized_pred())
        if name == "seq":
            self._expect("LPAREN", "'('")
            first = self._pred()
            self._expect("COMMA", "','")
            second = self._pred()
            self._expect("RPAREN", "')'")
            return SeqBefore(first, second)
        if name == "numvar":
            self._expect("LPAREN", "'('")
            rx_tok = self._expect("REGEX", "a /regex/")
            excerpt = self.lines[rx_tok.line - 1] if rx_tok.line - 1 < len(self.lines) else ""
            compiled = validate_regex(rx_tok.value, rx_tok.line, rx_tok.column, excerpt)
            if compiled.groups < 1:
                self._syntax("numvar pattern needs a capture group", rx_tok)
            self._expect("COMMA", "','")
            agg_tok = self._next()
            if agg_tok.type != "IDENT" or agg_tok.value not in AGGREGATORS:
                self._syntax(
                    f"expected aggregator {'/'.join(AGGREGATORS)}, got {self._describe(agg_tok)}",
                    agg_tok,
                )
            op = self._expect("CMP", "comparator").value
            v_tok = self._next()
            if v_tok.type not in ("FLOAT", "INT"):
                self._syntax(
                    f"numvar threshold must be a number, got {self._describe(v_tok)}",
                    v_tok,
                )
            self._expect("RPAREN", "')'")
            return NumVarCmp(rx_tok.value, agg_tok.value, op, float(v_tok.value))
        self._syntax(f"expected an atom, got {name!r}", tok)

    def _contains(self) -> Contains:
        self._expect("LPAREN", "'('")
        s_tok = self._expect("STRING", "a string")
        self._expect("RPAREN", "')'")
        return Contains(s_tok.value)

    def _matches(self) -> Matches:
        self._expect("LPAREN", "'('")
        rx_tok = self._expect("REGEX", "a /regex/")
        excerpt = self.lines[rx_tok.line - 1] if rx_tok.line - 1 < len(self.lines) else ""
        validate_regex(rx_tok.value, rx_tok.line, rx_tok.column, excerpt)
        self._expect("RPAREN", "')'")
        return Matches(rx_tok.value)

    def _parenthesized_pred(self) -> Expr:
        self._expect("LPAREN", "'('")
        pred = self._pred()
        self._expect("RPAREN", "')'")
        return pred

    def _pred(self) -> Expr:
        tok = self._peek()
        if tok.type == "IDENT" and tok.value == "contains":
            self._next()
            return self._contains()
        if tok.type == "IDENT" and tok.value == "matches":
            self._next()
            return self._matches()
        self._syntax(
            f"expected contains(...) or matches(...), got {self._describe(tok)}", tok
        )


def _parser_for(source: str) -> _Parser:
    lexer = _Lexer(source)
    return _Parser(lexer.tokens(), lexer.lines)


def parse_rule(source: str) -> Rule:
    """Parse exactly one rule; trailing content is a syntax error."""
    parser = _parser_for(source)
    rule = parser.rule()
    if not parser.at_eof():
        tok = parser._peek()
        parser._syntax(f"expected end of input, got {parser._describe(tok)}", tok)
    return rule


def parse_rule_file(source: str) -> list[Rule]:
    """Parse a UTF-8 rule file holding one or more rules."""
    parser = _parser_for(source)
    rules = [parser.rule()]
    while not parser.at_eof():
        rules.append(parser.rule())
    return rules
