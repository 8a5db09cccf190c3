"""Canonical formatting for rules; parse(pretty_print(r)) reproduces r.

Connective chains print flat ("a and b and c"); structurally nested
connectives of the same type keep explicit parentheses so the tree shape
survives a round trip.  Numbers use repr, which round-trips floats.
"""

from __future__ import annotations

from .nodes import (
    AllMatch,
    And,
    Contains,
    CountCmp,
    Expr,
    Matches,
    Not,
    NumVarCmp,
    Or,
    RatioCmp,
    Rule,
    SeqBefore,
)

_STRING_REPLACEMENTS = [
    ("\\", "\\\\"),
    ('"', '\\"'),
    ("\n", "\\n"),
    ("\t", "\\t"),
    ("\r", "\\r"),
]


def _string(text: str) -> str:
    for raw, escaped in _STRING_REPLACEMENTS:
        text = text.replace(raw, escaped)
    return f'"{text}"'


def _regex(pattern: str) -> str:
    return "/" + pattern.replace("/", "\\/") + "/"


def _number(value) -> str:
    return repr(value)


def _pred(node: Expr) -> str:
    if isinstance(node, Contains):
        return f"contains({_string(node.needle)})"
    if isinstance(node, Matches):
        return f"matches({_regex(node.pattern)})"
    raise TypeError(f"not a predicate: {type(node).__name__}")


def format_expr(node: Expr) -> str:
    if isinstance(node, (Contains, Matches)):
        return _pred(node)
    if isinstance(node, CountCmp):
        return f"count({_pred(node.pred)}) {node.op} {node.threshold}"
    if isinstance(node, RatioCmp):
        return f"ratio({_pred(node.pred)}) {node.op} {_number(node.threshold)}"
    if isinstance(node, AllMatch):
        return f"all({_pred(node.pred)})"
    if isinstance(node, SeqBefore):
        return f"seq({_pred(node.first)}, {_pred(node.second)})"
    if isinstance(node, NumVarCmp):
        return (
            f"numvar({_regex(node.pattern)}, {node.agg} {node.op} "
            f"{_number(node.threshold)})"
        )
    if isinstance(node, Not):
        child = format_expr(node.child)
        if isinstance(node.child, (And, Or)):
            child = f"({child})"
        return f"not {child}"
    if isinstance(node, And):
        rendered = []
        for child in node.children:
            text = format_expr(child)
            if isinstance(child, (And, Or)):
                text = f"({text})"
            rendered.append(text)
        return " and ".join(rendered)
    if isinstance(node, Or):
        rendered = []
        for child in node.children:
            text = format_expr(child)
            if isinstance(child, Or):
                text = f"({text})"
            rendered.append(text)
        return " or ".join(rendered)
    raise TypeError(f"not an expression node: {type(node).__name__}")


def pretty_print(rule: Rule) -> str:
    """Render a rule in canonical form, ending with a newline."""
    return (
        f"rule {rule.name} {rule.kind} {_string(rule.docstring)} {{\n"
        f"  {format_expr(rule.ast)}\n"
        f"}}\n"
    )
