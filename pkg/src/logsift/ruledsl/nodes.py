"""AST node types for the rule DSL.

Expression nodes are frozen dataclasses, so structural equality works and
fuzzers can compare parse(pretty_print(ast)) against the original tree.
Connectives are n-ary (a chain "a and b and c" is one And node); nested
connectives of the same type are therefore only produced by explicit
parentheses and must be preserved verbatim.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Union

COMPARATORS = ("<", "<=", ">", ">=", "==", "!=")
AGGREGATORS = ("max", "min", "mean", "sum", "p95")
KINDS = ("normal", "abnormal")


def _check_cmp(op: str) -> None:
    if op not in COMPARATORS:
        raise ValueError(f"bad comparator {op!r}")


@dataclass(frozen=True)
class Contains:
    """True iff some line contains the needle as a substring."""

    needle: str


@dataclass(frozen=True)
class Matches:
    """True iff some line matches the regex (unanchored search)."""

    pattern: str


# Predicates usable inside count/ratio/all/seq atoms.
Pred = Union[Contains, Matches]
_PRED_TYPES = (Contains, Matches)


def _check_pred(p) -> None:
    if not isinstance(p, _PRED_TYPES):
        raise ValueError(f"predicate must be contains/matches, got {type(p).__name__}")


@dataclass(frozen=True)
class CountCmp:
    """Compare the number of lines satisfying pred against an integer."""

    pred: Pred
    op: str
    threshold: int

    def __post_init__(self) -> None:
        _check_pred(self.pred)
        _check_cmp(self.op)
        if not isinstance(self.threshold, int) or isinstance(self.threshold, bool):
            raise ValueError("count threshold must be an int")


@dataclass(frozen=True)
class RatioCmp:
    """Compare the fraction of lines satisfying pred against a float.

    The ratio of an empty window is defined as 0.
    """

    pred: Pred
    op: str
    threshold: float

    def __post_init__(self) -> None:
        _check_pred(self.pred)
        _check_cmp(self.op)
        if not math.isfinite(self.threshold):
            raise ValueError("ratio threshold must be finite")


@dataclass(frozen=True)
class AllMatch:
    """True iff every line satisfies pred; vacuously true on empty windows."""

    pred: Pred

    def __post_init__(self) -> None:
        _check_pred(self.pred)


@dataclass(frozen=True)
class SeqBefore:
    """True iff some line satisfying first strictly precedes one satisfying second."""

    first: Pred
    second: Pred

    def __post_init__(self) -> None:
        _check_pred(self.first)
        _check_pred(self.second)


@dataclass(frozen=True)
class NumVarCmp:
    """Aggregate the first numeric capture group over matching lines, compare.

    False when no line yields a numeric capture.
    """

    pattern: str
    agg: str
    op: str
    threshold: float

    def __post_init__(self) -> None:
        if self.agg not in AGGREGATORS:
            raise ValueError(f"bad aggregator {self.agg!r}")
        _check_cmp(self.op)
        if not math.isfinite(self.threshold):
            raise ValueError("numvar threshold must be finite")


@dataclass(frozen=True)
class Not:
    child: "Expr"


@dataclass(frozen=True)
class And:
    children: tuple["Expr", ...]

    def __post_init__(self) -> None:
        if len(self.children) < 2:
            raise ValueError("and requires at least two operands")


@dataclass(frozen=True)
class Or:
    children: tuple["Expr", ...]

    def __post_init__(self) -> None:
        if len(self.children) < 2:
            raise ValueError("or requires at least two operands")


Expr = Union[
    Contains, Matches, CountCmp, RatioCmp, AllMatch, SeqBefore, NumVarCmp, Not, And, Or
]

ATOM_TYPES = (Contains, Matches, CountCmp, RatioCmp, AllMatch, SeqBefore, NumVarCmp)


def iter_atoms(expr: Expr) -> Iterator[Expr]:
    """Yield every atom of the connective tree, left to right.

    Predicates nested inside count/ratio/all/seq atoms are part of their
    atom and are not yielded separately.
    """
    if isinstance(expr, ATOM_TYPES):
        yield expr
    elif isinstance(expr, Not):
        yield from iter_atoms(expr.child)
    elif isinstance(expr, (And, Or)):
        for child in expr.children:
            yield from iter_atoms(child)
    else:
        raise TypeError(f"not an expression node: {type(expr).__name__}")


def count_atoms(expr: Expr) -> int:
    return sum(1 for _ in iter_atoms(expr))


def ast_depth(expr: Expr) -> int:
    """Nesting depth of the expression tree; atoms have depth 1."""
    if isinstance(expr, ATOM_TYPES):
        return 1
    if isinstance(expr, Not):
        return 1 + ast_depth(expr.child)
    if isinstance(expr, (And, Or)):
        return 1 + max(ast_depth(c) for c in expr.children)
    raise TypeError(f"not an expression node: {type(expr).__name__}")


@dataclass(frozen=True)
class Provenance:
    """Where a rule came from during synthesis."""

    epoch: int
    rollout: int
    transcript_id: str

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "rollout": self.rollout,
            "transcript_id": self.transcript_id,
        }


@dataclass
class Rule:
    """A named, documented detection rule of a given kind.

    kind "normal" means the rule recognizes healthy windows, "abnormal"
    means it recognizes anomalous windows.  The docstring is mandatory:
    rules double as operator-facing documentation of observed behavior.
    """

    name: str
    kind: str
    docstring: str
    ast: Expr
    provenance: Provenance | None = None
    _fn: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"bad rule kind {self.kind!r}")
        if not self.docstring:
            raise ValueError("rule docstring must be non-empty")
