"""Total evaluation of rule expressions over windows of log lines.

Expressions compile once into nested closures; evaluation never raises for
a parsed rule on any window.  Semantics on an empty window: all() is true,
count is 0, ratio is 0, everything else (contains, matches, seq, numvar)
is false.  Connectives short-circuit left to right.

An optional wall-time budget turns slow evaluations into a distinguished
EvaluationTimeout.  The deadline is observed between atom evaluations; a
single regex search is not interruptible, which is why the grammar already
bans the regex features with the worst backtracking behavior.
"""

from __future__ import annotations

import math
import operator
import re
import time
from functools import lru_cache
from typing import Callable, Sequence

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

_monotonic = time.monotonic

_CMP = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
    "!=": operator.ne,
}


class EvaluationTimeout(RuntimeError):
    """Raised when an evaluation exceeds its wall-time budget."""


@lru_cache(maxsize=4096)
def _compiled_regex(pattern: str) -> re.Pattern:
    return re.compile(pattern)


def _p95(values: list[float]) -> float:
    # Nearest-rank percentile: the ceil(0.95 * n)-th smallest value.
    ordered = sorted(values)
    rank = math.ceil(0.95 * len(ordered))
    return ordered[max(rank, 1) - 1]


_AGG = {
    "max": max,
    "min": min,
    "sum": sum,
    "mean": lambda vals: sum(vals) / len(vals),
    "p95": _p95,
}

# A compiled expression maps (lines, joined, deadline) -> bool, where joined
# is "\n".join(lines) shared across atoms, and deadline is a monotonic-clock
# instant or None.
EvalFn = Callable[[Sequence[str], str, float | None], bool]


def _check_deadline(deadline: float | None) -> None:
    if deadline is not None and _monotonic() > deadline:
        raise EvaluationTimeout("evaluation exceeded its wall-time budget")


def _compile_pred(node) -> Callable[[str], bool]:
    if isinstance(node, Contains):
        needle = node.needle
        return lambda line: needle in line
    if isinstance(node, Matches):
        search = _compiled_regex(node.pattern).search
        return lambda line: search(line) is not None
    raise TypeError(f"not a predicate: {type(node).__name__}")


def compile_expr(node: Expr) -> EvalFn:
    if isinstance(node, Contains):
        needle = node.needle
        if needle == "":
            # Every line contains the empty string, but an empty window has
            # no line to contain it.
            return lambda lines, joined, deadline: bool(lines)
        if "\n" in needle:
            return lambda lines, joined, deadline: any(
                needle in line for line in lines
            )
        # The join separator is "\n", which a newline-free needle can never
        # straddle, so one substring scan replaces the per-line loop.
        return lambda lines, joined, deadline: needle in joined

    if isinstance(node, Matches):
        search = _compiled_regex(node.pattern).search

        def run_matches(lines, joined, deadline):
            _check_deadline(deadline)
            for line in lines:
                if search(line) is not None:
                    return True
            return False

        return run_matches

    if isinstance(node, CountCmp):
        pred = _compile_pred(node.pred)
        cmp = _CMP[node.op]
        threshold = node.threshold

        def run_count(lines, joined, deadline):
            _check_deadline(deadline)
            return cmp(sum(1 for line in lines if pred(line)), threshold)

        return run_count

    if isinstance(node, RatioCmp):
        pred = _compile_pred(node.pred)
        cmp = _CMP[node.op]
        threshold = node.threshold

        def run_ratio(lines, joined, deadline):
            _check_deadline(deadline)
            if not lines:
                return cmp(0.0, threshold)
            hits = sum(1 for line in lines if pred(line))
            return cmp(hits / len(lines), threshold)

        return run_ratio

    if isinstance(node, AllMatch):
        pred = _compile_pred(node.pred)

        def run_all(lines, joined, deadline):
            _check_deadline(deadline)
            return all(pred(line) for line in lines)

        return run_all

    if isinstance(node, SeqBefore):
        first = _compile_pred(node.first)
        second = _compile_pred(node.second)

        def run_seq(lines, joined, deadline):
            _check_deadline(deadline)
            for i, line in enumerate(lines):
                if first(line):
                    return any(second(later) for later in lines[i + 1 :])
            return False

        return run_seq

    if isinstance(node, NumVarCmp):
        search = _compiled_regex(node.pattern).search
        agg = _AGG[node.agg]
        cmp = _CMP[node.op]
        threshold = node.threshold

        def run_numvar(lines, joined, deadline):
            _check_deadline(deadline)
            values = []
            for line in lines:
                m = search(line)
                if m is None:
                    continue
                captured = m.group(1)
                if captured is None:
                    continue
                try:
                    values.append(float(captured))
                except ValueError:
                    continue
            if not values:
                return False
            return cmp(agg(values), threshold)

        return run_numvar

    if isinstance(node, Not):
        child = compile_expr(node.child)
        return lambda lines, joined, deadline: not child(lines, joined, deadline)

    if isinstance(node, And):
        children = tuple(compile_expr(c) for c in node.children)

        def run_and(lines, joined, deadline):
            for child in children:
                if not child(lines, joined, deadline):
                    return False
            return True

        return run_and

    if isinstance(node, Or):
        children = tuple(compile_expr(c) for c in node.children)

        def run_or(lines, joined, deadline):
            for child in children:
                if child(lines, joined, deadline):
                    return True
            return False

        return run_or

    raise TypeError(f"not an expression node: {type(node).__name__}")


def compiled_fn(rule: Rule) -> EvalFn:
    """Return (and cache) the compiled evaluator for a rule."""
    fn = rule._fn
    if fn is None:
        fn = compile_expr(rule.ast)
        rule._fn = fn
    return fn


def evaluate(
    rule: Rule, window: Sequence[str], budget_s: float | None = None
) -> bool:
    """Evaluate a rule over a window of line texts.

    True means the window is of the rule's kind.  budget_s, when given,
    bounds wall time; exceeding it raises EvaluationTimeout.
    """
    fn = compiled_fn(rule)
    joined = "\n".join(window)
    deadline = _monotonic() + budget_s if budget_s is not None else None
    return bool(fn(window, joined, deadline))
