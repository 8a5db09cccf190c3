"""A small total DSL for window-level log detection rules.

A rule is a named, documented boolean expression over a window of log
lines.  Atoms cover keyword containment, restricted regular expressions,
line counts and ratios, whole-window whitelists, ordered event pairs, and
aggregates over numeric variables.  Every syntactically valid rule
evaluates to a boolean on every window; there are no runtime errors apart
from an optional wall-time budget.
"""

from .nodes import (
    AllMatch,
    And,
    Contains,
    CountCmp,
    Matches,
    Not,
    NumVarCmp,
    Or,
    Provenance,
    RatioCmp,
    Rule,
    SeqBefore,
    ast_depth,
    count_atoms,
    iter_atoms,
)
from .parser import MAX_DEPTH, ParseError, parse_rule, parse_rule_file, validate_regex
from .printer import format_expr, pretty_print
from .evaluator import EvaluationTimeout, compile_expr, evaluate
from .classify import SUBRULE_CATEGORIES, classify_subrules

__all__ = [
    "AllMatch",
    "And",
    "Contains",
    "CountCmp",
    "Matches",
    "Not",
    "NumVarCmp",
    "Or",
    "Provenance",
    "RatioCmp",
    "Rule",
    "SeqBefore",
    "ast_depth",
    "count_atoms",
    "iter_atoms",
    "MAX_DEPTH",
    "ParseError",
    "parse_rule",
    "parse_rule_file",
    "validate_regex",
    "format_expr",
    "pretty_print",
    "EvaluationTimeout",
    "compile_expr",
    "evaluate",
    "SUBRULE_CATEGORIES",
    "classify_subrules",
]
