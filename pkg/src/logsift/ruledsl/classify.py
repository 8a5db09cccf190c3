"""Deterministic AST-based classification of a rule's detection strategies.

Each atom maps to one category; multi-atom rules additionally report
"composition".  The mapping follows the tactic the atom expresses rather
than its surface syntax: a line count over a severity keyword is a
threshold check, a line count over an ordinary event is an event-count
check, and a whole-window whitelist flags never-seen-before patterns.
"""

from __future__ import annotations

from .nodes import (
    AllMatch,
    Contains,
    CountCmp,
    Matches,
    NumVarCmp,
    RatioCmp,
    Rule,
    SeqBefore,
    iter_atoms,
)

SUBRULE_CATEGORIES = (
    "keyword",
    "event_count",
    "new_pattern",
    "sequence",
    "variables",
    "threshold",
    "composition",
    "other",
)

_SEVERITY_MARKERS = (
    "error",
    "warn",
    "fatal",
    "critical",
    "fail",
    "exception",
    "panic",
    "severe",
    "alert",
    "emerg",
)


def _pred_text(pred) -> str:
    if isinstance(pred, Contains):
        return pred.needle
    if isinstance(pred, Matches):
        return pred.pattern
    return ""


def _mentions_severity(text: str) -> bool:
    lowered = text.lower()
    return any(marker in lowered for marker in _SEVERITY_MARKERS)


def classify_subrules(rule: Rule) -> list[str]:
    """Return the rule's categories in a fixed canonical order."""
    found = set()
    atom_count = 0
    for atom in iter_atoms(rule.ast):
        atom_count += 1
        if isinstance(atom, (Contains, Matches)):
            found.add("keyword")
        elif isinstance(atom, CountCmp):
            if _mentions_severity(_pred_text(atom.pred)):
                found.add("threshold")
            else:
                found.add("event_count")
        elif isinstance(atom, RatioCmp):
            found.add("threshold")
        elif isinstance(atom, AllMatch):
            found.add("new_pattern")
        elif isinstance(atom, SeqBefore):
            found.add("sequence")
        elif isinstance(atom, NumVarCmp):
            found.add("variables")
        else:  # pragma: no cover - future atom types
            found.add("other")
    if atom_count >= 2:
        found.add("composition")
    return [cat for cat in SUBRULE_CATEGORIES if cat in found]
