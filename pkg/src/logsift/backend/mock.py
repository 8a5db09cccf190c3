"""A deterministic, network-free backend for tests and reproducible runs.

The mock is a pure function of the prompt bundle.  Generation looks for a
token that perfectly separates the two sides of the contrastive group and
emits a contains rule on it; when no such token exists it falls back to a
line-count rule on the most frequent target-side token, thresholded at the
midpoint of the two sides' mean per-window counts.  Repair re-emits the
faulty source with balanced delimiters; refine replaces literal tokens
holding long hex runs with a regex generalization.
"""

from __future__ import annotations

import re

from ..corpus import LogWindow, tokenize
from ..ruledsl import (
    AllMatch,
    And,
    Contains,
    CountCmp,
    Matches,
    Not,
    NumVarCmp,
    Or,
    RatioCmp,
    Rule,
    SeqBefore,
    parse_rule,
    ParseError,
    pretty_print,
)
from .base import LlmBackend, PromptBundle

_HEX_RUN = re.compile(r"[0-9a-f]{8,}")
_HEX_PATTERN = "[0-9a-f]{8,}"


def _window_tokens(window: LogWindow) -> list[str]:
    tokens: list[str] = []
    for line in window.lines:
        tokens.extend(tokenize(line))
    return tokens


def _fence(source: str, lead: str) -> str:
    return f"{lead}\n\n```\n{source}```\n"


class MockBackend(LlmBackend):
    """Pure stand-in for a language model; no state, no randomness."""

    def complete(self, bundle: PromptBundle) -> str:
        if bundle.role in ("generate_normal", "generate_abnormal"):
            return self._generate(bundle)
        if bundle.role == "repair":
            return self._repair(bundle)
        return self._refine(bundle)

    # -- generation ------------------------------------------------------

    def _generate(self, bundle: PromptBundle) -> str:
        kind = "normal" if bundle.role == "generate_normal" else "abnormal"
        target = [
            _window_tokens(w) for w in bundle.contrastive.same_label_windows
        ]
        opposite = [
            _window_tokens(w) for w in bundle.contrastive.opposite_label_windows
        ]
        target_sets = [set(t) for t in target]
        opposite_sets = [set(t) for t in opposite]

        candidates = sorted(set().union(*target_sets)) if target_sets else []
        best_token = None
        best_key = None
        for token in candidates:
            present_t = sum(1 for s in target_sets if token in s)
            present_o = sum(1 for s in opposite_sets if token in s)
            # Highest margin first; prefer longer (more specific) tokens,
            # then lexicographic order, so the choice is deterministic.
            key = (present_t - present_o, len(token), [-ord(c) for c in token])
            if best_key is None or key > best_key:
                best_key = key
                best_token = token

        if best_token is not None and best_key[0] == len(target_sets):
            source = pretty_print(
                Rule(
                    name="candidate",
                    kind=kind,
                    docstring=(
                        f"Windows of this kind consistently contain "
                        f"{best_token!r} while the contrasting windows never do."
                    ),
                    ast=Contains(best_token),
                )
            )
            return _fence(
                source, f"The token {best_token!r} separates the two sides cleanly."
            )

        # No perfectly separating token: the signal is frequency, not
        # presence.  Count lines holding the busiest target-side token and
        # split the sides at the midpoint of their mean counts.
        freq: dict[str, int] = {}
        for tokens in target:
            for token in tokens:
                freq[token] = freq.get(token, 0) + 1
        if not freq:
            source = pretty_print(
                Rule(
                    name="candidate",
                    kind=kind,
                    docstring="Degenerate group: the target windows carry no tokens.",
                    ast=Contains(""),
                )
            )
            return _fence(source, "The target windows are empty of tokens.")
        token = max(
            sorted(freq), key=lambda t: (freq[t], len(t), [-ord(c) for c in t])
        )
        mean_t = sum(
            sum(1 for line in w.lines if token in line)
            for w in bundle.contrastive.same_label_windows
        ) / max(len(target), 1)
        mean_o = sum(
            sum(1 for line in w.lines if token in line)
            for w in bundle.contrastive.opposite_label_windows
        ) / max(len(opposite), 1)
        threshold = int((mean_t + mean_o) / 2)
        source = pretty_print(
            Rule(
                name="candidate",
                kind=kind,
                docstring=(
                    f"Windows of this kind hold more than {threshold} lines "
                    f"containing {token!r}; the contrasting windows hold fewer."
                ),
                ast=CountCmp(Contains(token), ">", threshold),
            )
        )
        return _fence(
            source,
            f"No single token separates the sides; the frequency of {token!r} does.",
        )

    # -- repair ----------------------------------------------------------

    def _repair(self, bundle: PromptBundle) -> str:
        source = bundle.attachments.faulty_source or ""
        repaired = _balance_delimiters(source)
        return _fence(repaired + "\n", "Rebalanced the delimiters of the rule.")

    # -- refine ----------------------------------------------------------

    def _refine(self, bundle: PromptBundle) -> str:
        source = bundle.attachments.current_source or ""
        try:
            rule = parse_rule(source)
        except ParseError:
            return _fence(source, "Left the rule unchanged.")
        generalized = _generalize(rule.ast)
        if generalized == rule.ast:
            return _fence(source, "Found nothing to generalize.")
        new_rule = Rule(
            name=rule.name,
            kind=rule.kind,
            docstring=rule.docstring + " (generalized over hex identifiers)",
            ast=generalized,
        )
        return _fence(
            pretty_print(new_rule),
            "Replaced literal hex identifiers with a pattern.",
        )


def _generalize(node):
    """Swap contains atoms holding >= 8 hex digits for regex matches."""
    if isinstance(node, Contains):
        if _HEX_RUN.search(node.needle):
            pieces = []
            last = 0
            for m in _HEX_RUN.finditer(node.needle):
                pieces.append(re.escape(node.needle[last : m.start()]))
                pieces.append(_HEX_PATTERN)
                last = m.end()
            pieces.append(re.escape(node.needle[last:]))
            return Matches("".join(pieces))
        return node
    if isinstance(node, Matches):
        return node
    if isinstance(node, CountCmp):
        return CountCmp(_generalize(node.pred), node.op, node.threshold)
    if isinstance(node, RatioCmp):
        return RatioCmp(_generalize(node.pred), node.op, node.threshold)
    if isinstance(node, AllMatch):
        return AllMatch(_generalize(node.pred))
    if isinstance(node, SeqBefore):
        return SeqBefore(_generalize(node.first), _generalize(node.second))
    if isinstance(node, NumVarCmp):
        return node
    if isinstance(node, Not):
        return Not(_generalize(node.child))
    if isinstance(node, And):
        return And(tuple(_generalize(c) for c in node.children))
    if isinstance(node, Or):
        return Or(tuple(_generalize(c) for c in node.children))
    raise TypeError(f"not an expression node: {type(node).__name__}")


def _balance_delimiters(source: str) -> str:
    """Append whatever closers an unbalanced rule source is missing."""
    out = source.rstrip()
    in_string = False
    in_regex = False
    escaped = False
    parens = 0
    braces = 0
    for ch in out:
        if escaped:
            escaped = False
            continue
        if ch == "\\" and (in_string or in_regex):
            escaped = True
            continue
        if in_string:
            if ch == '"':
                in_string = False
            continue
        if in_regex:
            if ch == "/":
                in_regex = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "/":
            in_regex = True
        elif ch == "(":
            parens += 1
        elif ch == ")":
            parens = max(parens - 1, 0)
        elif ch == "{":
            braces += 1
        elif ch == "}":
            braces = max(braces - 1, 0)
    if in_string:
        out += '"'
    if in_regex:
        out += "/"
    out += ")" * parens
    out += "}" * braces
    return out
