"""Prompt assembly from versioned text assets, and rule extraction.

Prompt wording lives in assets/*.txt, not in code, so prompt revisions are
reviewable diffs.  render_prompt is deterministic: the same bundle always
yields byte-identical text.
"""

from __future__ import annotations

import logging
import re
from importlib import resources

from .base import PromptBundle

logger = logging.getLogger(__name__)

_FENCED_BLOCK = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)

OUTPUT_CONSTRAINT = (
    "Answer with exactly one fenced code block (``` ... ```) containing "
    "exactly one rule in the grammar above.  Text outside the block is "
    "ignored."
)


class ExtractionError(ValueError):
    """Model output contained no fenced code block."""


def _asset(name: str) -> str:
    return (
        resources.files("logsift.backend").joinpath("assets", name).read_text("utf-8")
    )


def grammar_text() -> str:
    return _asset("grammar.txt")


def default_instructions(role: str) -> str:
    """The shipped instruction text for a bundle role."""
    return _asset(f"{role}.txt")


def _render_window(window, tag: str) -> str:
    head = f"[{tag} | {window.label} | window {window.id}]"
    return "\n".join([head, *window.lines])


def render_prompt(bundle: PromptBundle) -> str:
    """Assemble the full prompt: instructions, grammar, constraint, windows,
    attachments.  The anchor side always renders first."""
    group = bundle.contrastive
    parts = [
        bundle.instructions.rstrip("\n"),
        "RULE GRAMMAR:\n" + grammar_text().rstrip("\n"),
        OUTPUT_CONSTRAINT,
    ]
    target_blocks = []
    for window in group.same_label_windows:
        tag = "TARGET anchor" if window.id == group.anchor_id else "TARGET"
        target_blocks.append(_render_window(window, tag))
    opposite_blocks = [
        _render_window(w, "OPPOSITE") for w in group.opposite_label_windows
    ]
    parts.append("\n\n".join(target_blocks + opposite_blocks))

    att = bundle.attachments
    if att.faulty_source is not None:
        parts.append("FAULTY SOURCE:\n" + att.faulty_source.rstrip("\n"))
    if att.error_messages:
        parts.append("ERRORS:\n" + "\n".join(att.error_messages))
    if att.misclassified_windows:
        blocks = [
            _render_window(w, "MISCLASSIFIED") for w in att.misclassified_windows
        ]
        parts.append("\n\n".join(blocks))
    if att.current_source is not None:
        parts.append("CURRENT SOURCE:\n" + att.current_source.rstrip("\n"))
    return "\n\n".join(parts) + "\n"


def extract_rule(raw: str) -> str:
    """The contents of the first fenced code block in model output.

    Multiple blocks log a warning and use the first; no block is an error.
    """
    blocks = _FENCED_BLOCK.findall(raw)
    if not blocks:
        raise ExtractionError("model output contains no fenced code block")
    if len(blocks) > 1:
        logger.warning(
            "model output contains %d fenced blocks; using the first", len(blocks)
        )
    return blocks[0].strip("\n")
