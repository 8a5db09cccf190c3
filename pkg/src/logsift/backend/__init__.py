"""Language-model backends for rule synthesis.

A backend turns a PromptBundle into raw model text.  The HTTP backend
speaks the OpenAI-style chat-completions protocol; the mock backend is a
pure deterministic stand-in that makes the whole pipeline testable and
reproducible without network access.
"""

from .base import (
    Attachments,
    BackendError,
    LlmBackend,
    PromptBundle,
    ROLES,
    TokenCounter,
)
from .prompts import (
    ExtractionError,
    default_instructions,
    extract_rule,
    grammar_text,
    render_prompt,
)
from .http import HttpBackend
from .mock import MockBackend

__all__ = [
    "Attachments",
    "BackendError",
    "LlmBackend",
    "PromptBundle",
    "ROLES",
    "TokenCounter",
    "ExtractionError",
    "default_instructions",
    "extract_rule",
    "grammar_text",
    "render_prompt",
    "HttpBackend",
    "MockBackend",
]
