"""Backend-facing types: prompt bundles, token accounting, the interface."""

from __future__ import annotations

import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

from ..sampling import ContrastiveGroup
from ..corpus import LogWindow

ROLES = ("generate_normal", "generate_abnormal", "repair", "refine")
GENERATE_ROLES = ("generate_normal", "generate_abnormal")


class BackendError(RuntimeError):
    """Transport failure, bad response, or missing credentials."""


@dataclass(frozen=True)
class Attachments:
    """Role-specific extras carried alongside the contrastive windows."""

    faulty_source: str | None = None
    error_messages: tuple[str, ...] | None = None
    misclassified_windows: tuple[LogWindow, ...] | None = None
    current_source: str | None = None

    def empty(self) -> bool:
        return (
            self.faulty_source is None
            and self.error_messages is None
            and self.misclassified_windows is None
            and self.current_source is None
        )


@dataclass(frozen=True)
class PromptBundle:
    """Everything one model call needs, validated per role.

    Generation carries only instructions and the contrastive windows;
    repair adds the faulty source with its evidence; refine adds the
    current source that needs more general logic.
    """

    role: str
    instructions: str
    contrastive: ContrastiveGroup
    attachments: Attachments = field(default_factory=Attachments)

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"bad bundle role {self.role!r}")
        if not self.instructions:
            raise ValueError("bundle instructions must be non-empty")
        att = self.attachments
        if self.role in GENERATE_ROLES and not att.empty():
            raise ValueError(f"{self.role} bundles must not carry attachments")
        if self.role == "repair":
            if att.faulty_source is None or att.error_messages is None:
                raise ValueError(
                    "repair bundles need faulty_source and error_messages"
                )
        if self.role == "refine" and att.current_source is None:
            raise ValueError("refine bundles need current_source")


class TokenCounter:
    """Thread-safe monotone counters of prompt and completion tokens."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._input = 0
        self._output = 0

    def add(self, input_tokens: int, output_tokens: int) -> None:
        if input_tokens < 0 or output_tokens < 0:
            raise ValueError("token counts must be non-negative")
        with self._lock:
            self._input += input_tokens
            self._output += output_tokens

    @property
    def input_tokens(self) -> int:
        with self._lock:
            return self._input

    @property
    def output_tokens(self) -> int:
        with self._lock:
            return self._output


class LlmBackend(ABC):
    """A backend maps a prompt bundle to raw model output text.

    Implementations must tolerate concurrent complete() calls; rollouts
    within an epoch run in parallel.
    """

    @abstractmethod
    def complete(self, bundle: PromptBundle) -> str:
        raise NotImplementedError
