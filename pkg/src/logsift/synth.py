"""The per-epoch synthesis workflow: generate, test, repair, refine, select.

One rollout asks the backend for a rule over a contrastive group, then
pushes it through three gates: it must parse, it must separate the sampled
windows (local test, with a bounded repair loop on failure), and it must
cover enough of the remaining same-kind windows (generalizability, with
a refinement attempt on failure).  Several independent rollouts feed a
two-stage selection that first discards any candidate touching an
opposite-label validation window and then keeps the best-covering,
simplest, earliest survivor.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Sequence

from .backend import (
    Attachments,
    BackendError,
    ExtractionError,
    LlmBackend,
    PromptBundle,
    default_instructions,
    extract_rule,
    render_prompt,
)
from .config import SynthesisConfig
from .corpus import LogWindow
from .ruledsl import (
    EvaluationTimeout,
    ParseError,
    Rule,
    count_atoms,
    evaluate,
    parse_rule,
    pretty_print,
)
from .sampling import ContrastiveGroup

logger = logging.getLogger(__name__)

ROLLOUT_STATUSES = (
    "accepted",
    "failed_local",
    "failed_generalize",
    "transport_error",
    "epoch_discarded",
)


@dataclass
class LocalTestResult:
    """Outcome of checking a rule against its contrastive group."""

    passed: bool
    misclassified_ids: list[int] = field(default_factory=list)
    error: str | None = None


@dataclass
class RolloutResult:
    status: str
    rule: Rule | None = None
    repair_count: int = 0
    refined: bool = False
    transcript_id: str = ""

    def __post_init__(self) -> None:
        if self.status not in ROLLOUT_STATUSES:
            raise ValueError(f"bad rollout status {self.status!r}")
        if (self.rule is not None) != (self.status == "accepted"):
            raise ValueError("a rule is attached iff the rollout was accepted")


class TranscriptWriter:
    """Collects JSON-lines records of agent calls and writes them out in
    (epoch, rollout) order on flush, so concurrent rollouts still produce a
    deterministic transcript."""

    def __init__(self, sink: IO[str] | None):
        self._sink = sink
        self._lock = threading.Lock()
        self._pending: dict[tuple[int, int], list[dict]] = {}

    def record(
        self, epoch: int, rollout: int, role: str, prompt: str, outcome: str
    ) -> None:
        if self._sink is None:
            return
        entry = {
            "epoch": epoch,
            "rollout": rollout,
            "role": role,
            "prompt_hash": hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
            "outcome": outcome,
        }
        with self._lock:
            self._pending.setdefault((epoch, rollout), []).append(entry)

    def flush(self) -> None:
        if self._sink is None:
            return
        with self._lock:
            for key in sorted(self._pending):
                for entry in self._pending[key]:
                    self._sink.write(json.dumps(entry) + "\n")
            self._pending.clear()
            self._sink.flush()


_NULL_TRANSCRIPT = TranscriptWriter(None)


def local_test(
    rule: Rule, group: ContrastiveGroup, budget_s: float | None = None
) -> LocalTestResult:
    """A rule passes iff it is true on every window of its own kind in the
    group and false on every other; timeouts count as failures."""
    misclassified = []
    error = None
    for window in group.same_label_windows + group.opposite_label_windows:
        expected = window.label == rule.kind
        try:
            got = evaluate(rule, window.lines, budget_s=budget_s)
        except EvaluationTimeout:
            misclassified.append(window.id)
            error = "evaluation exceeded its wall-time budget"
            continue
        if got != expected:
            misclassified.append(window.id)
    passed = not misclassified and error is None
    if not passed and error is None:
        error = (
            "rule returned the wrong verdict on window(s) "
            + ", ".join(str(i) for i in misclassified)
        )
    return LocalTestResult(passed, misclassified, error)


def validate_generalizability(
    rule: Rule, remaining_windows: Sequence[LogWindow], threshold: float
) -> tuple[float, bool]:
    """Fraction of remaining same-kind windows the rule claims as its kind.

    An empty remainder passes vacuously with proportion 1.0: there is
    nothing left for the rule to generalize over.
    """
    if not remaining_windows:
        return 1.0, True
    covered = 0
    for window in remaining_windows:
        try:
            if evaluate(rule, window.lines):
                covered += 1
        except EvaluationTimeout:  # pragma: no cover - only with a budget set
            continue
    proportion = covered / len(remaining_windows)
    return proportion, proportion >= threshold


def _windows_by_id(group: ContrastiveGroup) -> dict[int, LogWindow]:
    return {
        w.id: w
        for w in group.same_label_windows + group.opposite_label_windows
    }


@dataclass
class _Attempt:
    rule: Rule | None
    errors: list[str]
    misclassified: list[int]


def _attempt(source: str, group: ContrastiveGroup, budget_s: float) -> _Attempt:
    try:
        rule = parse_rule(source)
    except ParseError as exc:
        return _Attempt(None, [str(exc)], [])
    result = local_test(rule, group, budget_s=budget_s)
    if result.passed:
        return _Attempt(rule, [], [])
    return _Attempt(
        None, [result.error] if result.error else [], result.misclassified_ids
    )


def repair_loop(
    source: str,
    group: ContrastiveGroup,
    backend: LlmBackend,
    config: SynthesisConfig,
    transcript: TranscriptWriter = _NULL_TRANSCRIPT,
    epoch: int = 0,
    rollout_index: int = 0,
) -> tuple[Rule | None, int]:
    """Drive the backend to fix a failing source; at most max_repair_iters
    calls.  Returns the first version passing parse and local test, with
    the number of repair calls spent."""
    attempt = _attempt(source, group, config.eval_budget_s)
    if attempt.rule is not None:
        return attempt.rule, 0
    windows_by_id = _windows_by_id(group)
    current = source
    for iteration in range(1, config.max_repair_iters + 1):
        bundle = PromptBundle(
            role="repair",
            instructions=default_instructions("repair"),
            contrastive=group,
            attachments=Attachments(
                faulty_source=current,
                error_messages=tuple(attempt.errors),
                misclassified_windows=tuple(
                    windows_by_id[i] for i in attempt.misclassified
                ),
            ),
        )
        raw = backend.complete(bundle)
        try:
            current = extract_rule(raw)
        except ExtractionError as exc:
            # The raw reply becomes the next faulty source; the missing
            # fence is itself the error evidence.
            current = raw
            attempt = _Attempt(None, [str(exc)], [])
            transcript.record(
                epoch, rollout_index, "repair", render_prompt(bundle), "no_block"
            )
            continue
        attempt = _attempt(current, group, config.eval_budget_s)
        outcome = "fixed" if attempt.rule is not None else "still_failing"
        transcript.record(
            epoch, rollout_index, "repair", render_prompt(bundle), outcome
        )
        if attempt.rule is not None:
            return attempt.rule, iteration
    return None, config.max_repair_iters


def rollout(
    group: ContrastiveGroup,
    backend: LlmBackend,
    config: SynthesisConfig,
    remaining_windows: Sequence[LogWindow],
    epoch: int = 0,
    rollout_index: int = 0,
    transcript: TranscriptWriter = _NULL_TRANSCRIPT,
) -> RolloutResult:
    """One full generate/repair/validate/refine pass over a group."""
    role = (
        "generate_normal" if group.target_kind == "normal" else "generate_abnormal"
    )
    g_threshold = config.g_nor if group.target_kind == "normal" else config.g_abn
    transcript_id = f"e{epoch}r{rollout_index}"

    bundle = PromptBundle(
        role=role, instructions=default_instructions(role), contrastive=group
    )
    try:
        raw = backend.complete(bundle)
    except BackendError as exc:
        logger.warning("rollout %s: backend failed: %s", transcript_id, exc)
        transcript.record(
            epoch, rollout_index, role, render_prompt(bundle), "transport_error"
        )
        return RolloutResult("transport_error", transcript_id=transcript_id)
    transcript.record(epoch, rollout_index, role, render_prompt(bundle), "replied")

    try:
        source = extract_rule(raw)
    except ExtractionError:
        source = raw  # let the repair loop see the unfenced reply verbatim

    try:
        rule, repairs = repair_loop(
            source, group, backend, config, transcript, epoch, rollout_index
        )
    except BackendError as exc:
        logger.warning("rollout %s: backend failed mid-repair: %s", transcript_id, exc)
        return RolloutResult("transport_error", transcript_id=transcript_id)
    if rule is None:
        return RolloutResult(
            "failed_local", repair_count=repairs, transcript_id=transcript_id
        )

    proportion, ok = validate_generalizability(rule, remaining_windows, g_threshold)
    refined = False
    refine_budget = config.max_refine_iters
    while not ok and refine_budget > 0:
        refine_budget -= 1
        refined = True
        bundle = PromptBundle(
            role="refine",
            instructions=default_instructions("refine"),
            contrastive=group,
            attachments=Attachments(current_source=pretty_print(rule)),
        )
        try:
            raw = backend.complete(bundle)
        except BackendError as exc:
            logger.warning(
                "rollout %s: backend failed mid-refine: %s", transcript_id, exc
            )
            return RolloutResult("transport_error", transcript_id=transcript_id)
        try:
            source = extract_rule(raw)
        except ExtractionError:
            transcript.record(
                epoch, rollout_index, "refine", render_prompt(bundle), "no_block"
            )
            return RolloutResult(
                "epoch_discarded", repair_count=repairs, refined=True,
                transcript_id=transcript_id,
            )
        try:
            refined_rule = parse_rule(source)
        except ParseError:
            transcript.record(
                epoch, rollout_index, "refine", render_prompt(bundle), "parse_error"
            )
            return RolloutResult(
                "epoch_discarded", repair_count=repairs, refined=True,
                transcript_id=transcript_id,
            )
        local = local_test(refined_rule, group, budget_s=config.eval_budget_s)
        if not local.passed:
            transcript.record(
                epoch, rollout_index, "refine", render_prompt(bundle), "local_fail"
            )
            return RolloutResult(
                "epoch_discarded", repair_count=repairs, refined=True,
                transcript_id=transcript_id,
            )
        transcript.record(
            epoch, rollout_index, "refine", render_prompt(bundle), "replied"
        )
        rule = refined_rule
        proportion, ok = validate_generalizability(
            rule, remaining_windows, g_threshold
        )
    if not ok:
        # A plain generalizability miss is recoverable evidence; a miss
        # after refinement burns the whole epoch.
        status = "epoch_discarded" if refined else "failed_generalize"
        return RolloutResult(
            status, repair_count=repairs, refined=refined, transcript_id=transcript_id
        )
    return RolloutResult(
        "accepted",
        rule=rule,
        repair_count=repairs,
        refined=refined,
        transcript_id=transcript_id,
    )


def run_rollouts(
    group: ContrastiveGroup,
    backend: LlmBackend,
    config: SynthesisConfig,
    remaining_windows: Sequence[LogWindow],
    epoch: int = 0,
    transcript: TranscriptWriter = _NULL_TRANSCRIPT,
) -> list[RolloutResult]:
    """Run the configured number of rollouts concurrently; results come
    back ordered by rollout index regardless of completion order."""
    with ThreadPoolExecutor(max_workers=config.rollouts) as pool:
        futures = [
            pool.submit(
                rollout,
                group,
                backend,
                config,
                remaining_windows,
                epoch,
                i,
                transcript,
            )
            for i in range(config.rollouts)
        ]
        results = [f.result() for f in futures]
    transcript.flush()
    return results


def select_rule(
    candidates: Sequence[Rule], validation_windows: Sequence[LogWindow]
) -> Rule | None:
    """Two-stage selection over accepted candidates.

    Stage one eliminates any candidate that claims even one opposite-label
    validation window.  Stage two ranks survivors by target-kind coverage,
    then fewer atoms, then earlier rollout index.
    """
    best = None
    best_key = None
    for index, rule in enumerate(candidates):
        opposite = [w for w in validation_windows if w.label != rule.kind]
        if any(evaluate(rule, w.lines) for w in opposite):
            continue
        targets = [w for w in validation_windows if w.label == rule.kind]
        if targets:
            coverage = sum(
                1 for w in targets if evaluate(rule, w.lines)
            ) / len(targets)
        else:
            coverage = 0.0
        key = (-coverage, count_atoms(rule.ast), index)
        if best_key is None or key < best_key:
            best_key = key
            best = rule
    return best


def validation_coverage(rule: Rule, validation_windows: Sequence[LogWindow]) -> float:
    """Fraction of same-kind validation windows the rule covers."""
    targets = [w for w in validation_windows if w.label == rule.kind]
    if not targets:
        return 0.0
    return sum(1 for w in targets if evaluate(rule, w.lines)) / len(targets)
