"""Online detection: window the line stream and run the rule cascade.

Every window first consults the normal-rule database in insertion order;
the first hit settles the verdict as normal.  Only unclaimed windows reach
the abnormal database, and anything neither side claims defaults to
normal, so an abnormal verdict always names the rule that produced it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Mapping, Sequence

from .corpus import ABNORMAL, NORMAL, CorpusError, LogWindow
from .epochs import RuleDatabase
from .ruledsl.evaluator import compiled_fn

STAGES = ("normal_db", "abnormal_db", "default")


@dataclass(frozen=True)
class DetectionResult:
    window_id: int
    verdict: str
    matched_rule: str | None
    stage: str

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ValueError(f"bad stage {self.stage!r}")
        if (self.stage == "default") != (self.matched_rule is None):
            raise ValueError("default stage and missing rule imply each other")
        if self.verdict == ABNORMAL and self.stage != "abnormal_db":
            raise ValueError("an abnormal verdict requires an abnormal rule")

    def to_dict(self) -> dict:
        return {
            "window_id": self.window_id,
            "verdict": self.verdict,
            "matched_rule": self.matched_rule,
            "stage": self.stage,
        }


class Detector:
    """A rule database precompiled for repeated classification."""

    def __init__(self, db: RuleDatabase):
        self._normal = [(r.name, compiled_fn(r)) for r in db.normal_rules]
        self._abnormal = [(r.name, compiled_fn(r)) for r in db.abnormal_rules]

    def classify_lines(self, window_id: int, lines: Sequence[str]) -> DetectionResult:
        joined = "\n".join(lines)
        for name, fn in self._normal:
            if fn(lines, joined, None):
                return DetectionResult(window_id, NORMAL, name, "normal_db")
        for name, fn in self._abnormal:
            if fn(lines, joined, None):
                return DetectionResult(window_id, ABNORMAL, name, "abnormal_db")
        return DetectionResult(window_id, NORMAL, None, "default")

    def classify(self, window: LogWindow) -> DetectionResult:
        return self.classify_lines(window.id, window.lines)


def classify_window(db: RuleDatabase, window: LogWindow) -> DetectionResult:
    """One-shot cascade over a window; see Detector for the batched form."""
    joined = "\n".join(window.lines)
    for rule in db.normal_rules:
        if compiled_fn(rule)(window.lines, joined, None):
            return DetectionResult(window.id, NORMAL, rule.name, "normal_db")
    for rule in db.abnormal_rules:
        if compiled_fn(rule)(window.lines, joined, None):
            return DetectionResult(window.id, ABNORMAL, rule.name, "abnormal_db")
    return DetectionResult(window.id, NORMAL, None, "default")


def detect_stream(
    db: RuleDatabase,
    lines: Iterable[str],
    window_size: int = 20,
    stride: int | None = None,
) -> Iterator[DetectionResult]:
    """Classify a line stream with the same windowing as offline synthesis.

    Windows start at offsets 0, stride, 2*stride, ...; trailing partial
    windows are classified on flush.  Memory stays bounded by window_size
    regardless of stream length.
    """
    if window_size < 1:
        raise CorpusError("window_size must be >= 1")
    stride = window_size if stride is None else stride
    if stride < 1:
        raise CorpusError("stride must be >= 1")
    detector = Detector(db)
    buf: list[str] = []
    window_id = 0
    next_start = 0
    index = 0
    for line in lines:
        if index >= next_start:
            buf.append(line)
        index += 1
        if len(buf) == window_size:
            yield detector.classify_lines(window_id, tuple(buf))
            window_id += 1
            next_start += stride
            drop = min(stride, len(buf))
            del buf[:drop]
            # With stride > window_size the gap lines between windows are
            # discarded by the index >= next_start guard above.
    while buf:
        yield detector.classify_lines(window_id, tuple(buf[:window_size]))
        window_id += 1
        del buf[:stride]


def iter_raw_lines(handle: IO[str]) -> Iterator[str]:
    """Yield stripped, non-blank lines; read failures carry a byte offset."""
    offset = 0
    while True:
        try:
            raw = handle.readline()
        except OSError as exc:
            raise CorpusError(f"read failed at byte offset {offset}: {exc}") from exc
        if raw == "":
            return
        offset += len(raw.encode("utf-8", "replace"))
        line = raw.rstrip("\r\n")
        if line.strip():
            yield line


@dataclass(frozen=True)
class Metrics:
    """Confusion counts and derived ratios; abnormal is the positive class."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def compute_metrics(
    results: Sequence[DetectionResult], truth: Mapping[int, str]
) -> Metrics:
    """Score verdicts against ground-truth labels keyed by window id.

    The result ids and truth ids must coincide exactly; a mismatch is a
    caller bug, not a scoring outcome.
    """
    result_ids = [r.window_id for r in results]
    if len(set(result_ids)) != len(result_ids):
        raise ValueError("duplicate window ids in results")
    if set(result_ids) != set(truth):
        missing = set(truth) ^ set(result_ids)
        raise ValueError(f"result and truth ids do not align (difference {sorted(missing)[:5]})")
    tp = fp = fn = tn = 0
    for result in results:
        actual = truth[result.window_id]
        predicted = result.verdict
        if predicted == ABNORMAL and actual == ABNORMAL:
            tp += 1
        elif predicted == ABNORMAL and actual == NORMAL:
            fp += 1
        elif predicted == NORMAL and actual == ABNORMAL:
            fn += 1
        else:
            tn += 1
    return Metrics(tp, fp, fn, tn)
