"""Corpus loading, windowing, tokenization and chronological splits.

Log lines arrive labeled (normal/abnormal), are grouped into fixed-size
windows of consecutive lines, and a window inherits the abnormal label as
soon as any of its lines is abnormal.  Splits are chronological and
contiguous so that detection rules are always validated on later traffic
than they were synthesized from.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

logger = logging.getLogger(__name__)

NORMAL = "normal"
ABNORMAL = "abnormal"

LABEL_FORMATS = ("bgl_dash", "two_column")

# Runs of ASCII whitespace separate tokens; everything else is token material.
_WHITESPACE = re.compile(r"[ \t\r\n\f\v]+")


class CorpusError(ValueError):
    """Raised for malformed corpus inputs (bad labels, count mismatches)."""


@dataclass(frozen=True)
class LogLine:
    """One labeled log line.  index is the 0-based position in the source file."""

    index: int
    text: str
    label: str

    def __post_init__(self) -> None:
        if self.label not in (NORMAL, ABNORMAL):
            raise CorpusError(f"bad line label {self.label!r}")
        if "\n" in self.text or "\r" in self.text:
            raise CorpusError("line text must not contain line terminators")


@dataclass(frozen=True)
class LogWindow:
    """A block of consecutive log lines with an inherited window label.

    A window is abnormal iff at least one member line is abnormal.  Windows
    are immutable so they can be shared freely across threads.
    """

    id: int
    lines: tuple[str, ...]
    label: str

    def __post_init__(self) -> None:
        if self.label not in (NORMAL, ABNORMAL):
            raise CorpusError(f"bad window label {self.label!r}")
        if not self.lines:
            raise CorpusError("window must contain at least one line")


@dataclass
class Dataset:
    """Windows plus their chronological split assignment.

    split maps window id to one of "train", "validation", "test".  The
    assignment is contiguous in time: train windows strictly precede
    validation windows, which strictly precede test windows.
    """

    windows: list[LogWindow]
    split: dict[int, str] = field(default_factory=dict)

    def subset(self, name: str) -> list[LogWindow]:
        return [w for w in self.windows if self.split.get(w.id) == name]

    @property
    def train(self) -> list[LogWindow]:
        return self.subset("train")

    @property
    def validation(self) -> list[LogWindow]:
        return self.subset("validation")

    @property
    def test(self) -> list[LogWindow]:
        return self.subset("test")


def tokenize(text: str) -> list[str]:
    """Split text on runs of ASCII whitespace; no lowercasing or rewriting."""
    return [t for t in _WHITESPACE.split(text) if t]


def _parse_bgl_dash(index: int, line: str) -> LogLine:
    # A leading "- " marks a healthy line and is stripped; any other leading
    # alert tag marks the line abnormal and stays part of the message text.
    if line == "-":
        return LogLine(index, "", NORMAL)
    if line.startswith("- "):
        return LogLine(index, line[2:], NORMAL)
    return LogLine(index, line, ABNORMAL)


def load_corpus(path: str | Path, label_format: str = "bgl_dash") -> list[LogLine]:
    """Read a labeled corpus file into LogLines, one per non-empty line.

    label_format "bgl_dash": a leading "- " means normal, anything else is an
    alert-tagged abnormal line.  label_format "two_column": labels live in a
    sidecar file "<name>.labels" holding one 0 (normal) or 1 (abnormal) per
    corpus line.  Undecodable bytes are replaced, never fatal.
    """
    if label_format not in LABEL_FORMATS:
        raise CorpusError(f"unknown label format {label_format!r}")
    path = Path(path)
    raw = path.read_text(encoding="utf-8", errors="replace")
    lines = raw.splitlines()

    if label_format == "bgl_dash":
        return [
            _parse_bgl_dash(i, line.rstrip("\r"))
            for i, line in enumerate(lines)
            if line.strip()
        ]

    label_path = path.with_name(path.name + ".labels")
    label_lines = label_path.read_text(encoding="utf-8", errors="replace").splitlines()
    if len(label_lines) != len(lines):
        raise CorpusError(
            f"label count mismatch: {len(lines)} corpus lines vs "
            f"{len(label_lines)} labels in {label_path.name}"
        )
    out = []
    for i, (line, tag) in enumerate(zip(lines, label_lines)):
        if not line.strip():
            continue
        tag = tag.strip()
        if tag == "0":
            label = NORMAL
        elif tag == "1":
            label = ABNORMAL
        else:
            raise CorpusError(f"bad label {tag!r} at line {i} of {label_path.name}")
        out.append(LogLine(i, line.rstrip("\r"), label))
    return out


def make_windows(
    lines: Sequence[LogLine], window_size: int = 20, stride: int | None = None
) -> list[LogWindow]:
    """Group lines into windows starting at offsets 0, stride, 2*stride, ...

    stride defaults to window_size (tumbling windows).  A trailing partial
    window is kept.  A window is labeled abnormal iff any member line is.
    """
    if window_size < 1:
        raise CorpusError("window_size must be >= 1")
    stride = window_size if stride is None else stride
    if stride < 1:
        raise CorpusError("stride must be >= 1")
    windows = []
    offset = 0
    wid = 0
    while offset < len(lines):
        chunk = lines[offset : offset + window_size]
        label = ABNORMAL if any(ln.label == ABNORMAL for ln in chunk) else NORMAL
        windows.append(LogWindow(wid, tuple(ln.text for ln in chunk), label))
        wid += 1
        offset += stride
    return windows


def split_dataset(
    windows: Sequence[LogWindow], ratio: tuple[int, int, int] = (6, 1, 3)
) -> Dataset:
    """Assign windows chronologically to train/validation/test by ratio.

    Train and validation sizes are floored; the remainder goes to test, so
    11 windows at 6:1:3 split as 6/1/4.  Corpora with fewer than 3 windows
    go entirely to train (with a warning) since no meaningful split exists.
    """
    total = sum(ratio)
    if total <= 0 or any(r < 0 for r in ratio):
        raise CorpusError(f"bad split ratio {ratio!r}")
    windows = list(windows)
    n = len(windows)
    split: dict[int, str] = {}
    if n < 3:
        logger.warning("only %d window(s); assigning all to train", n)
        for w in windows:
            split[w.id] = "train"
        return Dataset(windows, split)
    n_train = int(n * ratio[0] / total)
    n_val = int(n * ratio[1] / total)
    for i, w in enumerate(windows):
        if i < n_train:
            split[w.id] = "train"
        elif i < n_train + n_val:
            split[w.id] = "validation"
        else:
            split[w.id] = "test"
    return Dataset(windows, split)


def dump_windows(windows: Iterable[LogWindow], sink: IO[str]) -> None:
    """Write windows as JSON lines: {"id", "label", "lines"}."""
    for w in windows:
        sink.write(
            json.dumps({"id": w.id, "label": w.label, "lines": list(w.lines)}) + "\n"
        )
