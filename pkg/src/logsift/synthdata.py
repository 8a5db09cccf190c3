"""Deterministic synthetic corpora with known ground truth.

The generators write labeled corpus files whose window-level labels are
knowable in advance, so end-to-end runs have an exact oracle.  Layouts are
organized in identical tiles repeated across the file; split boundaries
land on tile boundaries, which keeps the pattern mix of every split equal.

The planted corpus interleaves five window archetypes:
  heartbeat  mostly "heartbeat ok node ..." lines plus a few retry lines
  scrub      pure "disk scrub finished ..." maintenance windows
  config     a decoy mixing config chatter with heartbeat/retry lines,
             rare enough that synthesis stops before explaining it
  kerndtlb   windows of kernel TLB alert lines (keyword anomaly)
  storm      retry-line floods with a little heartbeat filler (count
             anomaly: the same line type as normal traffic, too often)

Identifiers (node ids, unit ids, depth values) are globally unique so no
incidental token separates windows that the planted signal should not.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

from .corpus import ABNORMAL, NORMAL
from .epochs import RuleDatabase
from .ruledsl import Contains, Rule

PLANTED_TILES = 10
PLANTED_TILE_WINDOWS = 200
WINDOW_LINES = 20


@dataclass(frozen=True)
class PlannedWindow:
    """Generator-side truth about one window."""

    index: int
    archetype: str
    label: str


class _Ids:
    """A global counter rendering unique identifier tokens."""

    def __init__(self) -> None:
        self.n = 0

    def next(self, prefix: str) -> str:
        self.n += 1
        return f"{prefix}{self.n}"


def _normal(text: str) -> str:
    return f"- {text}"


def _heartbeat_line(ids: _Ids) -> str:
    return f"heartbeat ok node {ids.next('n')}"


def _retry_line(ids: _Ids) -> str:
    return f"warn retry queue depth {ids.next('d')}"


def _scrub_line(ids: _Ids) -> str:
    return f"disk scrub finished unit {ids.next('u')}"


def _config_line(ids: _Ids) -> str:
    return f"config sync idle on rack {ids.next('r')}"


def _kerndtlb_line(ids: _Ids) -> str:
    return f"KERNDTLB fatal data tlb error on node {ids.next('n')}"


def _heartbeat_window(rng: random.Random, ids: _Ids) -> tuple[list[str], str]:
    retries = rng.randint(1, 3)
    lines = [_normal(_heartbeat_line(ids)) for _ in range(WINDOW_LINES - retries)]
    lines += [_normal(_retry_line(ids)) for _ in range(retries)]
    rng.shuffle(lines)
    return lines, NORMAL


def _scrub_window(rng: random.Random, ids: _Ids) -> tuple[list[str], str]:
    return [_normal(_scrub_line(ids)) for _ in range(WINDOW_LINES)], NORMAL


def _config_window(rng: random.Random, ids: _Ids) -> tuple[list[str], str]:
    heartbeats = rng.randint(5, 6)
    retries = rng.randint(2, 3)
    fillers = WINDOW_LINES - heartbeats - retries
    lines = [_normal(_heartbeat_line(ids)) for _ in range(heartbeats)]
    lines += [_normal(_retry_line(ids)) for _ in range(retries)]
    lines += [_normal(_config_line(ids)) for _ in range(fillers)]
    rng.shuffle(lines)
    return lines, NORMAL


def _config_only_window(rng: random.Random, ids: _Ids) -> tuple[list[str], str]:
    return [_normal(_config_line(ids)) for _ in range(WINDOW_LINES)], NORMAL


def _kerndtlb_window(rng: random.Random, ids: _Ids) -> tuple[list[str], str]:
    return [_kerndtlb_line(ids) for _ in range(WINDOW_LINES)], ABNORMAL


def _storm_window(rng: random.Random, ids: _Ids) -> tuple[list[str], str]:
    storm = rng.randint(14, 18)
    lines = [_retry_line(ids) for _ in range(storm)]
    lines += [_normal(_heartbeat_line(ids)) for _ in range(WINDOW_LINES - storm)]
    rng.shuffle(lines)
    return lines, ABNORMAL


_ARCHETYPES: dict[str, Callable[[random.Random, _Ids], tuple[list[str], str]]] = {
    "heartbeat": _heartbeat_window,
    "scrub": _scrub_window,
    "config": _config_window,
    "config_only": _config_only_window,
    "kerndtlb": _kerndtlb_window,
    "storm": _storm_window,
}


def _planted_tile_layout() -> list[str]:
    """One tile: 166 heartbeat, 26 scrub, 1 config, 6 kerndtlb, 1 storm."""
    layout = ["heartbeat"] * PLANTED_TILE_WINDOWS
    for i in range(26):
        layout[3 + 7 * i] = "scrub"
    # Positions chosen off the scrub stride (3 mod 7) so nothing collides.
    for pos in (5, 35, 65, 95, 125, 155):
        layout[pos] = "kerndtlb"
    layout[100] = "config"
    layout[190] = "storm"
    counts = {name: layout.count(name) for name in set(layout)}
    assert counts == {
        "heartbeat": 166, "scrub": 26, "config": 1, "kerndtlb": 6, "storm": 1,
    }, counts
    return layout


def _single_pattern_tile_layout() -> list[str]:
    """One tile: 399 heartbeat, 1 config_only, 1 kerndtlb.

    The dominant cluster holds 99.75% of the normal windows, and the decoy
    shares no token with it, so the first accepted rule cannot reach the
    decoy and the uncovered remainder stays available as phase-two
    contrast."""
    layout = ["heartbeat"] * 401
    layout[200] = "config_only"
    layout[201] = "kerndtlb"
    return layout


_MANY_PATTERN_LINES = {
    "alpha": "alpha service ready slot",
    "bravo": "bravo cache flushed slot",
    "charlie": "charlie index rotated slot",
    "delta": "delta snapshot saved slot",
}


def _many_pattern_window(name: str):
    template = _MANY_PATTERN_LINES[name]

    def build(rng: random.Random, ids: _Ids) -> tuple[list[str], str]:
        return [
            _normal(f"{template} {ids.next('s')}") for _ in range(WINDOW_LINES)
        ], NORMAL

    return build


def _many_pattern_tile_layout() -> list[str]:
    """One tile: 80/40/20/20 windows of four patterns plus 1 kerndtlb.

    Normal shares are 1/2, 1/4, 1/8, 1/8: three stored rules leave 12.5%
    uncovered, so a rule cap of three is what stops the phase.
    """
    layout = ["alpha"] * 80 + ["bravo"] * 40 + ["charlie"] * 20 + ["delta"] * 20
    layout.append("kerndtlb")
    # Interleave deterministically so no split is pattern-starved.
    rng = random.Random(97)
    rng.shuffle(layout)
    return layout


for _name in _MANY_PATTERN_LINES:
    _ARCHETYPES[_name] = _many_pattern_window(_name)


def _write_tiled_corpus(
    path: str | Path, tile_layout: list[str], tiles: int, seed: int
) -> list[PlannedWindow]:
    rng = random.Random(seed)
    ids = _Ids()
    plan: list[PlannedWindow] = []
    with open(path, "w", encoding="utf-8") as sink:
        index = 0
        for _ in range(tiles):
            for archetype in tile_layout:
                lines, label = _ARCHETYPES[archetype](rng, ids)
                for line in lines:
                    sink.write(line + "\n")
                plan.append(PlannedWindow(index, archetype, label))
                index += 1
    return plan


def write_planted_corpus(
    path: str | Path, tiles: int = PLANTED_TILES, seed: int = 7
) -> list[PlannedWindow]:
    """The main evaluation corpus: 2 learnable normal patterns, a rare
    decoy, and 2 abnormal patterns (keyword and count).  2,000 windows at
    the default tile count."""
    return _write_tiled_corpus(path, _planted_tile_layout(), tiles, seed)


def write_single_pattern_corpus(
    path: str | Path, tiles: int = 10, seed: int = 3
) -> list[PlannedWindow]:
    """A corpus whose dominant normal cluster covers 99.75% of normal
    windows, so one stored rule already crosses the coverage stop."""
    return _write_tiled_corpus(path, _single_pattern_tile_layout(), tiles, seed)


def write_many_pattern_corpus(
    path: str | Path, tiles: int = 10, seed: int = 5
) -> list[PlannedWindow]:
    """A corpus with four equally learnable normal patterns; useful for
    exercising the rule-capacity stop."""
    return _write_tiled_corpus(path, _many_pattern_tile_layout(), tiles, seed)


def synthetic_rule_database(n_normal: int = 200, n_abnormal: int = 200) -> RuleDatabase:
    """A worst-case database for throughput work: no rule ever matches the
    synthetic stream, so every window consults all of them."""
    db = RuleDatabase(config={}, corpus_fingerprint="synthetic", status="complete")
    for i in range(n_normal):
        db.add_rule(
            Rule(
                name=f"normal_{i + 1:04d}",
                kind=NORMAL,
                docstring="Synthetic load rule; never matches the bench stream.",
                ast=Contains(f"bench_normal_token_{i:04d}"),
            ),
            {"validation_coverage": 0.0},
        )
    for i in range(n_abnormal):
        db.add_rule(
            Rule(
                name=f"abnormal_{i + 1:04d}",
                kind=ABNORMAL,
                docstring="Synthetic load rule; never matches the bench stream.",
                ast=Contains(f"bench_abnormal_token_{i:04d}"),
            ),
            {"validation_coverage": 0.0},
        )
    return db


def synthetic_line_stream(
    windows: int, lines_per_window: int = WINDOW_LINES
) -> Iterator[str]:
    """Generate windows*lines_per_window log lines without holding them."""
    for w in range(windows):
        for i in range(lines_per_window):
            yield f"job step ok worker w{w % 977} seq {i} tick {w}"
