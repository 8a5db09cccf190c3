"""Shared fixtures: the planted end-to-end run is expensive, so one
session-scoped pipeline result backs every test that needs a real
synthesized database.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import pytest

from logsift.backend import MockBackend
from logsift.config import SynthesisConfig
from logsift.corpus import LogWindow, load_corpus, make_windows, split_dataset
from logsift.epochs import RuleDatabase, run_synthesis
from logsift.synthdata import write_planted_corpus


def make_window(wid: int, lines, label: str = "normal") -> LogWindow:
    return LogWindow(wid, tuple(lines), label)


@dataclass
class PlantedRun:
    corpus_path: str
    dataset: object
    truth: dict[int, str]
    db: RuleDatabase
    synth_seconds: float
    progress_events: list[dict]


@pytest.fixture(scope="session")
def planted_run(tmp_path_factory) -> PlantedRun:
    root = tmp_path_factory.mktemp("planted")
    corpus_path = root / "planted.log"
    plan = write_planted_corpus(corpus_path)

    lines = load_corpus(corpus_path, "bgl_dash")
    windows = make_windows(lines, 20)
    assert len(windows) == len(plan)
    dataset = split_dataset(windows)
    truth = {p.index: p.label for p in plan}

    events: list[dict] = []
    started = time.perf_counter()
    db = run_synthesis(
        dataset,
        MockBackend(),
        SynthesisConfig(),
        seed=7,
        db_path=root / "planted.db.json",
        progress=events.append,
    )
    elapsed = time.perf_counter() - started
    return PlantedRun(str(corpus_path), dataset, truth, db, elapsed, events)
