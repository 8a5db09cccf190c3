"""Offline synthesis orchestration: two phases of epochs over a corpus.

Phase one clusters the normal training windows and synthesizes normal
rules until coverage, capacity, cluster exhaustion, or the epoch budget
stops it; phase two mirrors the loop for abnormal rules, contrasting
against the normal windows phase one left uncovered.  Every accepted rule
filters the windows it explains out of the remaining pool, so coverage
only moves forward.  The populated rule database is persisted after each
accepted rule and carries enough config and corpus identity to make a run
reproducible and auditable.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .backend import LlmBackend
from .clustering import (
    Cluster,
    default_pair_budget,
    features_by_id,
    hac_merge,
    initial_clusters,
    mean_window_lines,
    window_feature_size,
)
from .config import SynthesisConfig
from .corpus import ABNORMAL, NORMAL, Dataset, LogWindow
from .ruledsl import ParseError, Provenance, Rule, evaluate, parse_rule, pretty_print
from .sampling import build_contrastive_group, dedup_by_feature
from .synth import TranscriptWriter, run_rollouts, select_rule, validation_coverage

logger = logging.getLogger(__name__)

DB_FORMAT_VERSION = 1
DB_STATUSES = ("complete", "partial", "aborted")

ProgressFn = Callable[[dict], None]


class DatabaseError(ValueError):
    """Raised when a rule database file is missing, corrupt, or invalid."""


class SynthesisAborted(RuntimeError):
    """The backend failed persistently; carries the partial database."""

    def __init__(self, message: str, database: "RuleDatabase"):
        super().__init__(message)
        self.database = database


def corpus_fingerprint(windows: Sequence[LogWindow]) -> str:
    """A stable digest of window ids, labels, and line contents."""
    digest = hashlib.sha256()
    for window in windows:
        digest.update(str(window.id).encode("ascii"))
        digest.update(b"\x1f")
        digest.update(window.label.encode("ascii"))
        digest.update(b"\x1f")
        # Line text never contains terminators, so joining is unambiguous.
        digest.update("\n".join(window.lines).encode("utf-8", "backslashreplace"))
        digest.update(b"\x1e")
    return digest.hexdigest()


@dataclass
class RuleDatabase:
    """Ordered, capped collections of synthesized rules plus run identity.

    dsl_source is the normative representation on disk; rules are reparsed
    from it on load.  acceptance maps rule name to the evidence recorded
    when the rule was stored (currently its validation coverage).
    """

    config: dict = field(default_factory=dict)
    corpus_fingerprint: str = ""
    status: str = "complete"
    normal_rules: list[Rule] = field(default_factory=list)
    abnormal_rules: list[Rule] = field(default_factory=list)
    acceptance: dict[str, dict] = field(default_factory=dict)

    def rules_for(self, kind: str) -> list[Rule]:
        if kind == NORMAL:
            return self.normal_rules
        if kind == ABNORMAL:
            return self.abnormal_rules
        raise ValueError(f"bad rule kind {kind!r}")

    def all_rules(self) -> list[Rule]:
        """Normal rules first, then abnormal: the cascade order."""
        return self.normal_rules + self.abnormal_rules

    def add_rule(self, rule: Rule, evidence: dict) -> None:
        names = {r.name for r in self.all_rules()}
        if rule.name in names:
            raise ValueError(f"duplicate rule name {rule.name!r}")
        self.rules_for(rule.kind).append(rule)
        self.acceptance[rule.name] = dict(evidence)

    def to_dict(self) -> dict:
        def record(rule: Rule) -> dict:
            return {
                "name": rule.name,
                "kind": rule.kind,
                "docstring": rule.docstring,
                "dsl_source": pretty_print(rule),
                "provenance": rule.provenance.to_dict() if rule.provenance else None,
                "acceptance": self.acceptance.get(rule.name, {}),
            }

        return {
            "version": DB_FORMAT_VERSION,
            "config": self.config,
            "corpus_fingerprint": self.corpus_fingerprint,
            "status": self.status,
            "normal_rules": [record(r) for r in self.normal_rules],
            "abnormal_rules": [record(r) for r in self.abnormal_rules],
        }

    def save(self, path: str | Path) -> None:
        path = Path(path)
        payload = json.dumps(self.to_dict(), indent=2) + "\n"
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(payload, encoding="utf-8")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | Path) -> "RuleDatabase":
        path = Path(path)
        try:
            raw = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise DatabaseError(f"cannot read rule database {path}: {exc}") from exc
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DatabaseError(
                f"corrupt rule database {path}: {exc.msg} at line {exc.lineno} "
                f"column {exc.colno} (char {exc.pos})"
            ) from exc
        if not isinstance(data, dict):
            raise DatabaseError(f"rule database {path} is not a JSON object")
        if data.get("version") != DB_FORMAT_VERSION:
            raise DatabaseError(
                f"unsupported rule database version {data.get('version')!r}"
            )
        status = data.get("status", "complete")
        if status not in DB_STATUSES:
            raise DatabaseError(f"unknown database status {status!r}")
        db = cls(
            config=data.get("config", {}),
            corpus_fingerprint=data.get("corpus_fingerprint", ""),
            status=status,
        )
        for section, kind in (("normal_rules", NORMAL), ("abnormal_rules", ABNORMAL)):
            for entry in data.get(section, []):
                source = entry.get("dsl_source")
                if not isinstance(source, str):
                    raise DatabaseError(f"rule entry in {section} lacks dsl_source")
                try:
                    rule = parse_rule(source)
                except ParseError as exc:
                    raise DatabaseError(
                        f"rule {entry.get('name')!r} does not parse: {exc}"
                    ) from exc
                if rule.kind != kind:
                    raise DatabaseError(
                        f"rule {rule.name!r} has kind {rule.kind} but sits in {section}"
                    )
                prov = entry.get("provenance")
                if prov:
                    rule = dataclasses.replace(
                        rule,
                        provenance=Provenance(
                            epoch=prov.get("epoch", 0),
                            rollout=prov.get("rollout", 0),
                            transcript_id=prov.get("transcript_id", ""),
                        ),
                    )
                db.rules_for(kind).append(rule)
                db.acceptance[rule.name] = dict(entry.get("acceptance", {}))
        return db


@dataclass
class EpochState:
    """Mutable per-phase progress: what is left to cover and from where."""

    phase: str
    initial_count: int
    remaining_window_ids: set[int]
    clusters: list[Cluster]
    epoch: int = 0
    rules_stored: int = 0
    blacklist: set[int] = field(default_factory=set)

    @property
    def coverage(self) -> float:
        if self.initial_count == 0:
            return 1.0
        return 1.0 - len(self.remaining_window_ids) / self.initial_count

    def eligible_clusters(self) -> list[Cluster]:
        return [
            c
            for c in self.clusters
            if c.member_window_ids and c.id not in self.blacklist
        ]


def apply_rule_filter(
    state: EpochState, rule: Rule, windows_by_id: Mapping[int, LogWindow]
) -> set[int]:
    """Drop every remaining window the rule classifies as its kind, from
    both the remaining pool and the cluster memberships; returns the ids
    removed.  Emptied clusters disappear."""
    if rule.kind != state.phase:
        raise ValueError(f"rule kind {rule.kind} does not match phase {state.phase}")
    matched = {
        wid
        for wid in state.remaining_window_ids
        if evaluate(rule, windows_by_id[wid].lines)
    }
    state.remaining_window_ids -= matched
    for cluster in state.clusters:
        cluster.member_window_ids -= matched
    state.clusters = [c for c in state.clusters if c.member_window_ids]
    return matched


def should_stop(state: EpochState, config: SynthesisConfig) -> bool:
    return stop_reason(state, config) is not None


def stop_reason(state: EpochState, config: SynthesisConfig) -> str | None:
    """Why the phase must end, or None to keep going."""
    if state.phase == NORMAL:
        coverage_stop, cap = config.coverage_stop_nor, config.d_nor
    else:
        coverage_stop, cap = config.coverage_stop_abn, config.d_abn
    if state.coverage >= coverage_stop:
        return "coverage"
    if state.rules_stored >= cap:
        return "capacity"
    if not state.eligible_clusters():
        return "exhausted"
    if state.epoch >= config.epoch_budget:
        return "budget"
    return None


def assert_selection_safety(
    db: RuleDatabase, validation_windows: Sequence[LogWindow]
) -> None:
    """Re-check that no stored rule claims an opposite-label validation
    window; the selection stage guarantees this at acceptance time."""
    for rule in db.all_rules():
        for window in validation_windows:
            if window.label != rule.kind and evaluate(rule, window.lines):
                raise RuntimeError(
                    f"rule {rule.name} misclassifies validation window {window.id}"
                )


def run_synthesis(
    dataset: Dataset,
    backend: LlmBackend,
    config: SynthesisConfig,
    *,
    seed: int = 0,
    db_path: str | Path | None = None,
    transcript: TranscriptWriter | None = None,
    progress: ProgressFn | None = None,
    corpus_meta: Mapping | None = None,
) -> RuleDatabase:
    """Run both synthesis phases and return the populated database.

    The database file at db_path (when given) is rewritten after every
    accepted rule with status "partial", then finalized as "complete"; a
    persistently failing backend persists it as "aborted" and raises
    SynthesisAborted.
    """
    train = dataset.train
    validation = dataset.validation
    normal_train = [w for w in train if w.label == NORMAL]
    abnormal_train = [w for w in train if w.label == ABNORMAL]
    if not normal_train:
        raise ValueError("the training split has no normal windows to learn from")

    snapshot = {"synthesis": config.to_dict(), "seed": seed}
    if corpus_meta:
        snapshot["corpus"] = dict(corpus_meta)
    db = RuleDatabase(
        config=snapshot,
        corpus_fingerprint=corpus_fingerprint(dataset.windows),
        status="partial",
    )

    windows_by_id = {w.id: w for w in train}
    mean_lines = mean_window_lines(train)
    k_window = window_feature_size(config.alpha, mean_lines)
    features = features_by_id(train, config.k_line, config.alpha, mean_lines)
    transcript = transcript or TranscriptWriter(None)

    epoch_counter = 0
    consecutive_transport = 0

    def run_phase(kind: str, targets: list[LogWindow], opposite_ids: list[int]) -> set[int]:
        nonlocal epoch_counter, consecutive_transport
        phase_seed = seed if kind == NORMAL else seed + 1
        theta = config.theta_anc_nor if kind == NORMAL else config.theta_anc_abn
        target_features = [features[w.id] for w in targets]
        clusters = initial_clusters(target_features)
        if len(clusters) > config.hac_exhaustive_limit:
            budget = default_pair_budget(len(clusters), config.hac_pair_budget_factor)
        else:
            budget = None
        clusters = hac_merge(clusters, k_window, config.m, budget, phase_seed)
        state = EpochState(
            phase=kind,
            initial_count=len(targets),
            remaining_window_ids={w.id for w in targets},
            clusters=clusters,
        )
        pool = dedup_by_feature(opposite_ids, features)
        side = db.rules_for(kind)

        while not should_stop(state, config):
            group = build_contrastive_group(
                state.eligible_clusters(),
                windows_by_id,
                features,
                pool,
                kind,
                config.w,
                theta,
            )
            if group is None:
                logger.info("phase %s: nothing left to contrast, ending", kind)
                break
            state.epoch += 1
            epoch_counter += 1
            remaining = [
                windows_by_id[i] for i in sorted(state.remaining_window_ids)
            ]
            results = run_rollouts(
                group, backend, config, remaining, epoch_counter, transcript
            )

            if all(r.status == "transport_error" for r in results):
                consecutive_transport += 1
                outcome = "transport_error"
                if consecutive_transport >= config.max_backend_failures:
                    db.status = "aborted"
                    if db_path is not None:
                        db.save(db_path)
                    raise SynthesisAborted(
                        f"backend failed for {consecutive_transport} consecutive "
                        "epochs; partial database kept",
                        db,
                    )
            else:
                consecutive_transport = 0
                candidates = [r.rule for r in results if r.status == "accepted"]
                chosen = select_rule(candidates, validation)
                if chosen is None:
                    # This cluster produced nothing usable; never sample it
                    # again so the next epoch moves to the next-largest one.
                    state.blacklist.add(group.cluster_id)
                    outcome = "no_rule"
                else:
                    rollout_index = next(
                        i for i, r in enumerate(results) if r.rule is chosen
                    )
                    named = dataclasses.replace(
                        chosen,
                        name=f"{kind}_{len(side) + 1:04d}",
                        provenance=Provenance(
                            epoch=epoch_counter,
                            rollout=rollout_index,
                            transcript_id=f"e{epoch_counter}r{rollout_index}",
                        ),
                    )
                    db.add_rule(
                        named,
                        {"validation_coverage": validation_coverage(named, validation)},
                    )
                    state.rules_stored += 1
                    apply_rule_filter(state, named, windows_by_id)
                    if db_path is not None:
                        db.save(db_path)
                    outcome = "accepted"
            if progress is not None:
                progress(
                    {
                        "phase": kind,
                        "epoch": epoch_counter,
                        "coverage": state.coverage,
                        "normal_rules": len(db.normal_rules),
                        "abnormal_rules": len(db.abnormal_rules),
                        "outcome": outcome,
                    }
                )
        reason = stop_reason(state, config)
        logger.info(
            "phase %s done after %d epochs: coverage %.4f, %d rules (%s)",
            kind, state.epoch, state.coverage, state.rules_stored,
            reason if reason is not None else "pool empty",
        )
        return state.remaining_window_ids

    uncovered_normal = run_phase(
        NORMAL, normal_train, [w.id for w in abnormal_train]
    )
    if abnormal_train:
        run_phase(ABNORMAL, abnormal_train, sorted(uncovered_normal))
    else:
        logger.info("no abnormal training windows; abnormal phase skipped")

    assert_selection_safety(db, validation)
    db.status = "complete"
    if db_path is not None:
        db.save(db_path)
    return db
