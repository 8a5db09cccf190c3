"""Acceptance gate: nine end-to-end and property checks, one test each.

Every test prints a single machine-greppable verdict line of the form
"criterion N PASS: ..." with the measured numbers, then asserts.  The
planted-corpus pipeline run is shared through the session fixture.
"""

import os
import random
import time
from fractions import Fraction

from conftest import make_window
from logsift import cli
from logsift.backend import MockBackend
from logsift.clustering import default_pair_budget, hac_merge
from logsift.config import SynthesisConfig
from logsift.corpus import load_corpus, make_windows, split_dataset
from logsift.detector import Detector, Metrics, compute_metrics, detect_stream
from logsift.epochs import (
    RuleDatabase,
    assert_selection_safety,
    run_synthesis,
)
from logsift.ruledsl import evaluate, parse_rule, pretty_print
from logsift.ruledsl.evaluator import compile_expr
from logsift.synthdata import (
    synthetic_line_stream,
    synthetic_rule_database,
    write_many_pattern_corpus,
    write_single_pattern_corpus,
)
from fuzztools import random_rule, random_window, ref_eval
from test_clustering import _random_clusters, allpairs_hac, as_rows


def report(criterion, detail):
    print(f"criterion {criterion} PASS: {detail}")


def test_criterion_1_planted_corpus_end_to_end(planted_run):
    db = planted_run.db
    assert db.status == "complete"
    assert len(db.normal_rules) >= 2, [r.name for r in db.normal_rules]
    assert len(db.abnormal_rules) >= 2, [r.name for r in db.abnormal_rules]

    test_windows = planted_run.dataset.test
    assert len(test_windows) == 600
    detector = Detector(db)
    results = [detector.classify(w) for w in test_windows]
    truth = {w.id: planted_run.truth[w.id] for w in test_windows}
    metrics = compute_metrics(results, truth)

    assert metrics.f1 == 1.0
    assert metrics.fp == 0 and metrics.fn == 0
    assert metrics.tp == sum(1 for label in truth.values() if label == "abnormal")
    assert planted_run.synth_seconds < 60.0
    report(
        1,
        f"2000-window planted corpus: {len(db.normal_rules)} normal + "
        f"{len(db.abnormal_rules)} abnormal rules, test F1 {metrics.f1:.2f} "
        f"(tp={metrics.tp} fp={metrics.fp} fn={metrics.fn}), "
        f"synthesis {planted_run.synth_seconds:.1f}s < 60s",
    )


def test_criterion_2_clustering_matches_all_pairs_oracle():
    rng = random.Random(20224)

    # Exhaustive mode equals the independent all-pairs reference exactly
    # on inputs of at most 50 windows.
    equality_runs = 0
    for _ in range(60):
        clusters = _random_clusters(rng, max_clusters=16)
        assert sum(len(c.member_window_ids) for c in clusters) <= 50
        got = hac_merge(clusters, k_window=6, max_iters=4)
        assert as_rows(got) == allpairs_hac(as_rows(clusters), 6, 4)
        equality_runs += 1

    # Conservation and shrinkage invariants under fuzzed inputs, both in
    # exhaustive and in sampled mode.
    fuzz_runs = 0
    for i in range(1000):
        clusters = _random_clusters(rng, max_clusters=40)
        budget = default_pair_budget(len(clusters)) if i % 2 else None
        merged = hac_merge(clusters, 6, 4, pair_budget=budget, seed=i)

        members_in = sorted(m for c in clusters for m in c.member_window_ids)
        members_out = sorted(m for c in merged for m in c.member_window_ids)
        assert members_in == members_out

        by_member = {m: c for c in clusters for m in c.member_window_ids}
        for out in merged:
            parent_ids = {id(by_member[m]) for m in out.member_window_ids}
            parents = [c for c in clusters if id(c) in parent_ids]
            assert out.id == min(c.id for c in parents)
            for parent in parents:
                assert out.feature <= parent.feature
        fuzz_runs += 1

    report(
        2,
        f"exhaustive merge == all-pairs reference on {equality_runs} inputs; "
        f"member conservation and feature shrinkage held on {fuzz_runs} "
        "fuzzed inputs",
    )


def test_criterion_3_dsl_totality_and_round_trip():
    rng = random.Random(33001)
    checked = 0
    for i in range(10_000):
        rule = random_rule(rng, i)
        lines = random_window(rng)
        try:
            got = evaluate(rule, lines)
        except Exception as exc:  # pragma: no cover - the assertion message
            raise AssertionError(
                f"evaluate raised {exc!r} on {pretty_print(rule)!r} x {lines!r}"
            )
        assert got == ref_eval(rule.ast, lines), (pretty_print(rule), lines)

        reparsed = parse_rule(pretty_print(rule))
        assert reparsed.ast == rule.ast, pretty_print(rule)
        assert (reparsed.name, reparsed.kind, reparsed.docstring) == (
            rule.name,
            rule.kind,
            rule.docstring,
        )
        checked += 1
    report(
        3,
        f"{checked} random (rule, window) pairs: evaluation total, equal to "
        "the reference evaluator, and print/parse round-trip exact",
    )


def test_criterion_4_cascade_contract_fuzz():
    rng = random.Random(44001)
    checked = 0
    for i in range(1000):
        db = RuleDatabase()
        consulted = {}

        def instrumented(rule):
            inner = compile_expr(rule.ast)
            name = rule.name

            def fn(lines, joined, deadline):
                consulted[name] += 1
                return inner(lines, joined, deadline)

            return fn

        for kind, count in (("normal", rng.randint(0, 4)), ("abnormal", rng.randint(0, 4))):
            for j in range(count):
                rule = random_rule(rng, i * 10 + j)
                rule.kind = kind
                rule.name = f"{kind}_{j:04d}"
                rule._fn = instrumented(rule)
                consulted[rule.name] = 0
                db.rules_for(kind).append(rule)

        detector = Detector(db)
        lines = random_window(rng)
        result = detector.classify_lines(i, lines)

        expected = ("normal", None, "default")
        for rule in db.normal_rules:
            if ref_eval(rule.ast, lines):
                expected = ("normal", rule.name, "normal_db")
                break
        else:
            for rule in db.abnormal_rules:
                if ref_eval(rule.ast, lines):
                    expected = ("abnormal", rule.name, "abnormal_db")
                    break
        assert (result.verdict, result.matched_rule, result.stage) == expected

        if result.stage == "normal_db":
            abnormal_consulted = sum(
                consulted[r.name] for r in db.abnormal_rules
            )
            assert abnormal_consulted == 0
        if result.verdict == "abnormal":
            assert result.matched_rule is not None
        if result.matched_rule is None:
            assert result.verdict == "normal" and result.stage == "default"
        checked += 1
    report(
        4,
        f"{checked} fuzzed (database, window) pairs: normal-stage verdicts "
        "never consulted abnormal rules, abnormal verdicts always named a "
        "rule, unmatched windows defaulted to normal",
    )


def test_criterion_5_selection_safety_on_validation(planted_run):
    validation = planted_run.dataset.validation
    assert validation, "validation split must not be empty"
    violations = [
        (rule.name, window.id)
        for rule in planted_run.db.all_rules()
        for window in validation
        if window.label != rule.kind and evaluate(rule, window.lines)
    ]
    assert violations == []
    assert_selection_safety(planted_run.db, validation)
    report(
        5,
        f"{len(planted_run.db.all_rules())} stored rules x "
        f"{len(validation)} validation windows: zero opposite-label claims",
    )


def test_criterion_6_metrics_arithmetic():
    def fraction_metrics(tp, fp, fn):
        p = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
        r = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
        f1 = 2 * p * r / (p + r) if p + r else Fraction(0)
        return p, r, f1

    # The reference fixture, driven through compute_metrics itself.
    def outcome(wid, verdict):
        from logsift.detector import DetectionResult

        if verdict == "abnormal":
            return DetectionResult(wid, verdict, "abnormal_0001", "abnormal_db")
        return DetectionResult(wid, verdict, None, "default")

    results = (
        [outcome(i, "abnormal") for i in range(3)]  # 2 tp + 1 fp
        + [outcome(i, "normal") for i in range(3, 10)]  # 2 fn + 5 tn
    )
    truth = {0: "abnormal", 1: "abnormal", 2: "normal", 3: "abnormal", 4: "abnormal"}
    truth.update({i: "normal" for i in range(5, 10)})
    metrics = compute_metrics(results, truth)
    assert (metrics.tp, metrics.fp, metrics.fn, metrics.tn) == (2, 1, 2, 5)

    p, r, f1 = fraction_metrics(2, 1, 2)
    assert (p, r, f1) == (Fraction(2, 3), Fraction(1, 2), Fraction(4, 7))
    assert abs(metrics.precision - float(p)) < 1e-12
    assert abs(metrics.recall - float(r)) < 1e-12
    assert abs(metrics.f1 - float(f1)) < 1e-12

    rng = random.Random(66001)
    tables = 0
    for _ in range(200):
        tp, fp, fn, tn = (rng.randint(0, 50) for _ in range(4))
        m = Metrics(tp, fp, fn, tn)
        p, r, f1 = fraction_metrics(tp, fp, fn)
        assert abs(m.precision - float(p)) < 1e-12
        assert abs(m.recall - float(r)) < 1e-12
        assert abs(m.f1 - float(f1)) < 1e-12
        tables += 1
    report(
        6,
        "fixture gives P=2/3 R=1/2 F1=4/7; "
        f"{tables} random confusion tables match the exact-fraction "
        "recomputation within 1e-12",
    )


def test_criterion_7_throughput_and_memory():
    def rss_mb():
        with open("/proc/self/statm") as handle:
            pages = int(handle.read().split()[1])
        return pages * os.sysconf("SC_PAGE_SIZE") / 1e6

    db = synthetic_rule_database(200, 200)
    assert len(db.all_rules()) == 400
    total = 155_000

    samples = [rss_mb()]
    count = 0
    started = time.perf_counter()
    for result in detect_stream(db, synthetic_line_stream(total), window_size=20):
        count += 1
        if count % 31_000 == 0:
            samples.append(rss_mb())
        # The bench database must force full cascade scans.
        assert result.stage == "default"
    elapsed = time.perf_counter() - started

    assert count == total
    assert elapsed < 120.0, f"took {elapsed:.1f}s"
    spread = max(samples) - min(samples)
    assert spread < 64.0, f"RSS drifted {spread:.1f} MB over {samples}"
    report(
        7,
        f"{total} windows x 400 rules in {elapsed:.1f}s (< 120s), RSS spread "
        f"{spread:.1f} MB across {len(samples)} samples",
    )


def test_criterion_8_stopping_behavior(tmp_path):
    # Dominant-cluster corpus: one accepted rule crosses the 0.99 coverage
    # stop, so phase one takes exactly one epoch.
    single = tmp_path / "single.log"
    write_single_pattern_corpus(single)
    windows = make_windows(load_corpus(single, "bgl_dash"), 20)
    events = []
    db = run_synthesis(
        split_dataset(windows),
        MockBackend(),
        SynthesisConfig(),
        seed=1,
        progress=events.append,
    )
    normal_events = [e for e in events if e["phase"] == "normal"]
    assert len(normal_events) == 1
    assert normal_events[0]["outcome"] == "accepted"
    assert normal_events[0]["coverage"] >= 0.99
    assert len(db.normal_rules) == 1

    # Many-pattern corpus with a rule cap of three: the phase stores
    # exactly three rules and stops on capacity with coverage below the
    # stop threshold.
    many = tmp_path / "many.log"
    write_many_pattern_corpus(many)
    windows = make_windows(load_corpus(many, "bgl_dash"), 20)
    capped_events = []
    capped = run_synthesis(
        split_dataset(windows),
        MockBackend(),
        SynthesisConfig(d_nor=3, g_nor=0.4),
        seed=1,
        progress=capped_events.append,
    )
    capped_normal = [e for e in capped_events if e["phase"] == "normal"]
    assert len(capped_normal) == 3
    assert all(e["outcome"] == "accepted" for e in capped_normal)
    assert capped_normal[-1]["coverage"] < 0.99
    assert len(capped.normal_rules) == 3
    report(
        8,
        "dominant-cluster corpus stopped after 1 normal epoch at coverage "
        f"{normal_events[0]['coverage']:.4f}; rule cap 3 stored exactly "
        f"{len(capped.normal_rules)} rules at coverage "
        f"{capped_normal[-1]['coverage']:.4f}",
    )


def test_criterion_9_synthesize_runs_are_byte_identical(planted_run, tmp_path):
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / f"{name}.json"
        rc = cli.main(
            [
                "synthesize",
                "--corpus",
                planted_run.corpus_path,
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    report(
        9,
        f"two synthesize runs over the planted corpus produced byte-identical "
        f"databases ({len(outputs[0])} bytes)",
    )
