"""Rule DSL: parser, printer, evaluator, and subrule classification."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuzztools import random_rule, random_window, ref_eval
from logsift.ruledsl import (
    MAX_DEPTH,
    AllMatch,
    And,
    Contains,
    CountCmp,
    EvaluationTimeout,
    Matches,
    Not,
    NumVarCmp,
    Or,
    ParseError,
    RatioCmp,
    Rule,
    SeqBefore,
    classify_subrules,
    count_atoms,
    evaluate,
    parse_rule,
    parse_rule_file,
    pretty_print,
    validate_regex,
)

FULL_SOURCE = """\
rule kitchen_sink abnormal "every atom in one body" {
  contains("disk error")
  and matches(/fail(ed|ure)/)
  and count(contains("retry")) > 3
  and ratio(matches(/warn/)) >= 0.25
  and all(contains("node"))
  and seq(contains("mount"), contains("unmount"))
  and numvar(/depth (\\d+)/, p95 <= 40.5)
  and not (contains("benign") or contains("testing"))
}
"""


def test_parse_covers_every_atom():
    rule = parse_rule(FULL_SOURCE)
    assert rule.name == "kitchen_sink"
    assert rule.kind == "abnormal"
    assert rule.docstring == "every atom in one body"
    assert isinstance(rule.ast, And)
    kinds = [type(child).__name__ for child in rule.ast.children]
    assert kinds == [
        "Contains", "Matches", "CountCmp", "RatioCmp",
        "AllMatch", "SeqBefore", "NumVarCmp", "Not",
    ]
    numvar = rule.ast.children[6]
    assert numvar == NumVarCmp(r"depth (\d+)", "p95", "<=", 40.5)


def test_comments_and_whitespace_ignored():
    src = 'rule r normal "d" { # header\n  contains("x") # tail\n}\n'
    assert parse_rule(src).ast == Contains("x")


def test_parse_rule_file_multiple_rules():
    src = (
        'rule a normal "one" { contains("x") }\n'
        'rule b abnormal "two" { contains("y") }\n'
    )
    rules = parse_rule_file(src)
    assert [r.name for r in rules] == ["a", "b"]


class TestParseErrors:
    def assert_raises(self, source, category, line=None, column=None):
        with pytest.raises(ParseError) as exc_info:
            parse_rule(source)
        err = exc_info.value
        assert err.message.startswith(category), err.message
        assert f"(line {err.line}, column {err.column})" in str(err)
        if line is not None:
            assert err.line == line
        if column is not None:
            assert err.column == column
        return err

    def test_lexical_unknown_character(self):
        self.assert_raises(
            'rule r normal "d" { $ }', "lexical error", line=1, column=21
        )

    def test_lexical_unterminated_string(self):
        self.assert_raises('rule r normal "d { contains("x") }', "lexical error")

    def test_lexical_unterminated_regex(self):
        self.assert_raises(
            'rule r normal "d" { matches(/boom) }', "lexical error"
        )

    def test_lexical_bad_escape(self):
        err = self.assert_raises(
            'rule r normal "d" { contains("a\\qb") }', "lexical error"
        )
        assert "\\q" in err.message

    def test_syntax_missing_brace(self):
        self.assert_raises('rule r normal "d" contains("x") }', "syntax error")

    def test_syntax_float_count_threshold(self):
        self.assert_raises(
            'rule r normal "d" { count(contains("x")) > 1.5 }', "syntax error"
        )

    def test_syntax_bad_kind(self):
        self.assert_raises('rule r sideways "d" { contains("x") }', "syntax error")

    def test_syntax_trailing_garbage(self):
        self.assert_raises(
            'rule r normal "d" { contains("x") } extra', "syntax error"
        )

    def test_syntax_empty_docstring(self):
        self.assert_raises('rule r normal "" { contains("x") }', "syntax error")

    def test_syntax_numvar_without_capture(self):
        self.assert_raises(
            'rule r normal "d" { numvar(/depth/, max > 1) }', "syntax error"
        )

    def test_error_position_tracks_lines(self):
        err = self.assert_raises(
            'rule r normal "d" {\n  contains("x") &&\n}', "lexical error", line=2
        )
        assert err.excerpt == '  contains("x") &&'

    @pytest.mark.parametrize(
        "pattern, feature",
        [
            ("(?=x)a", "lookaround"),
            ("(?!x)a", "lookaround"),
            ("(?<=x)a", "lookaround"),
            (r"(a)\1", "backreference"),
            ("(a)(?(1)b|c)", "conditional group"),
        ],
    )
    def test_unsupported_regex_features(self, pattern, feature):
        err = self.assert_raises(
            f'rule r normal "d" {{ matches(/{pattern}/) }}',
            "unsupported regex feature",
        )
        assert feature in err.message

    def test_invalid_regex_is_syntax_error(self):
        self.assert_raises('rule r normal "d" { matches(/[z/) }', "syntax error")

    def test_depth_overflow(self):
        body = "not " * (MAX_DEPTH + 1) + 'contains("x")'
        self.assert_raises(
            f'rule r normal "d" {{ {body} }}', "depth overflow"
        )

    def test_max_depth_exactly_is_accepted(self):
        body = "not " * (MAX_DEPTH - 1) + 'contains("x")'
        rule = parse_rule(f'rule r normal "d" {{ {body} }}')
        assert isinstance(rule.ast, Not)


def test_validate_regex_accepts_supported_subset():
    for pattern in (r"\d+", "[a-z]{2,4}", "a|b", "^x$", "(?:ab)+", "(a)(b)"):
        validate_regex(pattern)


class TestPrinter:
    def roundtrip(self, rule):
        assert parse_rule(pretty_print(rule)) == rule

    def test_full_source_roundtrip(self):
        rule = parse_rule(FULL_SOURCE)
        printed = pretty_print(rule)
        assert parse_rule(printed) == rule
        # Canonical form is a fixpoint of print itself.
        assert pretty_print(parse_rule(printed)) == printed

    def test_flat_chains_print_without_parens(self):
        rule = parse_rule('rule r normal "d" { contains("a") and contains("b") and contains("c") }')
        assert 'contains("a") and contains("b") and contains("c")' in pretty_print(rule)

    def test_nested_same_connective_keeps_shape(self):
        inner = And((Contains("a"), Contains("b")))
        rule = Rule("r", "normal", "d", And((inner, Contains("c"))))
        printed = pretty_print(rule)
        assert '(contains("a") and contains("b")) and contains("c")' in printed
        self.roundtrip(rule)

    def test_or_inside_and_parenthesized(self):
        rule = Rule("r", "normal", "d", And((Or((Contains("a"), Contains("b"))), Contains("c"))))
        assert '(contains("a") or contains("b")) and contains("c")' in pretty_print(rule)
        self.roundtrip(rule)

    def test_and_inside_or_needs_no_parens(self):
        rule = Rule("r", "normal", "d", Or((And((Contains("a"), Contains("b"))), Contains("c"))))
        assert 'contains("a") and contains("b") or contains("c")' in pretty_print(rule)
        self.roundtrip(rule)

    def test_string_escapes_roundtrip(self):
        for needle in ('say "hi"', "a\\b", "tab\there", "cr\rhere", "nl\nhere", ""):
            self.roundtrip(Rule("r", "normal", "d", Contains(needle)))

    def test_regex_slash_escaping_roundtrip(self):
        self.roundtrip(Rule("r", "normal", "d", Matches("a/b[/]c")))

    def test_float_repr_roundtrips_extremes(self):
        for threshold in (1e-05, 1.5e20, -0.0, 123456789.123456):
            self.roundtrip(Rule("r", "normal", "d", RatioCmp(Contains("x"), ">", threshold)))

    def test_negative_count_threshold(self):
        self.roundtrip(Rule("r", "normal", "d", CountCmp(Contains("x"), ">=", -2)))

    @given(st.text(max_size=40))
    @settings(max_examples=200)
    def test_any_needle_roundtrips(self, needle):
        rule = Rule("r", "normal", "doc", Contains(needle))
        assert parse_rule(pretty_print(rule)) == rule

    @given(st.text(min_size=1, max_size=40))
    @settings(max_examples=100)
    def test_any_docstring_roundtrips(self, doc):
        rule = Rule("r", "normal", doc, Contains("x"))
        assert parse_rule(pretty_print(rule)) == rule


def _rule(expr):
    return Rule("t", "normal", "d", expr)


class TestEvaluator:
    def test_empty_window_semantics(self):
        empty = []
        assert evaluate(_rule(AllMatch(Contains("x"))), empty) is True
        assert evaluate(_rule(CountCmp(Contains("x"), "==", 0)), empty) is True
        assert evaluate(_rule(RatioCmp(Contains("x"), "<=", 0.0)), empty) is True
        assert evaluate(_rule(Contains("x")), empty) is False
        assert evaluate(_rule(Contains("")), empty) is False
        assert evaluate(_rule(Matches(".*")), empty) is False
        assert evaluate(_rule(SeqBefore(Contains("a"), Contains("b"))), empty) is False
        assert evaluate(_rule(NumVarCmp(r"(\d+)", "max", ">", -1.0)), empty) is False

    def test_empty_needle_matches_any_nonempty_window(self):
        assert evaluate(_rule(Contains("")), ["anything"]) is True
        assert evaluate(_rule(Contains("")), [""]) is True

    def test_contains_never_straddles_lines(self):
        # "ab" split across two lines must not match.
        assert evaluate(_rule(Contains("ab")), ["xa", "by"]) is False
        assert evaluate(_rule(Contains("a\nb")), ["xa", "by"]) is False

    def test_seq_requires_strictly_later_line(self):
        seq = _rule(SeqBefore(Contains("a"), Contains("b")))
        assert evaluate(seq, ["a then b"]) is False
        assert evaluate(seq, ["a", "b"]) is True
        assert evaluate(seq, ["b", "a"]) is False
        # Decision anchors on the first line matching the first predicate.
        assert evaluate(seq, ["a", "nothing", "a b"]) is True
        assert evaluate(seq, ["b a", "nothing"]) is False

    def test_numvar_aggregations(self):
        lines = ["depth 10", "depth 30", "noise", "depth 20"]
        for agg, expect in (("max", 30.0), ("min", 10.0), ("mean", 20.0), ("sum", 60.0)):
            assert evaluate(_rule(NumVarCmp(r"depth (\d+)", agg, "==", expect)), lines)

    def test_numvar_skips_unparseable_captures(self):
        rule = _rule(NumVarCmp(r"v=(\w+)", "sum", "==", 5.0))
        assert evaluate(rule, ["v=abc", "v=2", "v=3"]) is True
        assert evaluate(rule, ["v=abc"]) is False

    def test_numvar_first_match_per_line_only(self):
        rule = _rule(NumVarCmp(r"(\d+)", "sum", "==", 1.0))
        assert evaluate(rule, ["1 2 3"]) is True

    def test_p95_nearest_rank(self):
        lines = [f"d {v}" for v in range(1, 21)]  # 1..20, rank ceil(19) = 19
        assert evaluate(_rule(NumVarCmp(r"d (\d+)", "p95", "==", 19.0)), lines)
        assert evaluate(_rule(NumVarCmp(r"d (\d+)", "p95", "==", 7.0)), ["d 7"])

    def test_ratio_arithmetic(self):
        lines = ["hit", "hit", "miss", "miss"]
        assert evaluate(_rule(RatioCmp(Contains("hit"), "==", 0.5)), lines)
        assert evaluate(_rule(RatioCmp(Contains("hit"), ">", 0.49)), lines)

    def test_connective_short_circuit_results(self):
        lines = ["alpha"]
        assert evaluate(_rule(Or((Contains("alpha"), Contains("beta")))), lines)
        assert not evaluate(_rule(And((Contains("alpha"), Contains("beta")))), lines)
        assert evaluate(_rule(Not(Contains("beta"))), lines)

    def test_budget_exhaustion_raises(self):
        # A negative budget means the deadline has already passed when the
        # first counting atom checks it.
        rule = _rule(CountCmp(Contains("x"), ">=", 0))
        with pytest.raises(EvaluationTimeout):
            evaluate(rule, ["x"] * 50, budget_s=-1.0)

    def test_generous_budget_passes(self):
        rule = _rule(CountCmp(Contains("x"), ">=", 0))
        assert evaluate(rule, ["x"], budget_s=30.0) is True

    def test_compiled_fn_cached_on_rule(self):
        rule = _rule(Contains("x"))
        evaluate(rule, ["x"])
        first = rule._fn
        evaluate(rule, ["y"])
        assert rule._fn is first

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=300, deadline=None)
    def test_matches_reference_evaluator(self, seed):
        rng = random.Random(seed)
        rule = random_rule(rng)
        window = random_window(rng)
        assert evaluate(rule, window) == ref_eval(rule.ast, window)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=300, deadline=None)
    def test_generated_rules_roundtrip(self, seed):
        rng = random.Random(seed)
        rule = random_rule(rng)
        assert parse_rule(pretty_print(rule)) == rule


class TestClassify:
    def cats(self, source_body):
        return classify_subrules(parse_rule(f'rule r normal "d" {{ {source_body} }}'))

    def test_keyword(self):
        assert self.cats('contains("boot")') == ["keyword"]
        assert self.cats("matches(/boot/)") == ["keyword"]

    def test_count_splits_on_severity(self):
        assert self.cats('count(contains("heartbeat")) > 5') == ["event_count"]
        assert self.cats('count(contains("error")) > 5') == ["threshold"]
        assert self.cats("count(matches(/FATAL/)) > 0") == ["threshold"]

    def test_ratio_is_threshold(self):
        assert self.cats('ratio(contains("x")) > 0.5') == ["threshold"]

    def test_whole_window_whitelist_is_new_pattern(self):
        assert self.cats('all(contains("known"))') == ["new_pattern"]

    def test_sequence_and_variables(self):
        assert self.cats('seq(contains("a"), contains("b"))') == ["sequence"]
        assert self.cats(r"numvar(/d (\d+)/, max > 9)") == ["variables"]

    def test_composition_added_for_multi_atom(self):
        cats = self.cats('contains("a") and count(contains("b")) > 1')
        assert cats == ["keyword", "event_count", "composition"]

    def test_canonical_order(self):
        rule = parse_rule(FULL_SOURCE)
        cats = classify_subrules(rule)
        assert cats == sorted(
            cats,
            key=[
                "keyword", "event_count", "new_pattern", "sequence",
                "variables", "threshold", "composition", "other",
            ].index,
        )
        assert "composition" in cats

    def test_not_wrapped_atom_still_counts(self):
        assert self.cats('not contains("x")') == ["keyword"]


def test_count_atoms_matches_structure():
    rule = parse_rule(FULL_SOURCE)
    assert count_atoms(rule.ast) == 9  # two needles live inside the not(...)
