"""Streaming statistics vs a direct two-pass oracle, merge, commit
semantics, and table finalization."""

from __future__ import annotations

import math
import random

import pytest

from sweepforge import aggregate, timepoints
from sweepforge.aggregate import (
    AggregationRule,
    AggState,
    CommitError,
    PartialStat,
    RuleError,
    RuleEvalError,
    bin_values,
    eval_cell,
    eval_condition,
    merge,
    observe,
    parse_rule,
    stat_from_values,
)
from sweepforge.expr import parse as parse_expr


def two_pass(values):
    """Direct-formula oracle for mean and the sum of squared deviations."""
    n = len(values)
    mean = sum(values) / n
    m2 = sum((v - mean) ** 2 for v in values)
    return n, mean, m2


def rel_close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


class TestObserve:
    def test_one_two_three_matches_oracle(self):
        stat = stat_from_values([1.0, 2.0, 3.0])
        n, mean, m2 = two_pass([1.0, 2.0, 3.0])
        assert stat.count == n == 3
        assert stat.mean == mean == 2.0
        assert stat.m2 / (stat.count - 1) == pytest.approx(m2 / (n - 1))
        assert m2 / (n - 1) == 1.0

    def test_single_observation(self):
        stat = stat_from_values([4.5])
        assert (stat.count, stat.mean, stat.m2) == (1, 4.5, 0.0)
        assert stat.min == stat.max == 4.5

    def test_constant_stream(self):
        stat = stat_from_values([5.0] * 4)
        assert stat.m2 == 0.0
        assert stat.min == stat.max == 5.0

    def test_non_finite_rejected(self):
        with pytest.raises(RuleEvalError, match="non-finite"):
            observe(PartialStat(), math.inf)

    def test_streaming_matches_two_pass_random(self):
        rng = random.Random(5)
        for _ in range(60):
            values = [rng.uniform(-1e3, 1e3) for _ in range(rng.randrange(1, 400))]
            stat = stat_from_values(values)
            n, mean, m2 = two_pass(values)
            assert stat.count == n
            assert rel_close(stat.mean, mean, 1e-9)
            assert rel_close(stat.m2, m2, 1e-9)
            assert stat.min == min(values) and stat.max == max(values)


class TestMerge:
    def test_merge_matches_oracle(self):
        a = stat_from_values([1.0, 2.0])
        b = stat_from_values([3.0])
        m = merge(a, b)
        n, mean, m2 = two_pass([1.0, 2.0, 3.0])
        assert m.count == n
        assert rel_close(m.mean, mean, 1e-12)
        assert rel_close(m.m2, m2, 1e-12)

    def test_merge_empty_identity(self):
        empty = PartialStat()
        assert merge(empty, empty) == empty
        a = stat_from_values([7.0, 9.0])
        assert merge(a, empty) == a
        assert merge(empty, a) == a

    def test_count_additive(self):
        rng = random.Random(2)
        for _ in range(30):
            a = stat_from_values([rng.random() for _ in range(rng.randrange(0, 9))]) if rng.random() < 0.9 else PartialStat()
            b = stat_from_values([rng.random() for _ in range(rng.randrange(1, 9))])
            assert merge(a, b).count == a.count + b.count

    def test_associativity_within_tolerance(self):
        rng = random.Random(8)
        for _ in range(50):
            parts = [
                stat_from_values([rng.uniform(-100, 100) for _ in range(rng.randrange(1, 30))])
                for _ in range(3)
            ]
            left = merge(merge(parts[0], parts[1]), parts[2])
            right = merge(parts[0], merge(parts[1], parts[2]))
            assert rel_close(left.mean, right.mean, 1e-12)
            assert rel_close(left.m2, right.m2, 1e-12)

    def test_partition_property(self):
        rng = random.Random(13)
        for _ in range(40):
            values = [rng.uniform(-1e3, 1e3) for _ in range(rng.randrange(2, 200))]
            cut_count = rng.randrange(1, 6)
            cuts = sorted(rng.sample(range(1, len(values)), min(cut_count, len(values) - 1)))
            pieces = []
            prev = 0
            for cut in cuts + [len(values)]:
                pieces.append(values[prev:cut])
                prev = cut
            acc = PartialStat()
            for piece in pieces:
                acc = merge(acc, stat_from_values(piece))
            whole = stat_from_values(values)
            assert acc.count == whole.count
            assert rel_close(acc.mean, whole.mean, 1e-9)
            assert rel_close(acc.m2, whole.m2, 1e-9)


class TestConditions:
    POINT = {"x1": 2, "x2": 3}

    def test_single(self):
        assert eval_condition(parse_expr("x1"), self.POINT) == (2.0,)

    def test_pair(self):
        assert eval_condition(parse_expr("(x1, x2)"), self.POINT) == (2.0, 3.0)

    def test_function(self):
        assert eval_condition(parse_expr("x1*x2 + 1"), self.POINT) == (7.0,)

    def test_text_params_excluded_from_env(self):
        with pytest.raises(aggregate.expr.EvalError):
            eval_condition(parse_expr("top"), {"top": "ring"})


class TestRuleParsing:
    def test_full_rule(self):
        rule = parse_rule("final : mean, stderr @ after_run by beta, gamma")
        assert rule.result_id == "final"
        assert rule.stats == ("mean", "stderr")
        assert rule.timepoint == timepoints.AFTER_RUN
        assert rule.condition_texts == ("beta", "gamma")

    def test_tuple_condition_flattens(self):
        rule = parse_rule("y : mean @ after_run by (x1, x2)")
        assert rule.condition_texts == ("x1", "x2")

    def test_hist(self):
        rule = parse_rule("y : hist(10), count @ after_run")
        assert rule.hist_bins == 10
        assert rule.stats == ("count", "hist")

    def test_hist_zero_bins(self):
        with pytest.raises(RuleError, match="at least 1 bin"):
            parse_rule("y : hist(0) @ after_run")

    def test_user_timepoint(self):
        rule = parse_rule("y : mean @ user:peak")
        assert rule.timepoint == "user:peak"

    def test_task_level_timepoint_rejected(self):
        with pytest.raises(RuleError, match="task-level"):
            parse_rule("y : mean @ after_task")

    def test_unknown_stat(self):
        with pytest.raises(RuleError, match="unknown stat"):
            parse_rule("y : median @ after_run")

    def test_duplicate_stat(self):
        with pytest.raises(RuleError, match="duplicate stat"):
            parse_rule("y : mean, mean @ after_run")

    def test_undeclared_parameter(self):
        with pytest.raises(RuleError, match="undeclared"):
            parse_rule("y : mean @ after_run by q", {"x": "real"})

    def test_canonical_text_round_trip(self):
        text = "y : count, mean, hist(4) @ user:peak by x1 * x2, x1"
        rule = parse_rule(text)
        assert parse_rule(rule.canonical_text()) == rule


def commit(state, unit, values, point=None, tp="after_run", name="y"):
    state.commit_unit(unit, point or {"x": 1}, [(tp, name, v) for v in values])


def one_rule_state(rule_text="y : count, sum, mean, var, stderr, min, max @ after_run"):
    return AggState((parse_rule(rule_text),))


class TestCommit:
    def test_duplicate_commit_rejected(self):
        state = one_rule_state()
        commit(state, 0, [1.0])
        with pytest.raises(CommitError):
            commit(state, 0, [2.0])
        table = state.finalize(state.rules[0])
        assert table.rows[0].stats["count"] == 1

    def test_two_units_same_cell(self):
        state = one_rule_state()
        commit(state, 0, [1.0])
        commit(state, 1, [3.0])
        cells = state.cells["y"]
        assert len(cells) == 1
        (units,) = cells.values()
        assert sorted(units) == [0, 1]

    def test_commit_order_invariance_bit_exact(self):
        rng = random.Random(4)
        rows = None
        units = {u: [rng.uniform(-5, 5) for _ in range(rng.randrange(1, 6))] for u in range(8)}
        for _ in range(12):
            order = list(units)
            rng.shuffle(order)
            state = one_rule_state()
            for u in order:
                commit(state, u, units[u])
            text = state.finalize(state.rules[0]).to_text()
            if rows is None:
                rows = text
            assert text == rows

    def test_failed_rule_leaves_no_trace(self):
        state = AggState((parse_rule("y : mean @ after_run by 1 / x"),))
        with pytest.raises(RuleEvalError, match="division by zero"):
            commit(state, 0, [1.0], point={"x": 0})
        assert 0 not in state.committed
        assert not state.cells["y"]

    def test_non_finite_observation_names_rule(self):
        state = one_rule_state()
        with pytest.raises(RuleEvalError, match="'y'"):
            commit(state, 0, [math.nan])

    def test_key_grouping_counts(self):
        state = AggState((parse_rule("y : count @ after_run by x"),))
        total = 0
        for u, x in enumerate([1, 1, 2, 3, 3, 3]):
            values = [1.0] * (u + 1)
            commit(state, u, values, point={"x": x})
            total += len(values)
        table = state.finalize(state.rules[0])
        assert sum(r.stats["count"] for r in table.rows) == total
        assert len(table.rows) == 3


class TestFinalize:
    def test_stderr_from_direct_formula(self):
        state = one_rule_state()
        for u, v in enumerate([1.0, 2.0, 3.0]):
            commit(state, u, [v])
        row = state.finalize(state.rules[0]).rows[0]
        assert row.stats["count"] == 3
        assert row.stats["mean"] == 2.0
        assert row.stats["var"] == 1.0
        assert row.stats["stderr"] == math.sqrt(1.0 / 3.0)
        assert row.stats["sum"] == 6.0
        assert row.stats["min"] == 1.0 and row.stats["max"] == 3.0

    def test_empty_state_header_only(self):
        state = one_rule_state()
        text = state.finalize(state.rules[0]).to_text()
        assert text.startswith("# ")
        assert len(text.splitlines()) == 1

    def test_var_nan_below_two(self):
        state = one_rule_state()
        commit(state, 0, [4.0])
        text = state.finalize(state.rules[0]).to_text()
        assert " nan " in text or text.rstrip().endswith("nan")

    def test_hist_two_bins(self):
        state = AggState((parse_rule("y : hist(2) @ after_run"),))
        commit(state, 0, [0.0, 1.0, 2.0, 3.0])
        row = state.finalize(state.rules[0]).rows[0]
        assert row.stats["hist"] == [2.0, 2.0]

    def test_hist_right_open_except_last(self):
        assert bin_values([0.0, 1.5, 3.0], 0.0, 3.0, 2) == (1, 2)
        assert bin_values([1.0, 1.0], 1.0, 1.0, 3) == (2, 0, 0)

    def test_rows_sorted_by_key(self):
        state = AggState((parse_rule("y : mean @ after_run by x"),))
        for u, x in enumerate([3, 1, 2]):
            commit(state, u, [float(x)], point={"x": x})
        keys = [row.key for row in state.finalize(state.rules[0]).rows]
        assert keys == [(1.0,), (2.0,), (3.0,)]

    def test_column_order_and_header(self):
        state = AggState((parse_rule("y : mean, stderr @ after_run by x"),))
        commit(state, 0, [1.0, 2.0], point={"x": 5})
        table = state.finalize(state.rules[0])
        assert table.columns == ("count", "mean", "var", "stderr")
        header = table.to_text().splitlines()[0]
        assert header == "# key_1 count mean var stderr"

    def test_duplicate_rule_ids_rejected(self):
        rule = parse_rule("y : mean @ after_run")
        with pytest.raises(RuleError, match="duplicate rule id"):
            AggState((rule, rule))
