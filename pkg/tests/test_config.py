"""Config parsing, range expansion, and parameter-space enumeration."""

from __future__ import annotations

import math
import random

import pytest

from sweepforge.config import (
    Config,
    ConfigError,
    ParameterSpace,
    ParameterSpec,
    enumerate_points,
    expand_range,
    parse_config,
)

BASIC = """
[task]
name = demo
repeats = 2
seed = 9
[params]
beta = 0.1 : 0.1 : 0.3
n = {10, 20}
[aggregate]
final : mean @ after_run by beta
"""


def range_oracle(start, step, stop):
    """Independent count-formula oracle: n = round((stop-start)/step) + 1
    when the ratio is integral, values are start + i*step."""
    ratio = (stop - start) / step
    n = round(ratio) + 1
    return [start + i * step for i in range(n - 1)] + [stop]


class TestExpandRange:
    def test_integer_range(self):
        assert expand_range(0, 1, 3) == [0, 1, 2, 3]

    def test_descending(self):
        assert expand_range(5, -1, 3) == [5, 4, 3]

    def test_float_range_matches_count_formula(self):
        got = expand_range(0.1, 0.1, 0.3)
        assert got == range_oracle(0.1, 0.1, 0.3)
        # binary rounding must not drop or distort the endpoint
        assert got == [0.1, 0.2, 0.3]
        assert repr(got[2]) == "0.3"

    def test_zero_step_rejected(self):
        with pytest.raises(ValueError, match="zero step"):
            expand_range(0.1, 0, 0.3)

    def test_wrong_sign_rejected(self):
        with pytest.raises(ValueError, match="sign"):
            expand_range(0, 1, -5)

    def test_single_value(self):
        assert expand_range(5, 1, 5) == [5]

    def test_never_overshoots_stop(self):
        rng = random.Random(1)
        for _ in range(300):
            start = rng.uniform(-50, 50)
            step = rng.uniform(0.01, 3.0) * rng.choice([1, -1])
            count = rng.randrange(1, 40)
            stop = start + step * count * rng.uniform(0.5, 1.5)
            if (stop - start) / step < 0:
                continue
            values = expand_range(start, step, stop)
            limit = abs(stop) * 1e-9 + abs(step) * 1e-9
            for v in values:
                if step > 0:
                    assert v <= stop + limit
                else:
                    assert v >= stop - limit

    def test_exclusive_when_not_divisible(self):
        assert expand_range(0, 2, 5) == [0, 2, 4]


class TestParse:
    def test_basic(self):
        cfg = parse_config(BASIC)
        assert cfg.name == "demo"
        assert cfg.repeats == 2
        assert cfg.seed == 9
        assert cfg.space.names == ("beta", "n")
        assert cfg.space.specs[0].values == (0.1, 0.2, 0.3)
        assert cfg.space.point_count == 6
        assert len(cfg.rules) == 1

    def test_set_literal_and_repeats(self):
        cfg = parse_config("[params]\nn = {10, 20}\n[task]\nrepeats = 2\n")
        assert cfg.space.point_count == 2
        assert cfg.repeats == 2

    def test_zero_step_reported_with_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config("[params]\nbeta = 0.1 : 0 : 0.3\n")
        (line, msg), = info.value.errors
        assert line == 2
        assert "zero step" in msg

    def test_rule_with_undeclared_parameter(self):
        with pytest.raises(ConfigError) as info:
            parse_config("[params]\nx = 1\n[aggregate]\ny : mean @ after_run by zz\n")
        (line, msg), = info.value.errors
        assert line == 4
        assert "undeclared" in msg and "zz" in msg

    def test_rule_with_text_parameter(self):
        with pytest.raises(ConfigError, match="non-numeric"):
            parse_config("[params]\ntop = ring\n[aggregate]\ny : mean @ after_run by top\n")

    def test_duplicate_parameter(self):
        with pytest.raises(ConfigError, match="duplicate parameter"):
            parse_config("[params]\na = 1\na = 2\n")

    def test_duplicate_value(self):
        with pytest.raises(ConfigError, match="duplicate value"):
            parse_config("[params]\na = {1, 1}\n")

    def test_empty_set(self):
        with pytest.raises(ConfigError, match="empty value set"):
            parse_config("[params]\na = {}\n")

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config("[bogus]\na = 1\n")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("[task]\nbogus = 1\n")

    def test_mixed_kinds_rejected(self):
        with pytest.raises(ConfigError, match="mixed value kinds"):
            parse_config('[params]\na = {1, "x"}\n')

    def test_comments_and_strings(self):
        cfg = parse_config('[task]\nname = "a # b"  # trailing comment\n')
        assert cfg.name == "a # b"

    def test_bare_token_is_text(self):
        cfg = parse_config("[params]\ntopology = ring\n")
        assert cfg.space.specs[0].values == ("ring",)

    def test_workers_auto(self):
        cfg = parse_config("[task]\nworkers = auto\n")
        assert cfg.workers == "auto"

    def test_non_finite_number_rejected(self):
        with pytest.raises(ConfigError, match="non-finite"):
            parse_config("[params]\na = 1e999\n")

    def test_multiple_errors_collected(self):
        with pytest.raises(ConfigError) as info:
            parse_config("[params]\na = {}\nb = 0 : 0 : 1\n[bogus]\n")
        assert len(info.value.errors) == 3

    def test_totality_fuzz(self):
        rng = random.Random(7)
        alphabet = '[]{}=:,"#ab_ \t01.\\e-move\n@'
        for _ in range(400):
            text = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 120)))
            try:
                parse_config(text)
            except ConfigError:
                pass  # the only acceptable failure mode


class TestCanonical:
    def test_round_trip_identical(self):
        cfg = parse_config(BASIC)
        again = parse_config(cfg.canonical_text())
        assert again == cfg
        assert again.canonical_text() == cfg.canonical_text()

    def test_hash_ignores_cosmetics(self):
        noisy = BASIC.replace("name = demo", "name =   demo   # cosmetic\n\n# more noise")
        assert parse_config(noisy).canonical_hash() == parse_config(BASIC).canonical_hash()

    def test_hash_tracks_semantics(self):
        changed = BASIC.replace("{10, 20}", "{10, 21}")
        assert parse_config(changed).canonical_hash() != parse_config(BASIC).canonical_hash()

    def test_range_and_set_hash_equal_when_same_values(self):
        a = parse_config("[params]\nb = 0.1 : 0.1 : 0.3\n")
        b = parse_config("[params]\nb = {0.1, 0.2, 0.3}\n")
        assert a.canonical_hash() == b.canonical_hash()


class TestSpace:
    def test_enumeration_order(self):
        space = ParameterSpace(
            (ParameterSpec("a", (1, 2)), ParameterSpec("b", ("x", "y")))
        )
        points = enumerate_points(space)
        pairs = [(p["a"], p["b"]) for p in points]
        assert pairs == [(1, "x"), (1, "y"), (2, "x"), (2, "y")]

    def test_point_count_product(self):
        space = ParameterSpace(
            (
                ParameterSpec("a", tuple(range(3))),
                ParameterSpec("b", tuple(range(4))),
                ParameterSpec("c", tuple(range(5))),
            )
        )
        assert space.point_count == 60
        assert len(enumerate_points(space)) == 60

    def test_empty_space_single_point(self):
        space = ParameterSpace(())
        points = enumerate_points(space)
        assert len(points) == 1
        assert points[0].assignments == {}

    def test_index_bijection_random_spaces(self):
        rng = random.Random(3)
        for _ in range(40):
            specs = []
            for k in range(rng.randrange(0, 5)):
                size = rng.randrange(1, 7)
                specs.append(ParameterSpec(f"p{k}", tuple(rng.sample(range(100), size))))
            space = ParameterSpace(tuple(specs))
            expected = math.prod(len(s.values) for s in specs)
            points = enumerate_points(space)
            assert len(points) == expected
            for p in points:
                assert space.index_of(p.assignments) == p.point_index

    def test_last_parameter_fastest(self):
        space = ParameterSpace((ParameterSpec("a", (0, 1)), ParameterSpec("b", (0, 1, 2))))
        values = [p["b"] for p in enumerate_points(space)]
        assert values == [0, 1, 2, 0, 1, 2]
