"""Configuration file parsing and parameter-space enumeration.

The file format is a line-oriented sectioned text (``#`` comments):

    [task]
    name = sir
    repeats = 3
    seed = 42
    [params]
    beta = 0.1 : 0.1 : 0.3        # range start : step : stop
    n = {50, 100}                 # explicit value set
    topology = ring               # single value (bare token = text)
    [aggregate]
    final_size : mean, stderr @ after_run by beta
    [checkpoint]
    interval_seconds = 60
    [plot]
    template = my_template.plt

Parsing is total: any byte sequence yields either a Config or a
ConfigError carrying (line, message) pairs. The Cartesian product of the
declared value lists defines the parameter points, numbered mixed-radix
with the last-declared parameter varying fastest.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

from . import aggregate

Scalar = Union[int, float, str]

RANGE_TOL = 1e-9  # relative tolerance for including the range stop value
MAX_RANGE_VALUES = 1_000_000  # parse-totality guard against runaway ranges

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_SECTION_RE = re.compile(r"\[\s*([A-Za-z_][A-Za-z0-9_]*)\s*\]\Z")
_INT_RE = re.compile(r"[+-]?\d+\Z")
_NUM_RE = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?\Z")
_BARE_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.\-]*\Z")

_SECTIONS = ("task", "params", "aggregate", "checkpoint", "plot")
_TASK_KEYS = ("name", "repeats", "max_steps", "seed", "workers")
_CHECKPOINT_KEYS = ("interval_seconds", "keep", "path")
_PLOT_KEYS = ("template", "script")


class ConfigError(Exception):
    """Carries all problems found in a config, each with its line number."""

    def __init__(self, errors: Sequence[tuple]):
        self.errors = list(errors)
        super().__init__("; ".join(f"line {line}: {msg}" for line, msg in self.errors))


def value_kind(value: Scalar) -> str:
    if isinstance(value, bool):
        raise TypeError("bool is not a parameter value")
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "real"
    return "text"


def format_scalar(value: Scalar) -> str:
    """Canonical scalar text: ints plain, floats shortest round-trip,
    strings quoted."""
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, int):
        return str(value)
    return repr(value)


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    values: tuple  # ordered, non-empty, one kind, no duplicates

    @property
    def kind(self) -> str:
        return value_kind(self.values[0])


@dataclass(frozen=True)
class ParameterSpace:
    specs: tuple = ()

    @property
    def point_count(self) -> int:
        n = 1
        for spec in self.specs:
            n *= len(spec.values)
        return n

    @property
    def names(self) -> tuple:
        return tuple(s.name for s in self.specs)

    def kinds(self) -> dict:
        return {s.name: s.kind for s in self.specs}

    def point(self, point_index: int) -> "ParameterPoint":
        """Decode a mixed-radix point index (last parameter fastest)."""
        if not 0 <= point_index < self.point_count:
            raise IndexError(f"point index {point_index} out of range")
        assignments = {}
        rem = point_index
        for spec in reversed(self.specs):
            rem, digit = divmod(rem, len(spec.values))
            assignments[spec.name] = spec.values[digit]
        return ParameterPoint(point_index, {s.name: assignments[s.name] for s in self.specs})

    def index_of(self, assignments: Mapping[str, Scalar]) -> int:
        """Inverse of point(): recover the mixed-radix index."""
        index = 0
        for spec in self.specs:
            index = index * len(spec.values) + spec.values.index(assignments[spec.name])
        return index


@dataclass(frozen=True)
class ParameterPoint:
    point_index: int
    assignments: Mapping[str, Scalar]

    def __getitem__(self, name: str) -> Scalar:
        return self.assignments[name]


def enumerate_points(space: ParameterSpace):
    """All points in mixed-radix order; deterministic."""
    return [space.point(i) for i in range(space.point_count)]


def expand_range(start, step, stop) -> list:
    """Expand ``start : step : stop``. The count comes from the endpoints
    (no drifting accumulation); stop is included when (stop-start)/step is
    an integer within 1e-9 relative tolerance, and the last value is then
    snapped to stop exactly."""
    if step == 0:
        raise ValueError("zero step")
    ratio = (stop - start) / step
    if ratio < 0:
        raise ValueError("step sign opposite to stop - start")
    nearest = round(ratio)
    include_stop = abs(ratio - nearest) <= RANGE_TOL * max(1.0, abs(ratio))
    count = (nearest if include_stop else math.floor(ratio)) + 1
    if count > MAX_RANGE_VALUES:
        raise ValueError(f"range expands to {count} values (limit {MAX_RANGE_VALUES})")
    integral = all(isinstance(v, int) for v in (start, step, stop))
    values = [start + i * step for i in range(count)]
    if include_stop and count > 0:
        values[-1] = stop
    if integral:
        values = [int(v) for v in values]
    return values


@dataclass(frozen=True)
class CheckpointPolicy:
    interval_seconds: float = 60.0
    keep: int = 2
    path: Optional[str] = None


@dataclass(frozen=True)
class PlotPolicy:
    template: Optional[str] = None
    script: Optional[str] = None


@dataclass(frozen=True)
class Config:
    name: str = "run"
    repeats: int = 1
    max_steps: Optional[int] = None
    seed: int = 0
    workers: Union[int, str] = 1  # positive int or "auto"
    space: ParameterSpace = field(default_factory=ParameterSpace)
    rules: tuple = ()
    checkpoint: CheckpointPolicy = field(default_factory=CheckpointPolicy)
    plot: PlotPolicy = field(default_factory=PlotPolicy)

    def canonical_text(self) -> str:
        """Semantic re-serialization: defaults materialized, comments and
        whitespace normalized, ranges expanded, strings quoted. Cosmetic
        edits to a config file do not change this text."""
        lines = ["[task]"]
        lines.append(f'name = "{self.name}"')
        lines.append(f"repeats = {self.repeats}")
        if self.max_steps is not None:
            lines.append(f"max_steps = {self.max_steps}")
        lines.append(f"seed = {self.seed}")
        lines.append(f"workers = {self.workers}")
        if self.space.specs:
            lines.append("[params]")
            for spec in self.space.specs:
                values = ", ".join(format_scalar(v) for v in spec.values)
                lines.append(f"{spec.name} = {{{values}}}")
        if self.rules:
            lines.append("[aggregate]")
            for rule in self.rules:
                lines.append(rule.canonical_text())
        lines.append("[checkpoint]")
        lines.append(f"interval_seconds = {self.checkpoint.interval_seconds!r}")
        lines.append(f"keep = {self.checkpoint.keep}")
        if self.checkpoint.path is not None:
            lines.append(f'path = "{self.checkpoint.path}"')
        if self.plot.template is not None or self.plot.script is not None:
            lines.append("[plot]")
            if self.plot.template is not None:
                lines.append(f'template = "{self.plot.template}"')
            if self.plot.script is not None:
                lines.append(f'script = "{self.plot.script}"')
        return "\n".join(lines) + "\n"

    def canonical_hash(self) -> str:
        """256-bit digest of the canonical text."""
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()


def _strip_comment(line: str) -> str:
    out = []
    in_string = False
    i = 0
    while i < len(line):
        c = line[i]
        if in_string and c == "\\" and i + 1 < len(line):
            out.append(line[i : i + 2])
            i += 2
            continue
        if c == '"':
            in_string = not in_string
        elif c == "#" and not in_string:
            break
        out.append(c)
        i += 1
    return "".join(out).strip()


class _ScalarError(ValueError):
    pass


def _parse_scalar(token: str) -> Scalar:
    token = token.strip()
    if not token:
        raise _ScalarError("empty value")
    if token.startswith('"'):
        if len(token) < 2 or not token.endswith('"'):
            raise _ScalarError(f"unterminated string {token!r}")
        body = token[1:-1]
        out = []
        i = 0
        while i < len(body):
            if body[i] == "\\" and i + 1 < len(body):
                out.append(body[i + 1])
                i += 2
                continue
            if body[i] == '"':
                raise _ScalarError(f"stray quote inside string {token!r}")
            out.append(body[i])
            i += 1
        return "".join(out)
    if _INT_RE.match(token):
        return int(token)
    if _NUM_RE.match(token):
        value = float(token)
        if not math.isfinite(value):
            raise _ScalarError(f"non-finite number {token!r}")
        return value
    if _BARE_RE.match(token):
        return token
    raise _ScalarError(f"bad value {token!r}")


def _split_scalars(text: str, sep: str) -> list:
    """Split on sep outside quoted strings."""
    parts = []
    current = []
    in_string = False
    i = 0
    while i < len(text):
        c = text[i]
        if in_string and c == "\\" and i + 1 < len(text):
            current.append(text[i : i + 2])
            i += 2
            continue
        if c == '"':
            in_string = not in_string
        if c == sep and not in_string:
            parts.append("".join(current))
            current = []
        else:
            current.append(c)
        i += 1
    parts.append("".join(current))
    return parts


def _parse_values(text: str) -> list:
    """An entry value: single scalar, {set, literal}, or start : step : stop."""
    text = text.strip()
    if text.startswith("{"):
        if not text.endswith("}"):
            raise _ScalarError("unterminated value set")
        inner = text[1:-1].strip()
        if not inner:
            raise _ScalarError("empty value set")
        values = [_parse_scalar(p) for p in _split_scalars(inner, ",")]
        kinds = {value_kind(v) for v in values}
        if len(kinds) > 1:
            raise _ScalarError("mixed value kinds in set")
        seen = []
        for v in values:
            if v in seen:
                raise _ScalarError(f"duplicate value {format_scalar(v)}")
            seen.append(v)
        return values
    parts = _split_scalars(text, ":")
    if len(parts) == 3:
        start, step, stop = (_parse_scalar(p) for p in parts)
        for v in (start, step, stop):
            if isinstance(v, str):
                raise _ScalarError("range endpoints must be numeric")
        try:
            values = expand_range(start, step, stop)
        except ValueError as exc:
            raise _ScalarError(str(exc)) from None
        if len(values) != len(set(values)):
            raise _ScalarError("range collapses to duplicate values")
        return values
    if len(parts) != 1:
        raise _ScalarError("expected 'start : step : stop'")
    return [_parse_scalar(text)]


def parse_config(text: str) -> Config:
    """Parse config text into a validated Config. Raises ConfigError with
    one (line, message) entry per problem found."""
    errors = []
    section = None
    seen_sections = set()
    task: dict = {}
    specs: list = []
    rule_lines: list = []  # (line_no, text)
    ckpt: dict = {}
    plot: dict = {}

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        if line.startswith("["):
            m = _SECTION_RE.match(line)
            if not m:
                errors.append((line_no, f"bad section header {line!r}"))
                section = None
                continue
            name = m.group(1)
            if name not in _SECTIONS:
                errors.append((line_no, f"unknown section [{name}]"))
                section = None
                continue
            if name in seen_sections:
                errors.append((line_no, f"duplicate section [{name}]"))
                section = None
                continue
            seen_sections.add(name)
            section = name
            continue
        if section is None:
            errors.append((line_no, f"entry outside a known section: {line!r}"))
            continue
        if section == "aggregate":
            rule_lines.append((line_no, line))
            continue
        key, sep, value_text = line.partition("=")
        if not sep:
            errors.append((line_no, f"expected 'key = value', found {line!r}"))
            continue
        key = key.strip()
        value_text = value_text.strip()
        if section == "params":
            if not _NAME_RE.match(key):
                errors.append((line_no, f"bad parameter name {key!r}"))
                continue
            if any(s.name == key for s in specs):
                errors.append((line_no, f"duplicate parameter {key!r}"))
                continue
            try:
                values = _parse_values(value_text)
            except _ScalarError as exc:
                errors.append((line_no, f"parameter {key!r}: {exc}"))
                continue
            specs.append(ParameterSpec(key, tuple(values)))
            continue
        # scalar sections: task, checkpoint, plot
        target, known = {
            "task": (task, _TASK_KEYS),
            "checkpoint": (ckpt, _CHECKPOINT_KEYS),
            "plot": (plot, _PLOT_KEYS),
        }[section]
        if key not in known:
            errors.append((line_no, f"unknown key {key!r} in [{section}]"))
            continue
        if key in target:
            errors.append((line_no, f"duplicate key {key!r}"))
            continue
        try:
            target[key] = (_parse_scalar(value_text), line_no)
        except _ScalarError as exc:
            errors.append((line_no, f"{key}: {exc}"))

    space = ParameterSpace(tuple(specs))

    def scalar(table, key, kinds, default, check=None):
        if key not in table:
            return default
        value, line_no = table[key]
        if value_kind(value) not in kinds:
            errors.append((line_no, f"{key}: expected {' or '.join(kinds)}"))
            return default
        if check is not None:
            problem = check(value)
            if problem:
                errors.append((line_no, f"{key}: {problem}"))
                return default
        return value

    name = scalar(task, "name", ("text",), "run", lambda v: None if v else "empty name")
    repeats = scalar(task, "repeats", ("int",), 1, lambda v: None if v >= 1 else "must be >= 1")
    max_steps = scalar(task, "max_steps", ("int",), None, lambda v: None if v >= 0 else "must be >= 0")
    seed = scalar(task, "seed", ("int",), 0, lambda v: None if 0 <= v < 2**64 else "must fit in u64")
    workers = scalar(
        task,
        "workers",
        ("int", "text"),
        1,
        lambda v: None if (v == "auto" if isinstance(v, str) else v >= 1) else "must be >= 1 or auto",
    )

    interval = scalar(
        ckpt, "interval_seconds", ("int", "real"), 60.0, lambda v: None if v >= 0 else "must be >= 0"
    )
    keep = scalar(ckpt, "keep", ("int",), 2, lambda v: None if v >= 1 else "must be >= 1")
    ckpt_path = scalar(ckpt, "path", ("text",), None)
    template = scalar(plot, "template", ("text",), None)
    script = scalar(plot, "script", ("text",), None)

    kinds = space.kinds()
    rules = []
    for line_no, line in rule_lines:
        try:
            rule = aggregate.parse_rule(line, kinds)
        except aggregate.RuleError as exc:
            errors.append((line_no, f"rule: {exc}"))
            continue
        if any(r.result_id == rule.result_id for r in rules):
            errors.append((line_no, f"duplicate rule id {rule.result_id!r}"))
            continue
        rules.append(rule)

    if errors:
        raise ConfigError(sorted(errors))

    return Config(
        name=name,
        repeats=repeats,
        max_steps=max_steps,
        seed=seed,
        workers=workers,
        space=space,
        rules=tuple(rules),
        checkpoint=CheckpointPolicy(float(interval), keep, ckpt_path),
        plot=PlotPolicy(template, script),
    )


def load_config(path) -> Config:
    """Read and parse a config file; invalid UTF-8 is a config error."""
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError([(0, f"not valid UTF-8: {exc}")]) from None
    return parse_config(text)
