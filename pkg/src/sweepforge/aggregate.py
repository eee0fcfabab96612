"""Streaming result aggregation.

Observations committed by run units are grouped into cells by condition
expressions over the unit's parameter values, and reduced to streaming
statistics. Reduction is canonical: per-unit partials merge in ascending
unit order, so finalized tables are bit-identical for any execution
interleaving or commit order.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

from . import expr, timepoints

STAT_ORDER = ("count", "sum", "mean", "var", "stderr", "min", "max", "hist")

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_HIST_RE = re.compile(r"hist\(\s*(\d+)\s*\)\Z")


class RuleError(ValueError):
    """Malformed or invalid aggregation rule."""


class RuleEvalError(ValueError):
    """A rule could not be evaluated for a unit; the unit fails."""


class CommitError(ValueError):
    """Duplicate or otherwise rejected unit commit."""


@dataclass(frozen=True)
class AggregationRule:
    """What to collect (result_id), when (timepoint), how (stats), and
    keyed by which expressions over parameters (conditions)."""

    result_id: str
    stats: tuple  # stat names from STAT_ORDER, normalized order, no dups
    timepoint: str
    conditions: tuple = ()  # scalar expression nodes, one per key column
    hist_bins: Optional[int] = None

    @property
    def condition_texts(self) -> tuple:
        return tuple(expr.to_text(c) for c in self.conditions)

    @property
    def key_arity(self) -> int:
        return len(self.conditions)

    def canonical_text(self) -> str:
        stats = ", ".join(
            f"hist({self.hist_bins})" if s == "hist" else s for s in self.stats
        )
        text = f"{self.result_id} : {stats} @ {self.timepoint}"
        if self.conditions:
            text += " by " + ", ".join(self.condition_texts)
        return text


def parse_rule(text: str, declared: Optional[Mapping[str, str]] = None) -> AggregationRule:
    """Parse one ``[aggregate]`` line:

        result_id : stat, stat @ timepoint [by expr, expr]

    ``declared`` maps parameter names to kinds ("int"|"real"|"text"); when
    given, condition names are checked against it.
    """
    head, sep, rest = text.partition(":")
    if not sep:
        raise RuleError("missing ':' after result id")
    result_id = head.strip()
    if not _IDENT_RE.match(result_id):
        raise RuleError(f"bad result id {result_id!r}")

    stats_text, sep, rest = rest.partition("@")
    if not sep:
        raise RuleError("missing '@ timepoint'")

    hist_bins = None
    names = []
    for part in stats_text.split(","):
        part = part.strip()
        m = _HIST_RE.match(part)
        if m:
            k = int(m.group(1))
            if k < 1:
                raise RuleError("hist needs at least 1 bin")
            if hist_bins is not None:
                raise RuleError("duplicate stat 'hist'")
            hist_bins = k
            part = "hist"
        elif part not in STAT_ORDER or part == "hist":
            raise RuleError(f"unknown stat {part!r}")
        if part in names:
            raise RuleError(f"duplicate stat {part!r}")
        names.append(part)
    stats = tuple(s for s in STAT_ORDER if s in names)

    # split "timepoint [by exprs]" on a word-boundary 'by'
    m = re.search(r"\bby\b", rest)
    if m:
        tp_text, by_text = rest[: m.start()].strip(), rest[m.end() :].strip()
    else:
        tp_text, by_text = rest.strip(), ""
    tp_text = re.sub(r"\s+", "", tp_text)
    if not timepoints.is_valid(tp_text):
        raise RuleError(f"unknown time point {tp_text!r}")
    if tp_text in timepoints.TASK_LEVEL:
        raise RuleError(
            f"rules cannot aggregate at {tp_text!r}: task-level points carry "
            "no per-run observations (use after_run or a user point)"
        )

    conditions = []
    if by_text:
        try:
            parsed = expr.parse(by_text if "," not in by_text else f"({by_text})")
        except expr.ExprError as exc:
            raise RuleError(f"bad condition expression: {exc}") from None
        items = parsed.items if isinstance(parsed, expr.TupleExpr) else (parsed,)
        for item in items:
            if isinstance(item, expr.TupleExpr):
                # flatten "by (x1, x2)" into two key columns
                conditions.extend(item.items)
            else:
                conditions.append(item)
    for cond in conditions:
        if isinstance(cond, expr.TupleExpr):
            raise RuleError("nested tuple in condition")
        if declared is not None:
            for name in sorted(expr.names_in(cond)):
                kind = declared.get(name)
                if kind is None:
                    raise RuleError(f"condition references undeclared parameter {name!r}")
                if kind == "text":
                    raise RuleError(f"condition references non-numeric parameter {name!r}")

    return AggregationRule(result_id, stats, tp_text, tuple(conditions), hist_bins)


def eval_condition(node: expr.Node, assignments: Mapping[str, object]) -> tuple:
    """Evaluate one condition expression (possibly a tuple) over a
    parameter point; returns the cell key tuple of floats."""
    env = {k: v for k, v in assignments.items() if isinstance(v, (int, float))}
    value = expr.evaluate(node, env)
    items = value if isinstance(value, tuple) else (value,)
    return tuple(float(v) for v in items)


def eval_cell(rule: AggregationRule, assignments: Mapping[str, object]) -> tuple:
    """Cell key for a rule at a parameter point (empty tuple = global cell)."""
    key = []
    for cond in rule.conditions:
        key.extend(eval_condition(cond, assignments))
    return tuple(key)


def format_cell(key: tuple) -> str:
    """Canonical single-token cell text used in checkpoint files."""
    if not key:
        return "()"
    return ",".join(repr(v) for v in key)


def parse_cell(text: str) -> tuple:
    if text == "()":
        return ()
    return tuple(float(part) for part in text.split(","))


@dataclass
class PartialStat:
    """Per-(cell, unit) streaming statistics: Welford mean/m2 plus exact
    count/min/max, and optional per-unit histogram bin counts spanning the
    unit's own [min, max]."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    min: float = math.inf
    max: float = -math.inf
    hist: Optional[tuple] = None

    def copy(self) -> "PartialStat":
        return replace(self)


def observe(stat: PartialStat, value: float) -> PartialStat:
    """Welford update with one value; returns a new PartialStat."""
    value = float(value)
    if not math.isfinite(value):
        raise RuleEvalError(f"non-finite observation {value!r}")
    out = stat.copy()
    out.count += 1
    delta = value - out.mean
    out.mean += delta / out.count
    out.m2 += delta * (value - out.mean)
    out.min = min(out.min, value)
    out.max = max(out.max, value)
    return out


def merge(a: PartialStat, b: PartialStat) -> PartialStat:
    """Pairwise combination of two partials (Chan et al.). Histograms are
    not merged here; cells recombine them at finalize."""
    if b.count == 0:
        return a.copy()
    if a.count == 0:
        return b.copy()
    n = a.count + b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.count / n)
    m2 = a.m2 + b.m2 + delta * delta * (a.count * b.count / n)
    return PartialStat(n, mean, m2, min(a.min, b.min), max(a.max, b.max))


def stat_from_values(values: Sequence[float], hist_bins: Optional[int] = None) -> PartialStat:
    """Build a unit's partial from its committed observations."""
    acc = PartialStat()
    for v in values:
        acc = observe(acc, v)
    if hist_bins is not None and acc.count > 0:
        acc.hist = bin_values(values, acc.min, acc.max, hist_bins)
    return acc


def bin_values(values: Iterable[float], lo: float, hi: float, k: int) -> tuple:
    """Equal-width binning over [lo, hi]; bins are right-open except the
    last, which is closed. A zero-width range puts everything in bin 0."""
    counts = [0] * k
    width = hi - lo
    for v in values:
        if width == 0:
            counts[0] += 1
            continue
        i = int((v - lo) / width * k)
        if i >= k:
            i = k - 1
        elif i < 0:
            i = 0
        counts[i] += 1
    return tuple(counts)


def rebin(counts: Sequence[float], lo: float, hi: float, new_lo: float, new_hi: float, k: int) -> list:
    """Distribute bin counts over [lo, hi] into k bins over [new_lo, new_hi]
    by proportional overlap. Exact when the ranges coincide; otherwise a
    documented approximation (unit ranges differ across units)."""
    out = [0.0] * k
    if new_hi == new_lo:
        out[0] += float(sum(counts))
        return out
    src_k = len(counts)
    src_width = (hi - lo) / src_k if hi > lo else 0.0
    new_width = (new_hi - new_lo) / k
    for i, c in enumerate(counts):
        if c == 0:
            continue
        if src_width == 0.0:
            # point mass at lo
            j = min(int((lo - new_lo) / new_width), k - 1)
            out[max(j, 0)] += float(c)
            continue
        a = lo + i * src_width
        b = lo + (i + 1) * src_width if i + 1 < src_k else hi
        for j in range(k):
            ja = new_lo + j * new_width
            jb = new_hi if j + 1 == k else new_lo + (j + 1) * new_width
            overlap = min(b, jb) - max(a, ja)
            if overlap > 0:
                out[j] += c * (overlap / (b - a))
    return out


def emitted_columns(rule: AggregationRule) -> tuple:
    """Stat columns written to the result table: the requested stats plus
    count always, mean when var is present, and var when stderr is."""
    names = set(rule.stats)
    names.add("count")
    if "stderr" in names:
        names.add("var")
    if "var" in names:
        names.add("mean")
    return tuple(s for s in STAT_ORDER if s in names)


@dataclass
class ResultRow:
    key: tuple
    stats: dict  # stat name -> float | int | None | list (hist)


@dataclass
class ResultTable:
    rule: AggregationRule
    rows: list = field(default_factory=list)  # sorted ascending by key

    @property
    def columns(self) -> tuple:
        return emitted_columns(self.rule)

    def to_text(self) -> str:
        """Table file content: `#` header then whitespace-separated rows,
        floats in shortest round-trip form, directly loadable by Gnuplot."""
        names = []
        names.extend(f"key_{i + 1}" for i in range(self.rule.key_arity))
        for col in self.columns:
            if col == "hist":
                names.extend(f"hist_{i + 1}" for i in range(self.rule.hist_bins or 0))
            else:
                names.append(col)
        lines = ["# " + " ".join(names)]
        for row in self.rows:
            cells = [repr(k) for k in row.key]
            for col in self.columns:
                value = row.stats[col]
                if col == "hist":
                    cells.extend(_format_stat(v) for v in value)
                else:
                    cells.append(_format_stat(value))
            lines.append(" ".join(cells))
        return "\n".join(lines) + "\n"


def _format_stat(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, int):
        return str(value)
    return repr(value)


class AggState:
    """Committed per-(rule, cell, unit) partials. Owned by the single
    aggregation consumer; workers never touch it."""

    def __init__(self, rules: Sequence[AggregationRule]):
        ids = [r.result_id for r in rules]
        for rid in ids:
            if ids.count(rid) > 1:
                raise RuleError(f"duplicate rule id {rid!r}")
        self.rules = tuple(rules)
        self.committed: set = set()
        # rule id -> cell key -> unit index -> PartialStat
        self.cells: dict = {r.result_id: {} for r in rules}

    def commit_unit(self, unit_index: int, assignments: Mapping[str, object], buffer: Sequence[tuple]) -> None:
        """Atomically fold one unit's observation buffer in. The buffer
        holds (timepoint, name, value) entries. All rule evaluation happens
        before any state mutation, so a failing rule leaves no trace."""
        if unit_index in self.committed:
            raise CommitError(f"unit {unit_index} already committed")
        staged = []
        for rule in self.rules:
            values = [v for tp, name, v in buffer if tp == rule.timepoint and name == rule.result_id]
            if not values:
                continue
            try:
                cell = eval_cell(rule, assignments)
                stat = stat_from_values(values, rule.hist_bins)
            except (expr.EvalError, RuleEvalError) as exc:
                raise RuleEvalError(f"rule {rule.result_id!r}: {exc}") from None
            staged.append((rule.result_id, cell, stat))
        for rid, cell, stat in staged:
            self.cells[rid].setdefault(cell, {})[unit_index] = stat
        self.committed.add(unit_index)

    def insert_partial(self, rule_id: str, cell: tuple, unit_index: int, stat: PartialStat) -> None:
        """Direct insertion used by checkpoint restore and task-level
        commits; bypasses the per-unit duplicate guard."""
        if rule_id not in self.cells:
            raise RuleError(f"unknown rule id {rule_id!r}")
        self.cells[rule_id].setdefault(cell, {})[unit_index] = stat

    def mark_committed(self, unit_indices: Iterable[int]) -> None:
        self.committed.update(unit_indices)

    def rule_by_id(self, rule_id: str) -> AggregationRule:
        for rule in self.rules:
            if rule.result_id == rule_id:
                return rule
        raise RuleError(f"unknown rule id {rule_id!r}")

    def finalize(self, rule: AggregationRule) -> ResultTable:
        """Reduce a rule's cells to a sorted result table. Per-unit partials
        merge in ascending unit order (canonical reduction)."""
        table = ResultTable(rule)
        for cell in sorted(self.cells[rule.result_id]):
            units = self.cells[rule.result_id][cell]
            acc = PartialStat()
            for unit_index in sorted(units):
                acc = merge(acc, units[unit_index])
            stats = {
                "count": acc.count,
                "sum": acc.mean * acc.count,
                "mean": acc.mean,
                "min": acc.min,
                "max": acc.max,
            }
            if acc.count >= 2:
                var = acc.m2 / (acc.count - 1)
                stats["var"] = var
                stats["stderr"] = math.sqrt(var / acc.count)
            else:
                stats["var"] = None
                stats["stderr"] = None
            if rule.hist_bins is not None:
                bins = [0.0] * rule.hist_bins
                for unit_index in sorted(units):
                    part = units[unit_index]
                    if part.hist is None:
                        continue
                    add = rebin(part.hist, part.min, part.max, acc.min, acc.max, rule.hist_bins)
                    for j in range(rule.hist_bins):
                        bins[j] += add[j]
                stats["hist"] = bins
            table.rows.append(ResultRow(cell, stats))
        return table

    def finalize_all(self) -> dict:
        return {rule.result_id: self.finalize(rule) for rule in self.rules}

    def cell_count(self, rule_id: str) -> int:
        return len(self.cells[rule_id])
