"""Gnuplot output: result-table data files, default plot scripts, and the
hybrid template engine.

Templates are ordinary Gnuplot script text with embedded directives
``@{expr}`` evaluated against the run context (``@@`` escapes a literal
``@``). Directives support arithmetic over numeric bindings and text
concatenation with ``&``; unknown bindings fail rendering loudly rather
than substituting empty text."""

from __future__ import annotations

import os
from typing import Mapping, Optional, Sequence

from . import expr, fileio
from .aggregate import AggregationRule, ResultTable, emitted_columns
from .config import Config
from .engine import RunLedger


class TemplateError(ValueError):
    """Bad directive syntax or a failing directive expression."""


def render(template: str, bindings: Mapping[str, object]) -> str:
    """Replace every ``@{expr}`` with the canonical text of its value and
    ``@@`` with ``@``; all other bytes copy through verbatim."""
    out = []
    i = 0
    line = 1
    n = len(template)
    while i < n:
        c = template[i]
        if c == "\n":
            line += 1
        if c != "@":
            out.append(c)
            i += 1
            continue
        if i + 1 < n and template[i + 1] == "@":
            out.append("@")
            i += 2
            continue
        if i + 1 < n and template[i + 1] == "{":
            end = template.find("}", i + 2)
            if end < 0:
                raise TemplateError(f"line {line}: unterminated @{{ directive")
            text = template[i + 2 : end]
            try:
                node = expr.parse(text, dialect="plot")
                value = expr.evaluate(node, bindings)
            except (expr.ExprError, expr.EvalError) as exc:
                raise TemplateError(f"line {line}: @{{{text}}}: {exc}") from None
            out.append(_binding_text(value))
            i = end + 1
            continue
        raise TemplateError(f"line {line}: stray '@' (use @@ for a literal @)")
    return "".join(out)


def escape(text: str) -> str:
    """Escape literal text so render() reproduces it exactly."""
    return text.replace("@", "@@")


def _binding_text(value) -> str:
    if isinstance(value, (list, tuple)):
        return "{" + ", ".join(_binding_text(v) for v in value) + "}"
    return expr.format_value(value)


def build_context(
    config: Config,
    tables: Mapping[str, ResultTable],
    table_paths: Mapping[str, str],
    ledger: Optional[RunLedger] = None,
) -> dict:
    """Template bindings: config.<param> (the value, or the value list for
    swept parameters), table.<rule>.file / .rows, and run.* facts."""
    bindings: dict = {
        "run.name": config.name,
        "run.units_total": config.space.point_count * config.repeats,
        "run.completed": len(ledger.completed) if ledger is not None else 0,
    }
    for spec in config.space.specs:
        value = spec.values[0] if len(spec.values) == 1 else list(spec.values)
        bindings[f"config.{spec.name}"] = value
    for rule_id, table in tables.items():
        bindings[f"table.{rule_id}.file"] = table_paths[rule_id]
        bindings[f"table.{rule_id}.rows"] = len(table.rows)
    return bindings


def emit_tables(tables: Mapping[str, ResultTable], out_dir, run_name: str) -> dict:
    """Write one data file per rule (`<run>.<rule>.dat`, atomic overwrite);
    returns rule id -> path."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for rule_id, table in tables.items():
        path = os.path.join(out_dir, f"{run_name}.{rule_id}.dat")
        fileio.atomic_write_text(path, table.to_text())
        paths[rule_id] = path
    return paths


def _column_positions(rule: AggregationRule) -> dict:
    """1-based data-file column of each emitted stat (keys come first)."""
    positions = {}
    col = rule.key_arity
    for name in emitted_columns(rule):
        if name == "hist":
            col += rule.hist_bins or 0
            continue
        col += 1
        positions[name] = col
    return positions


def default_script(rule: AggregationRule, table_path: str, run_name: str) -> str:
    """Self-contained pdf-terminal script for one rule's table. Plots
    mean over the first key column, with error bars when stderr was
    collected."""
    lines = [f"# plot for result {rule.result_id!r} of run {run_name!r}"]
    lines.append("set terminal pdf")
    lines.append(f"set output '{run_name}.{rule.result_id}.pdf'")
    title = rule.result_id
    data = os.path.basename(table_path)
    if rule.key_arity == 0 or "mean" not in emitted_columns(rule):
        lines.append("# no key columns or no mean collected: single-point fallback")
        lines.append(f"set title '{title}'")
        lines.append(f"plot '{data}' using 0:1 with points title '{title}'")
        return "\n".join(lines) + "\n"
    keys = rule.condition_texts
    lines.append(f"set xlabel '{keys[0]}'")
    lines.append(f"set ylabel '{rule.result_id}'")
    if rule.key_arity > 1:
        # extra key columns are not split into series; noted, not plotted
        extras = ", ".join(keys[1:])
        lines.append(f"# note: additional key column(s) {extras} are not separated into series")
    cols = _column_positions(rule)
    if "stderr" in cols:
        using = f"1:{cols['mean']}:{cols['stderr']}"
        lines.append(f"plot '{data}' using {using} with yerrorlines title '{title}'")
    else:
        lines.append(f"plot '{data}' using 1:{cols['mean']} with linespoints title '{title}'")
    return "\n".join(lines) + "\n"


def default_scripts(
    rules: Sequence[AggregationRule], table_paths: Mapping[str, str], run_name: str
) -> str:
    """One script covering every rule, blocks separated by blank lines."""
    blocks = [
        default_script(rule, table_paths[rule.result_id], run_name)
        for rule in rules
        if rule.result_id in table_paths
    ]
    if not blocks:
        blocks = [f"# run {run_name!r} produced no result tables\n"]
    return "\n".join(blocks)


def write_script(text: str, out_dir, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    fileio.atomic_write_text(path, text)
    return path
