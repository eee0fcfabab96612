"""Portable checkpoint files: the completed-unit ledger plus all committed
aggregation state, snapshotted at commit boundaries.

The format is plain UTF-8 text with LF endings and a trailing CRC32, so a
checkpoint written on one machine loads on any other and resumes with
bit-identical results (worker count is deliberately not part of the
state). In-flight units at the moment of interruption are simply re-run.

    LEOCKPT 1
    config_hash = <64 hex>
    master_seed = <decimal u64>
    units_total = <decimal>
    completed = 0-3,7,9-12
    [agg <rule_id>]
    <cell> <unit> <count> <mean> <m2> <min> <max> [<hist counts...>]
    crc32 = <8 hex over all preceding bytes>
"""

from __future__ import annotations

import os
import re
import zlib
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

from . import aggregate, engine, fileio
from .aggregate import AggState, PartialStat
from .config import Config
from .engine import RunLedger

FORMAT_VERSION = 1
_MAGIC = "LEOCKPT"

_CRC_RE = re.compile(r"crc32 = ([0-9a-f]{8})\Z")
_AGG_RE = re.compile(r"\[agg ([A-Za-z_][A-Za-z0-9_]*)\]\Z")


class CheckpointError(Exception):
    """Corrupt, incompatible, or mismatched checkpoint."""


@dataclass(frozen=True)
class Checkpoint:
    version: int
    config_hash: str
    master_seed: int
    units_total: int
    completed: tuple  # sorted unit indices
    rule_ids: tuple
    partials: tuple  # (rule_id, cell, unit_index, PartialStat), canonical order


def rle_encode(indices: Sequence[int]) -> str:
    """Ascending run-length ranges: [0,1,2,3,7,9,10] -> '0-3,7,9-10'."""
    parts = []
    i = 0
    while i < len(indices):
        j = i
        while j + 1 < len(indices) and indices[j + 1] == indices[j] + 1:
            j += 1
        parts.append(str(indices[i]) if i == j else f"{indices[i]}-{indices[j]}")
        i = j + 1
    return ",".join(parts)


def rle_decode(text: str) -> list:
    """Inverse of rle_encode; validates ascending, disjoint ranges."""
    out: list = []
    text = text.strip()
    if not text:
        return out
    for part in text.split(","):
        lo, sep, hi = part.partition("-")
        try:
            lo_i = int(lo)
            hi_i = int(hi) if sep else lo_i
        except ValueError:
            raise CheckpointError(f"malformed range {part!r}") from None
        if hi_i < lo_i or lo_i < 0:
            raise CheckpointError(f"malformed range {part!r}")
        if out and lo_i <= out[-1]:
            raise CheckpointError(f"ranges not ascending at {part!r}")
        out.extend(range(lo_i, hi_i + 1))
    return out


def snapshot(ledger: RunLedger, agg: AggState, config_hash: str, master_seed: int) -> Checkpoint:
    """Capture committed state. Must be taken between commits (the
    aggregation consumer guarantees this); in-flight units are excluded."""
    partials = []
    for rule in agg.rules:
        cells = agg.cells[rule.result_id]
        for cell in sorted(cells):
            for unit_index in sorted(cells[cell]):
                partials.append((rule.result_id, cell, unit_index, cells[cell][unit_index].copy()))
    return Checkpoint(
        version=FORMAT_VERSION,
        config_hash=config_hash,
        master_seed=master_seed,
        units_total=ledger.units_total,
        completed=tuple(sorted(ledger.completed)),
        rule_ids=tuple(rule.result_id for rule in agg.rules),
        partials=tuple(partials),
    )


def checkpoint_text(cp: Checkpoint) -> str:
    """Bit-exact serialized form (LF endings, shortest round-trip floats)."""
    lines = [
        f"{_MAGIC} {cp.version}",
        f"config_hash = {cp.config_hash}",
        f"master_seed = {cp.master_seed}",
        f"units_total = {cp.units_total}",
        ("completed = " + rle_encode(cp.completed)).rstrip(),
    ]
    by_rule: dict = {rid: [] for rid in cp.rule_ids}
    for rid, cell, unit_index, stat in cp.partials:
        by_rule[rid].append((cell, unit_index, stat))
    for rid in cp.rule_ids:
        lines.append(f"[agg {rid}]")
        for cell, unit_index, stat in by_rule[rid]:
            parts = [
                aggregate.format_cell(cell),
                str(unit_index),
                str(stat.count),
                repr(stat.mean),
                repr(stat.m2),
                repr(stat.min),
                repr(stat.max),
            ]
            if stat.hist is not None:
                parts.extend(str(c) for c in stat.hist)
            lines.append(" ".join(parts))
    body = "\n".join(lines) + "\n"
    crc = zlib.crc32(body.encode("utf-8")) & 0xFFFFFFFF
    return f"{body}crc32 = {crc:08x}\n"


def write_checkpoint(cp: Checkpoint, path, keep: int = 2) -> None:
    """Atomic write with rotation of the previous file to `<path>.1` ..."""
    fileio.atomic_write_text(path, checkpoint_text(cp), keep=keep)


def load_checkpoint(path) -> Checkpoint:
    """Parse and verify a checkpoint file (CRC first, then version)."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from None
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise CheckpointError("corrupt checkpoint: not valid UTF-8") from None
    if not text.endswith("\n"):
        raise CheckpointError("truncated checkpoint (no trailing newline)")
    lines = text.splitlines()
    if not lines:
        raise CheckpointError("empty checkpoint file")
    m = _CRC_RE.match(lines[-1])
    if not m:
        raise CheckpointError("truncated checkpoint (missing crc32 line)")
    body = text[: text.rindex("crc32 = ")]
    expected = int(m.group(1), 16)
    actual = zlib.crc32(body.encode("utf-8")) & 0xFFFFFFFF
    if actual != expected:
        raise CheckpointError(f"corrupt checkpoint: crc mismatch ({actual:08x} != {expected:08x})")

    head = lines[0].split()
    if len(head) != 2 or head[0] != _MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    try:
        version = int(head[1])
    except ValueError:
        raise CheckpointError("not a checkpoint file (bad version)") from None
    if version != FORMAT_VERSION:
        raise CheckpointError(f"incompatible checkpoint version {version}")

    def field(line_no: int, key: str) -> str:
        if line_no >= len(lines) - 1:
            raise CheckpointError(f"line {line_no + 1}: missing {key}")
        name, sep, value = lines[line_no].partition("=")
        if not sep or name.strip() != key:
            raise CheckpointError(f"line {line_no + 1}: expected {key}")
        return value.strip()

    config_hash = field(1, "config_hash")
    if not re.fullmatch(r"[0-9a-f]{64}", config_hash):
        raise CheckpointError("line 2: bad config_hash")
    try:
        master_seed = int(field(2, "master_seed"))
        units_total = int(field(3, "units_total"))
    except ValueError:
        raise CheckpointError("bad master_seed or units_total") from None
    if not 0 <= master_seed < 2**64 or units_total < 0:
        raise CheckpointError("master_seed or units_total out of range")
    completed = rle_decode(field(4, "completed"))
    if completed and completed[-1] >= units_total:
        raise CheckpointError("completed unit index beyond units_total")
    done = set(completed)

    rule_ids: list = []
    partials: list = []
    current: Optional[str] = None
    for line_no, line in enumerate(lines[5:-1], start=6):
        m = _AGG_RE.match(line)
        if m:
            current = m.group(1)
            if current in rule_ids:
                raise CheckpointError(f"line {line_no}: duplicate section [agg {current}]")
            rule_ids.append(current)
            continue
        if current is None:
            raise CheckpointError(f"line {line_no}: data before any [agg] section")
        parts = line.split()
        if len(parts) < 7:
            raise CheckpointError(f"line {line_no}: short aggregation record")
        try:
            cell = aggregate.parse_cell(parts[0])
            unit_index = int(parts[1])
            stat = PartialStat(
                count=int(parts[2]),
                mean=float(parts[3]),
                m2=float(parts[4]),
                min=float(parts[5]),
                max=float(parts[6]),
                hist=tuple(int(c) for c in parts[7:]) or None,
            )
        except ValueError as exc:
            raise CheckpointError(f"line {line_no}: {exc}") from None
        if stat.count < 1:
            raise CheckpointError(f"line {line_no}: empty partial")
        if unit_index not in done:
            raise CheckpointError(f"line {line_no}: partial for uncommitted unit {unit_index}")
        partials.append((current, cell, unit_index, stat))

    return Checkpoint(
        version=version,
        config_hash=config_hash,
        master_seed=master_seed,
        units_total=units_total,
        completed=tuple(completed),
        rule_ids=tuple(rule_ids),
        partials=tuple(partials),
    )


def resume_state(cp: Checkpoint, cfg: Config) -> Tuple[list, RunLedger, AggState]:
    """Rebuild (remaining plan, ledger, aggregation state) from a
    checkpoint. Refuses checkpoints from a different experiment: the
    config hash, master seed, and unit count must all match."""
    cfg_hash = cfg.canonical_hash()
    if cp.config_hash != cfg_hash:
        raise CheckpointError(
            "config changed since checkpoint: "
            f"checkpoint hash {cp.config_hash}, current config hash {cfg_hash}; "
            f"current canonical config:\n{cfg.canonical_text()}"
        )
    if cp.master_seed != cfg.seed:
        raise CheckpointError(
            f"config changed since checkpoint: master_seed {cp.master_seed} != {cfg.seed}"
        )
    full_plan = engine.plan(cfg.space, cfg.repeats, cfg.seed)
    if cp.units_total != len(full_plan):
        raise CheckpointError(
            f"config changed since checkpoint: units_total {cp.units_total} != {len(full_plan)}"
        )
    known = {rule.result_id for rule in cfg.rules}
    for rid in cp.rule_ids:
        if rid not in known:
            raise CheckpointError(f"config changed since checkpoint: unknown rule {rid!r}")

    done = set(cp.completed)
    remaining = [u for u in full_plan if u.unit_index not in done]
    ledger = RunLedger(cp.units_total, completed=set(done))
    agg = AggState(cfg.rules)
    agg.mark_committed(done)
    for rid, cell, unit_index, stat in cp.partials:
        agg.insert_partial(rid, cell, unit_index, stat.copy())
    return remaining, ledger, agg


def describe(cp: Checkpoint) -> str:
    """Human-readable summary used by the CLI inspect command."""
    done = len(cp.completed)
    pct = 100.0 * done / cp.units_total if cp.units_total else 100.0
    lines = [
        f"version {cp.version}",
        f"config_hash {cp.config_hash}",
        f"units_total {cp.units_total}",
        f"completed {done}/{cp.units_total} ({pct:.1f}%)",
    ]
    for rid in cp.rule_ids:
        cells = {cell for r, cell, _, _ in cp.partials if r == rid}
        lines.append(f"rule {rid}: {len(cells)} cells")
    return "\n".join(lines)
