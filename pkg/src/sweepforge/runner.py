"""High-level orchestration: plan or resume, execute with periodic
checkpoints, then finalize tables and plot output. Shared by the CLI,
the demos, and the test suite."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import checkpoint as ckpt
from . import engine, plot
from .aggregate import AggState
from .config import Config
from .engine import RunLedger


@dataclass
class RunResult:
    config: Config
    ledger: RunLedger
    agg: AggState
    tables: dict = field(default_factory=dict)  # rule id -> ResultTable
    table_paths: dict = field(default_factory=dict)
    script_path: Optional[str] = None
    checkpoint_path: Optional[str] = None

    @property
    def failed(self) -> bool:
        return bool(self.ledger.failed)

    def summary(self) -> str:
        cells = sum(self.agg.cell_count(r.result_id) for r in self.agg.rules)
        return f"done units={len(self.ledger.completed)} failed={len(self.ledger.failed)} cells={cells}"


def resolve_workers(config: Config, override: Optional[int] = None) -> int:
    if override is not None:
        return max(1, override)
    if config.workers == "auto":
        return os.cpu_count() or 1
    return int(config.workers)


def checkpoint_path_for(config: Config, out_dir) -> str:
    path = config.checkpoint.path or f"{config.name}.ckpt"
    return path if os.path.isabs(path) else os.path.join(out_dir, path)


def run_experiment(
    config: Config,
    logic_factory,
    *,
    workers: Optional[int] = None,
    out_dir: str = ".",
    resume_from: Optional[ckpt.Checkpoint] = None,
    checkpoints: bool = True,
    emit_outputs: bool = True,
    recorders=None,
    on_commit: Optional[Callable] = None,
    log=None,
) -> RunResult:
    """Execute the full plan (or the remainder of a checkpointed run).

    Checkpoints are written at run start, at commit boundaries per the
    configured interval (0 means after every commit), and at completion;
    checkpoint I/O failures are reported on the log stream but never stop
    the run. on_commit(unit_index, buffer) may raise AbortExperiment to
    emulate an interruption: committed state stays on disk, outputs are
    not emitted, and the exception propagates.
    """
    if resume_from is not None:
        units, ledger, agg = ckpt.resume_state(resume_from, config)
    else:
        units = engine.plan(config.space, config.repeats, config.seed)
        ledger = RunLedger(len(units))
        agg = AggState(config.rules)

    cfg_hash = config.canonical_hash()
    cp_path = checkpoint_path_for(config, out_dir)
    interval = config.checkpoint.interval_seconds
    keep = config.checkpoint.keep
    last_write = time.monotonic()

    def write_snapshot() -> None:
        nonlocal last_write
        snap = ckpt.snapshot(ledger, agg, cfg_hash, config.seed)
        try:
            ckpt.write_checkpoint(snap, cp_path, keep=keep)
        except OSError as exc:
            if log is not None:
                log.write(f"checkpoint write failed (will retry): {exc}\n")
        last_write = time.monotonic()

    if checkpoints:
        os.makedirs(out_dir, exist_ok=True)
        write_snapshot()

    def commit_hook(unit_index: int, buffer) -> None:
        # user hook first: an abort here emulates a kill after the commit
        # was applied but before its checkpoint hit the disk
        if on_commit is not None:
            on_commit(unit_index, buffer)
        if checkpoints and time.monotonic() - last_write >= interval:
            write_snapshot()

    result = engine.execute(
        config.space,
        config.repeats,
        units,
        logic_factory,
        agg=agg,
        ledger=ledger,
        workers=resolve_workers(config, workers),
        recorders=recorders,
        max_steps=config.max_steps,
        on_commit=commit_hook,
        log=log,
    )

    if checkpoints:
        write_snapshot()

    out = RunResult(config, result.ledger, result.agg, checkpoint_path=cp_path if checkpoints else None)
    out.tables = result.agg.finalize_all()
    if emit_outputs:
        emit_results(out, out_dir)
    return out


def emit_results(result: RunResult, out_dir: str) -> None:
    """Write `<name>.<rule>.dat` files and the `<name>.plt` script (from
    the configured template when present, else the default per-rule
    scripts)."""
    config = result.config
    result.table_paths = plot.emit_tables(result.tables, out_dir, config.name)
    if config.plot.template is not None:
        with open(config.plot.template, "r", encoding="utf-8") as fh:
            template = fh.read()
        bindings = plot.build_context(config, result.tables, result.table_paths, result.ledger)
        script = plot.render(template, bindings)
    else:
        script = plot.default_scripts(config.rules, result.table_paths, config.name)
    script_name = config.plot.script or f"{config.name}.plt"
    result.script_path = plot.write_script(script, out_dir, script_name)
