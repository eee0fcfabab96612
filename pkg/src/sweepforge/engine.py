"""Run-unit scheduling and parallel execution.

A run unit is one (parameter point, repeat) pair, the atomic item of
scheduling, commit, and recovery. Workers execute units independently and
send complete observation buffers back to the coordinator, which commits
them one at a time into aggregation state. Each unit's buffer is a pure
function of (config, unit index): all randomness flows from the unit seed,
so any schedule and any worker count commit the same observations.

The per-unit flow fires the built-in time points:

    before_run -> init_run -> { before_step -> step -> after_step }* ->
    finish_run -> after_run

before_task / after_task fire on the coordinator, once per parameter
point; recorders registered there see only the point identity and the
completed-run count, never per-run state.
"""

from __future__ import annotations

import multiprocessing
import random
import re
from collections import Counter, deque
from concurrent import futures
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Mapping, Optional, Sequence

from . import aggregate, timepoints
from .config import ParameterPoint, ParameterSpace

MASK64 = (1 << 64) - 1
MAX_PLAN_UNITS = 2**53

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class PlanError(ValueError):
    """Plan construction failed (bad repeats, overflow, duplicate units)."""


class EngineError(RuntimeError):
    """Coordinator-side failure (bad recorder at a task point, broken pool)."""


class AbortExperiment(RuntimeError):
    """Raised by a commit hook to abandon the run; used for fault injection
    and cancellation. In-flight work is discarded, committed state stands."""


def derive_seed(master_seed: int, unit_index: int) -> int:
    """Unit seed: SplitMix64 finalizer over master_seed + (i+1) golden-ratio
    increments, all mod 2^64. Pure and bit-exact."""
    z = (master_seed + 0x9E3779B97F4A7C15 * (unit_index + 1)) & MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & MASK64
    z ^= z >> 31
    return z


@dataclass(frozen=True)
class RunUnit:
    """unit_index = point_index * repeats + repeat_index."""

    unit_index: int
    point_index: int
    repeat_index: int
    seed: int


def plan(space: ParameterSpace, repeats: int, master_seed: int = 0) -> list:
    """All run units in unit_index order with derived seeds."""
    if repeats < 1:
        raise PlanError("repeats must be >= 1")
    total = space.point_count * repeats
    if total > MAX_PLAN_UNITS:
        raise PlanError(f"plan of {total} units exceeds 2^53")
    return [
        RunUnit(i, i // repeats, i % repeats, derive_seed(master_seed, i))
        for i in range(total)
    ]


class TaskLogic:
    """User-implemented task interface. A fresh instance is created for
    every run unit; nothing survives between units except through the
    record sink."""

    def init_run(self, ctx: "RunContext") -> None:
        pass

    def step(self, ctx: "RunContext") -> bool:
        """One computation step; return False to end the run."""
        return False

    def finish_run(self, ctx: "RunContext") -> None:
        pass


class RunContext:
    """Per-unit context handed to task logic and recorders.

    record() stages a value; it is stamped with the next time point that
    fires and moved to the unit's observation buffer. Task code records
    per-step values inside step() (stamped after_step), per-run values in
    finish_run() (stamped after_run), or calls fire() for a user point.
    """

    def __init__(self, point: ParameterPoint, unit: RunUnit, recorders: Optional[Mapping] = None):
        self.point = point
        self.unit = unit
        self.repeat_index = unit.repeat_index
        self.step_index = 0
        self.rng = random.Random(unit.seed)
        self._recorders = recorders or {}
        self._pending: list = []
        self._buffer: list = []  # (timepoint, name, value)

    def param(self, name: str):
        return self.point.assignments[name]

    def record(self, name: str, value) -> None:
        if not _NAME_RE.match(name):
            raise ValueError(f"bad observation name {name!r}")
        self._pending.append((name, float(value)))

    def fire(self, name: str) -> None:
        """Fire a user-defined time point from task code."""
        self._fire(timepoints.user(name))

    def _fire(self, tp: str) -> None:
        for recorder in self._recorders.get(tp, ()):
            recorder(self)
        if self._pending:
            self._buffer.extend((tp, name, value) for name, value in self._pending)
            self._pending.clear()


class TaskContext:
    """Coordinator-side context for before_task / after_task recorders:
    the point identity plus, at after_task, the completed-run count."""

    def __init__(self, point: ParameterPoint, completed_runs: Optional[int] = None):
        self.point = point
        self.completed_runs = completed_runs

    def param(self, name: str):
        return self.point.assignments[name]


@dataclass
class RunLedger:
    """Tracks every unit's fate; completed and in_flight are disjoint."""

    units_total: int
    completed: set = field(default_factory=set)
    failed: dict = field(default_factory=dict)  # unit_index -> message
    in_flight: set = field(default_factory=set)


@dataclass
class ExecResult:
    ledger: RunLedger
    agg: aggregate.AggState


def _execute_unit(unit: RunUnit, point: ParameterPoint, logic_factory, recorders, max_steps) -> list:
    """Run one unit to completion and return its observation buffer."""
    ctx = RunContext(point, unit, recorders)
    logic = logic_factory()
    ctx._fire(timepoints.BEFORE_RUN)
    logic.init_run(ctx)
    while max_steps is None or ctx.step_index < max_steps:
        ctx._fire(timepoints.BEFORE_STEP)
        keep_going = logic.step(ctx)
        ctx._fire(timepoints.AFTER_STEP)
        ctx.step_index += 1
        if not keep_going:
            break
    logic.finish_run(ctx)
    ctx._fire(timepoints.AFTER_RUN)
    return ctx._buffer


def _describe(exc: BaseException) -> str:
    return f"{type(exc).__name__}: {exc}"


# Worker-process state, installed once per process by the pool initializer.
_WORKER_STATE = None


def _worker_init(space, logic_factory, recorders, max_steps):
    global _WORKER_STATE
    _WORKER_STATE = (space, logic_factory, recorders, max_steps)


def _worker_run(unit: RunUnit):
    space, logic_factory, recorders, max_steps = _WORKER_STATE
    point = space.point(unit.point_index)
    try:
        return ("ok", unit.unit_index, _execute_unit(unit, point, logic_factory, recorders, max_steps))
    except Exception as exc:
        return ("fail", unit.unit_index, _describe(exc))


class _EventLog:
    """One structured line per progress event, machine-parsable."""

    def __init__(self, stream):
        self.stream = stream

    def _write(self, text: str) -> None:
        if self.stream is None:
            return
        stamp = datetime.now(timezone.utc).isoformat()
        self.stream.write(f"EVT {stamp} {text}\n")
        self.stream.flush()

    def unit(self, kind: str, unit: RunUnit) -> None:
        self._write(f"{kind} unit={unit.unit_index} point={unit.point_index} repeat={unit.repeat_index}")

    def task(self, kind: str, point_index: int) -> None:
        self._write(f"{kind} point={point_index}")


def execute(
    space: ParameterSpace,
    repeats: int,
    units: Sequence[RunUnit],
    logic_factory: Callable[[], TaskLogic],
    *,
    rules: Sequence[aggregate.AggregationRule] = (),
    agg: Optional[aggregate.AggState] = None,
    ledger: Optional[RunLedger] = None,
    workers: int = 1,
    recorders: Optional[Mapping] = None,
    max_steps: Optional[int] = None,
    on_commit: Optional[Callable] = None,
    log=None,
) -> ExecResult:
    """Execute units on a pool of `workers` processes (inline when 1).

    Every unit runs exactly once; its buffered observations commit
    atomically on the coordinator, or the unit is marked failed if task
    logic, a recorder, or rule evaluation raised. on_commit(unit_index,
    buffer) runs after each commit and may raise AbortExperiment to stop
    the run at a commit boundary.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if ledger is None:
        ledger = RunLedger(space.point_count * repeats)
    if agg is None:
        agg = aggregate.AggState(tuple(rules))
    recorders = dict(recorders or {})
    emit = _EventLog(log)

    units = [u for u in units if u.unit_index not in ledger.completed]
    if len({u.unit_index for u in units}) != len(units):
        raise PlanError("duplicate unit indices in dispatch list")

    completed_per_point = Counter(u // repeats for u in ledger.completed)

    def fire_task_point(tp: str, point_index: int, completed_runs=None) -> None:
        emit.task("task_begin" if tp == timepoints.BEFORE_TASK else "task_end", point_index)
        tctx = TaskContext(space.point(point_index), completed_runs)
        for recorder in recorders.get(tp, ()):
            try:
                recorder(tctx)
            except Exception as exc:
                raise EngineError(f"recorder at {tp} failed: {_describe(exc)}") from exc

    for point_index in sorted({u.point_index for u in units}):
        fire_task_point(timepoints.BEFORE_TASK, point_index)

    def handle(result) -> None:
        status, unit_index, payload = result
        unit = by_index[unit_index]
        ledger.in_flight.discard(unit_index)
        if status == "ok":
            point = space.point(unit.point_index)
            try:
                agg.commit_unit(unit_index, point.assignments, payload)
            except (aggregate.CommitError, aggregate.RuleEvalError) as exc:
                status, payload = "fail", _describe(exc)
        if status == "fail":
            ledger.failed[unit_index] = payload
            emit.unit("fail", unit)
            return
        ledger.completed.add(unit_index)
        emit.unit("commit", unit)
        completed_per_point[unit.point_index] += 1
        if completed_per_point[unit.point_index] == repeats:
            fire_task_point(timepoints.AFTER_TASK, unit.point_index, repeats)
        if on_commit is not None:
            on_commit(unit_index, payload)

    by_index = {u.unit_index: u for u in units}

    if workers == 1:
        for unit in units:
            ledger.in_flight.add(unit.unit_index)
            emit.unit("start", unit)
            point = space.point(unit.point_index)
            try:
                result = ("ok", unit.unit_index, _execute_unit(unit, point, logic_factory, recorders, max_steps))
            except Exception as exc:
                result = ("fail", unit.unit_index, _describe(exc))
            handle(result)
        return ExecResult(ledger, agg)

    methods = multiprocessing.get_all_start_methods()
    mp_context = multiprocessing.get_context("fork" if "fork" in methods else methods[0])
    pool = futures.ProcessPoolExecutor(
        max_workers=workers,
        mp_context=mp_context,
        initializer=_worker_init,
        initargs=(space, logic_factory, recorders, max_steps),
    )
    queue = deque(units)
    pending: dict = {}
    try:
        while queue or pending:
            while queue and len(pending) < workers * 2:
                unit = queue.popleft()
                ledger.in_flight.add(unit.unit_index)
                emit.unit("start", unit)
                pending[pool.submit(_worker_run, unit)] = unit
            done, _ = futures.wait(pending, return_when=futures.FIRST_COMPLETED)
            for fut in done:
                del pending[fut]
                try:
                    result = fut.result()
                except Exception as exc:
                    raise EngineError(f"worker pool failure: {_describe(exc)}") from exc
                handle(result)
    finally:
        pool.shutdown(wait=True, cancel_futures=True)
    return ExecResult(ledger, agg)
