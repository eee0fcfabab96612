"""sweepforge: configuration-driven parameter sweeps run in parallel,
with streaming aggregation, portable checkpoint/resume, cloneable network
structures, and Gnuplot output."""

from .aggregate import (
    AggregationRule,
    AggState,
    PartialStat,
    ResultTable,
    eval_condition,
    merge,
    observe,
    parse_rule,
)
from .checkpoint import (
    Checkpoint,
    CheckpointError,
    load_checkpoint,
    resume_state,
    snapshot,
    write_checkpoint,
)
from .config import (
    Config,
    ConfigError,
    ParameterPoint,
    ParameterSpace,
    ParameterSpec,
    enumerate_points,
    expand_range,
    load_config,
    parse_config,
)
from .engine import (
    AbortExperiment,
    RunContext,
    RunLedger,
    RunUnit,
    TaskLogic,
    derive_seed,
    execute,
    plan,
)
from .netstruct import NetError, NetworkSet
from .plot import TemplateError, default_script, emit_tables, render
from .runner import RunResult, run_experiment
from .tasks import get_task, register_task, task_names

__version__ = "0.1.0"

__all__ = [
    "AbortExperiment",
    "AggregationRule",
    "AggState",
    "Checkpoint",
    "CheckpointError",
    "Config",
    "ConfigError",
    "NetError",
    "NetworkSet",
    "ParameterPoint",
    "ParameterSpace",
    "ParameterSpec",
    "PartialStat",
    "ResultTable",
    "RunContext",
    "RunLedger",
    "RunResult",
    "RunUnit",
    "TaskLogic",
    "TemplateError",
    "default_script",
    "derive_seed",
    "emit_tables",
    "enumerate_points",
    "eval_condition",
    "execute",
    "expand_range",
    "get_task",
    "load_checkpoint",
    "load_config",
    "merge",
    "observe",
    "parse_config",
    "parse_rule",
    "plan",
    "register_task",
    "render",
    "resume_state",
    "run_experiment",
    "snapshot",
    "task_names",
    "write_checkpoint",
]
