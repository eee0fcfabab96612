"""Time point names shared by the engine, aggregation rules, and config parsing.

The six built-in points mark the task flow: task begin/end fire on the
coordinator once per parameter point, the other four fire on the worker
inside each run unit. User points are spelled ``user:<name>`` and fired
by task code via the run context.
"""

from __future__ import annotations

import re

BEFORE_TASK = "before_task"
BEFORE_RUN = "before_run"
BEFORE_STEP = "before_step"
AFTER_STEP = "after_step"
AFTER_RUN = "after_run"
AFTER_TASK = "after_task"

BUILTIN = (BEFORE_TASK, BEFORE_RUN, BEFORE_STEP, AFTER_STEP, AFTER_RUN, AFTER_TASK)
TASK_LEVEL = (BEFORE_TASK, AFTER_TASK)
RUN_LEVEL = (BEFORE_RUN, BEFORE_STEP, AFTER_STEP, AFTER_RUN)

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def user(name: str) -> str:
    """Token for a user-defined time point."""
    if not _NAME_RE.match(name):
        raise ValueError(f"invalid time point name: {name!r}")
    return f"user:{name}"


def is_user(token: str) -> bool:
    return token.startswith("user:")


def is_valid(token: str) -> bool:
    """True for the six built-ins and well-formed user:<name> tokens."""
    if token in BUILTIN:
        return True
    return is_user(token) and _NAME_RE.match(token[5:]) is not None
