"""Named task registry.

Tasks selectable from the CLI register a TaskLogic factory under a name;
library users can also pass factories directly to the engine or runner.
"""

from __future__ import annotations

import time

from .engine import TaskLogic

_REGISTRY: dict = {}


def register_task(name: str):
    """Decorator: make a TaskLogic factory selectable by name."""

    def add(factory):
        if name in _REGISTRY:
            raise ValueError(f"task {name!r} already registered")
        _REGISTRY[name] = factory
        return factory

    return add


def get_task(name: str):
    try:
        return _REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY)) or "(none)"
        raise KeyError(f"no task named {name!r}; registered tasks: {known}") from None


def task_names() -> list:
    return sorted(_REGISTRY)


@register_task("noop")
class NoopTask(TaskLogic):
    """Does nothing; useful for exercising pure scheduling."""


@register_task("busywait")
class BusyWaitTask(TaskLogic):
    """Spins the CPU for `spin_ms` milliseconds (default 100) in a single
    step; an embarrassingly parallel load for speedup checks."""

    def step(self, ctx) -> bool:
        ms = float(ctx.point.assignments.get("spin_ms", 100))
        deadline = time.monotonic() + ms / 1000.0
        x = 0
        while time.monotonic() < deadline:
            x += 1
        ctx.record("spins", x)
        return False
