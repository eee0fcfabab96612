"""Command-line front end: sweepforge run | resume | inspect | plot.

Exit codes are stable: 0 success, 1 completed with failed units,
2 config error, 3 checkpoint error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import checkpoint as ckpt
from . import demo_epidemic  # noqa: F401  (registers the demo tasks)
from . import runner, tasks
from .config import Config, ConfigError, load_config
from .plot import TemplateError

EXIT_OK = 0
EXIT_FAILED_UNITS = 1
EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sweepforge",
        description="Run configuration-driven parameter sweeps in parallel, "
        "with checkpoint/resume and Gnuplot output.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--task", help="registered task name (default: the run name from [task])")
        p.add_argument(
            "--workers",
            type=int,
            help="worker process count (default: $SWEEPFORGE_WORKERS, else the config workers key)",
        )
        p.add_argument("--out", default=".", help="output directory (default: current directory)")

    p_run = sub.add_parser("run", help="execute the full plan from a config file")
    p_run.add_argument("config", help="path to the config file")
    common(p_run)

    p_resume = sub.add_parser("resume", help="continue a run from a checkpoint file")
    p_resume.add_argument("config", help="path to the config file")
    p_resume.add_argument("checkpoint", help="path to the checkpoint file")
    common(p_resume)

    p_inspect = sub.add_parser("inspect", help="summarize a checkpoint file (read-only)")
    p_inspect.add_argument("checkpoint", help="path to the checkpoint file")

    p_plot = sub.add_parser("plot", help="re-emit tables and the plot script from a checkpoint")
    p_plot.add_argument("config", help="path to the config file")
    p_plot.add_argument("checkpoint", help="path to the checkpoint file")
    p_plot.add_argument("--out", default=".", help="output directory")
    return parser


def _workers_arg(args) -> int | None:
    if args.workers is not None:
        return args.workers
    env = os.environ.get("SWEEPFORGE_WORKERS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError([(0, f"SWEEPFORGE_WORKERS is not an integer: {env!r}")]) from None
    return None


def _select_task(config: Config, args):
    name = args.task or config.name
    try:
        return tasks.get_task(name)
    except KeyError as exc:
        raise ConfigError([(0, str(exc))]) from None


def _print_config_error(path: str, exc: ConfigError) -> None:
    for line, msg in exc.errors:
        where = f"{path}:{line}" if line else path
        print(f"{where}: {msg}", file=sys.stderr)


def _cmd_run(args) -> int:
    config = load_config(args.config)
    factory = _select_task(config, args)
    result = runner.run_experiment(
        config,
        factory,
        workers=_workers_arg(args),
        out_dir=args.out,
        log=sys.stderr,
    )
    print(result.summary())
    return EXIT_FAILED_UNITS if result.failed else EXIT_OK


def _cmd_resume(args) -> int:
    config = load_config(args.config)
    factory = _select_task(config, args)
    cp = ckpt.load_checkpoint(args.checkpoint)
    result = runner.run_experiment(
        config,
        factory,
        workers=_workers_arg(args),
        out_dir=args.out,
        resume_from=cp,
        log=sys.stderr,
    )
    print(result.summary())
    return EXIT_FAILED_UNITS if result.failed else EXIT_OK


def _cmd_inspect(args) -> int:
    cp = ckpt.load_checkpoint(args.checkpoint)
    print(f"checkpoint {args.checkpoint}")
    print(ckpt.describe(cp))
    return EXIT_OK


def _cmd_plot(args) -> int:
    config = load_config(args.config)
    cp = ckpt.load_checkpoint(args.checkpoint)
    _, ledger, agg = ckpt.resume_state(cp, config)
    result = runner.RunResult(config, ledger, agg)
    result.tables = agg.finalize_all()
    runner.emit_results(result, args.out)
    cells = sum(agg.cell_count(r.result_id) for r in agg.rules)
    print(f"plotted rules={len(result.tables)} cells={cells} script={result.script_path}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    config_path = getattr(args, "config", None)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "resume":
            return _cmd_resume(args)
        if args.command == "inspect":
            return _cmd_inspect(args)
        return _cmd_plot(args)
    except ConfigError as exc:
        _print_config_error(config_path or "<config>", exc)
        return EXIT_CONFIG
    except TemplateError as exc:
        print(f"plot template error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ckpt.CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
