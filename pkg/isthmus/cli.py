"""
Command line interface of the engine. Exit codes: 0 on success, 1 on runtime
errors, 2 on configuration errors.
"""

import asyncio
import csv
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Awaitable, Callable, NoReturn, Optional, TypeVar

import click

from isthmus.config.errors import ConfigError
from isthmus.config.loader import load_config
from isthmus.env import EnvironmentSettings
from isthmus.errors import IsthmusError
from isthmus.monitor.logs import configure_logging
from isthmus.orchestrator.engine import Engine
from isthmus.orchestrator.process import use_shutdown_handler
from isthmus.orchestrator.runs import RunOutcome
from isthmus.scoring.training import Hyperparameters, read_outcomes
from isthmus.settings.json import json_settings
from isthmus.simharness.scenario import load_scenario
from isthmus.simharness.server import serve
from isthmus.store.models import EXPORT_COLUMNS

EXIT_RUNTIME = 1
EXIT_CONFIG = 2

T = TypeVar("T")


@dataclass
class CliContext:
    settings: EnvironmentSettings
    config_path: Path
    data_dir: Optional[Path]


def _echo_json(data: Any) -> None:
    click.echo(json_settings.pretty_dumps(data))


def _fail(error: Exception) -> NoReturn:
    if isinstance(error, ConfigError):
        for issue in error.issues:
            click.echo(f"ERROR {issue.path}: {issue.message}", err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(f"ERROR {error}", err=True)
    sys.exit(EXIT_RUNTIME)


def _with_engine(
    context: CliContext, action: Callable[[Engine], Awaitable[T]]
) -> T:
    """Loads the configuration, opens the engine and runs `action` with it."""

    async def main() -> T:
        config = load_config(context.config_path)
        engine = Engine(
            config,
            settings=context.settings,
            data_dir=context.data_dir,
            config_path=context.config_path,
        )
        configure_logging(
            engine.layout.root,
            context.settings.log_level,
            stderr=context.settings.log_stderr,
        )
        async with engine:
            return await action(engine)

    try:
        return asyncio.run(main())
    except IsthmusError as error:
        _fail(error)


@click.group()
@click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Configuration file (default: ISTHMUS_CONFIG or isthmus.json).",
)
@click.option(
    "--data-dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Data directory, overriding the configuration and ISTHMUS_DATA_DIR.",
)
@click.pass_context
def main(ctx: click.Context, config_path: Optional[Path], data_dir: Optional[Path]):
    """Config-driven clinical scoring pipelines."""
    settings = EnvironmentSettings()
    ctx.obj = CliContext(settings, config_path or settings.config_path, data_dir)


@main.command()
@click.argument("path", type=click.Path(path_type=Path), required=False)
@click.pass_obj
def validate(context: CliContext, path: Optional[Path]):
    """Validates a configuration file and every artifact it references."""
    try:
        config = load_config(path or context.config_path)
    except ConfigError as error:
        _fail(error)
    click.echo(
        f"OK {len(config.sources)} sources, {len(config.pipelines)} pipelines"
    )


@main.command("run-once")
@click.argument("pipeline", required=False)
@click.pass_obj
def run_once(context: CliContext, pipeline: Optional[str]):
    """Runs one cycle of a pipeline, or of every pipeline."""

    async def action(engine: Engine):
        if pipeline:
            return [await engine.run_cycle(pipeline)]
        return await engine.run_all_once()

    runs = _with_engine(context, action)
    _echo_json([run.to_dict() for run in runs])
    if any(run.outcome is RunOutcome.FAILED for run in runs):
        sys.exit(EXIT_RUNTIME)


@main.command()
@click.option(
    "--duration",
    type=float,
    default=None,
    help="Stops the daemon after this many seconds.",
)
@click.pass_obj
def daemon(context: CliContext, duration: Optional[float]):
    """Schedules every pipeline until SIGINT or SIGTERM."""

    async def action(engine: Engine):
        stop = asyncio.Event()
        remove_handler = None
        if context.settings.add_signal_handler:
            remove_handler = use_shutdown_handler(stop)
        if duration is not None:
            asyncio.get_event_loop().call_later(duration, stop.set)
        try:
            return await engine.run_daemon(stop)
        finally:
            if remove_handler is not None:
                remove_handler()

    _echo_json({"cycles": _with_engine(context, action)})


@main.command()
@click.argument("pipeline")
@click.option("--from", "from_batch", default=None, help="First batch id.")
@click.option("--to", "to_batch", default=None, help="Last batch id.")
@click.pass_obj
def replay(
    context: CliContext,
    pipeline: str,
    from_batch: Optional[str],
    to_batch: Optional[str],
):
    """Scores archived batches again into the replay table."""

    async def action(engine: Engine):
        return engine.replay(pipeline, from_batch, to_batch)

    runs = _with_engine(context, action)
    _echo_json([run.to_dict() for run in runs])


@main.command()
@click.argument("model")
@click.argument("version", type=int)
@click.pass_obj
def promote(context: CliContext, model: str, version: int):
    """Makes a model version the one live pipelines score with."""

    async def action(engine: Engine):
        return engine.promote(model, version)

    if _with_engine(context, action):
        click.echo(f"Promoted {model} v{version}")
    else:
        click.echo(f"{model} v{version} is already current")


@main.command()
@click.option("--pipeline", required=True, help="Pipeline whose scores to export.")
@click.option(
    "--format",
    "output_format",
    type=click.Choice(["csv", "jsonl"]),
    default="csv",
    show_default=True,
)
@click.option(
    "--output",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Output file (default: standard output).",
)
@click.pass_obj
def export(
    context: CliContext, pipeline: str, output_format: str, output: Optional[Path]
):
    """Exports the scores of a pipeline."""

    async def action(engine: Engine):
        engine.definition(pipeline)
        return engine.services.store.export_rows(pipeline)

    rows = _with_engine(context, action)
    stream = open(output, "w", encoding="utf8", newline="") if output else sys.stdout
    try:
        if output_format == "csv":
            writer = csv.DictWriter(stream, fieldnames=EXPORT_COLUMNS)
            writer.writeheader()
            for row in rows:
                writer.writerow(
                    {
                        key: (
                            json_settings.canonical_dumps(value)
                            if isinstance(value, (list, dict))
                            else value
                        )
                        for key, value in row.items()
                    }
                )
        else:
            for row in rows:
                stream.write(json_settings.canonical_dumps(row) + "\n")
    finally:
        if output:
            stream.close()


@main.command()
@click.pass_obj
def status(context: CliContext):
    """Prints checkpoints, counters and pending alerts."""

    async def action(engine: Engine):
        return engine.status()

    _echo_json(_with_engine(context, action))


@main.command()
@click.argument("model")
@click.option(
    "--outcomes",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="JSON file with the outcome label of each patient.",
)
@click.option("--epochs", type=int, default=1000, show_default=True)
@click.option("--lr", type=float, default=0.5, show_default=True)
@click.option("--l2", type=float, default=0.0, show_default=True)
@click.pass_obj
def retrain(
    context: CliContext,
    model: str,
    outcomes: Path,
    epochs: int,
    lr: float,
    l2: float,
):
    """Fits and registers a new silent version of a model."""

    async def action(engine: Engine):
        hyper = Hyperparameters(learning_rate=lr, epochs=epochs, l2=l2)
        return engine.retrain(model, read_outcomes(outcomes), hyper)

    signature = _with_engine(context, action)
    click.echo(f"Registered {signature.model_id} v{signature.version}")


@main.command("verify-archive")
@click.pass_obj
def verify_archive(context: CliContext):
    """Checks the hash chains of the archive and the audit log."""

    async def action(engine: Engine):
        return engine.verify_archive()

    violations = _with_engine(context, action)
    for violation in violations:
        click.echo(f"VIOLATION {violation}")
    if violations:
        sys.exit(EXIT_RUNTIME)
    click.echo("OK")


@main.command()
@click.argument("pipeline")
@click.pass_obj
def drift(context: CliContext, pipeline: str):
    """Computes the PSI of every feature of a pipeline."""

    async def action(engine: Engine):
        return engine.evaluate_drift(pipeline)

    _echo_json([report.to_dict() for report in _with_engine(context, action)])


@main.command()
@click.argument("script", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def harness(script: Path, port: int, host: str):
    """Serves the mock EHR of a scenario script until interrupted."""
    try:
        handle = serve(load_scenario(script), port, host=host)
    except IsthmusError as error:
        _fail(error)
    click.echo(f"Serving {script.name} at {handle.url}")
    with handle:
        try:
            while True:
                time.sleep(1)
        except KeyboardInterrupt:
            pass
