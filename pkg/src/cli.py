"""
Command-line entry point: ``octseg prepare|train|evaluate|explain|run``.

Exit codes: 0 success, 1 usage/config, 2 data, 3 training I/O, 4 checkpoint, 5 XAI.
"""

import asyncio
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
import typer
import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from .core.console import configure_logging, error_console
from .core.errors import ConfigError, OctSegError
from .core.models import EnvOverrides, RunConfig
from .nets.segnet import check_layer_names
from .workflow.pipeline_graph import PipelineGraph

logger = logging.getLogger(__name__)

app = typer.Typer(add_completion=False, help="8-class retinal layer segmentation with Grad-CAM explanations.")

ConfigOption = typer.Option(..., "--config", "-c", help="YAML run configuration")
CheckpointOption = typer.Option(None, "--checkpoint", help="Checkpoint file (defaults to the run's best.pt)")


def _split_list(values: Optional[List[str]]) -> List[str]:
    return [item.strip() for value in values or [] for item in value.split(",") if item.strip()]


def load_run_config(path: Path, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Parse and validate the YAML run file, then apply environment and CLI overrides.

    Raises:
        ConfigError: unreadable file or any invalid value.
        LayerNotFoundError: an xai layer the configured network does not register.
    """
    load_dotenv()
    try:
        raw = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"Config {path} must be a mapping of sections")

    # a top-level loss section belongs to training
    if "loss" in raw:
        raw.setdefault("training", {})["loss"] = raw.pop("loss")

    env = EnvOverrides()
    if env.data_dir is not None:
        raw.setdefault("data", {})["path"] = str(env.data_dir)
    for section, values in (overrides or {}).items():
        raw.setdefault(section, {}).update(values)

    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}:\n{e}") from e
    check_layer_names(config.model, config.xai.layers)
    return config


def _execute(command: str, config_path: Path, checkpoint: Optional[Path] = None, ids: Optional[List[str]] = None,
             overrides: Optional[Dict[str, Any]] = None) -> int:
    try:
        config = load_run_config(config_path, overrides)
        graph = PipelineGraph(config)
        state = asyncio.run(graph.run_pipeline(command, checkpoint, _split_list(ids)))
    except OctSegError as e:
        error_console.print(f"[red]{type(e).__name__}: {e}[/red]")
        return e.exit_code
    return int(state.get("exit_code", 0))


@app.callback()
def _global_options(verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging")):
    configure_logging(verbose)


@app.command()
def prepare(config: Path = ConfigOption) -> int:
    """Load, summarize, split and cache the dataset."""
    return _execute("prepare", config)


@app.command()
def train(config: Path = ConfigOption) -> int:
    """Train the network; writes the best checkpoint and the CSV log."""
    return _execute("train", config)


@app.command()
def evaluate(config: Path = ConfigOption, checkpoint: Optional[Path] = CheckpointOption) -> int:
    """Write metrics, tables, curves and comparison renders."""
    return _execute("evaluate", config, checkpoint)


@app.command()
def explain(
    config: Path = ConfigOption,
    checkpoint: Optional[Path] = CheckpointOption,
    ids: Optional[List[str]] = typer.Option(None, "--ids", help="Source ids to explain (repeat or comma-separate)"),
    layer: Optional[str] = typer.Option(None, "--layer", help="Registered layer name"),
    classes: Optional[str] = typer.Option(None, "--classes", help="'all' or comma-separated class ids"),
) -> int:
    """Grad-CAM overlays and heatmap statistics per class."""
    xai: Dict[str, Any] = {}
    if layer:
        xai["layers"] = [layer]
    if classes:
        try:
            xai["classes"] = "all" if classes.strip() == "all" else [int(c) for c in _split_list([classes])]
        except ValueError:
            raise click.BadParameter(f"expected 'all' or integers, got {classes!r}", param_hint="--classes")
    return _execute("explain", config, checkpoint, ids, {"xai": xai} if xai else None)


@app.command()
def run(config: Path = ConfigOption) -> int:
    """prepare -> train -> evaluate -> explain."""
    return _execute("run", config)


def main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and return its exit code; click usage errors map to 1."""
    try:
        result = app(args=argv, prog_name="octseg", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return 1
    except click.exceptions.Abort:
        error_console.print("Aborted")
        return 1
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    raise SystemExit(main())
