"""Command line entry point: one subcommand per pipeline stage."""

from __future__ import annotations

import dataclasses
import json
import logging
import sys

import click

from fplplus.config import ConfigError, PipelineConfig
from fplplus.pipeline import RUNNERS, MissingStageError, StageError, Workspace


class _State:
    cfg: PipelineConfig
    ws: Workspace
    resume: bool
    force: bool


def _progress(record: dict) -> None:
    parts = " ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in record.items())
    click.echo(parts, err=True)


@click.group(invoke_without_command=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="TOML config file.")
@click.option("--seed", type=int, default=None, help="Root seed, overrides the config.")
@click.option("--workdir", type=click.Path(file_okay=False), default="work", show_default=True)
@click.option("--resume", is_flag=True, help="Skip stages that already completed with the same config.")
@click.option("--force", is_flag=True, help="Overwrite a non-empty stage output directory.")
@click.option("--print-config", is_flag=True, help="Print the effective config as TOML and exit.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, config_path, seed, workdir, resume, force, print_config, verbose):
    """Cross-modality domain adaptation pipeline for 3D segmentation."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = PipelineConfig.load(config_path) if config_path else PipelineConfig()
    except ConfigError as exc:
        raise click.UsageError(f"config error: {exc}") from None
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    if print_config:
        click.echo(cfg.to_toml(), nl=False)
        ctx.exit(0)
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())
        ctx.exit(0)
    state = _State()
    state.cfg, state.ws, state.resume, state.force = cfg, Workspace(workdir), resume, force
    ctx.obj = state


def _stage_command(name: str, trains: bool):
    @click.pass_obj
    def command(state: _State):
        kwargs = {"progress": _progress} if trains else {}
        try:
            entry = RUNNERS[name](state.cfg, state.ws, resume=state.resume, force=state.force, **kwargs)
        except (MissingStageError, StageError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        status = "skipped (up to date)" if entry.get("skipped") else f"done in {entry['wall_time_s']:.1f}s"
        click.echo(f"{name}: {status}")
        if name == "eval":
            for row in entry["summary"]["means"]:
                click.echo(json.dumps(row))

    command.__name__ = name.replace("-", "_")
    return click.command(name, help=f"Run the {name} stage.")(command)


for _name, _trains in (
    ("synth", False),
    ("translate", True),
    ("train-generator", True),
    ("build-records", False),
    ("train-segmentor", True),
    ("infer", False),
    ("eval", False),
):
    main.add_command(_stage_command(_name, _trains))


if __name__ == "__main__":
    main()
