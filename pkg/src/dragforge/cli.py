"""Command-line entry points."""

from __future__ import annotations

import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from .errors import ConfigError, DragforgeError
from .pipeline import load_config, run_pipeline

log = logging.getLogger("dragforge")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


@click.group()
def main() -> None:
    """Point-based drag editing engine."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--verbose", is_flag=True, default=False)
def run(config_path: str, out_dir: str, seed: int, verbose: bool) -> None:
    """Run segment -> mask -> drag -> sample -> evaluate from a config."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    np.random.seed(seed)
    sys.exit(cli_run(config_path, out_dir))


def cli_run(config_path: str, out_dir: str) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_pipeline(cfg, out_dir, base_dir=Path(config_path).parent)
    except DragforgeError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    log.info("mean distance %.3f, converged %s", report.mean_dist, report.converged)
    return EXIT_OK


@main.command()
@click.option("--bind", default=None, help="host:port (overridden by DRAGFORGE_BIND)")
@click.option("--session-root", default=None, type=click.Path())
@click.option(
    "--ui-dir",
    default="frontend/dist",
    show_default=True,
    type=click.Path(),
    help="built UI to serve at /; skipped when the directory is absent",
)
@click.option("--verbose", is_flag=True, default=False)
def serve(
    bind: str | None, session_root: str | None, ui_dir: str, verbose: bool
) -> None:
    """Serve the session HTTP API (and the UI when built)."""
    import uvicorn

    from .service import create_app

    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING)
    address = os.environ.get("DRAGFORGE_BIND") or bind or "127.0.0.1:8787"
    host, _, port = address.rpartition(":")
    app = create_app(session_root=session_root, ui_dir=ui_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))


@main.command("make-scenario")
@click.argument("name", type=click.Choice(["bump_drag", "two_material"]))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True, type=int)
def make_scenario(name: str, out_dir: str, seed: int) -> None:
    """Write a synthetic scene's input files and runnable config."""
    from .scenarios import bump_drag_scenario, two_material_scenario, write_scenario

    scn = bump_drag_scenario() if name == "bump_drag" else two_material_scenario(seed)
    path = write_scenario(scn, out_dir)
    click.echo(str(path))


if __name__ == "__main__":
    main()
