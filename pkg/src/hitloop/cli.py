"""Command-line entry points.

Exit codes: 0 success, 2 config error, 3 reviews still pending,
4 upstream annotator failure.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from . import orchestrator
from .annotators import AnnotatorTransportError
from .corpus import CorpusError, convert_tsv
from .orchestrator import ConfigError, PendingReviewsError
from .review.api import create_app
from .review.store import ReviewStore

EXIT_CONFIG = 2
EXIT_PENDING = 3
EXIT_ANNOTATOR = 4


def _load(config_path: str) -> orchestrator.RunConfig:
    try:
        return orchestrator.load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="debug logging")
def main(verbose: bool) -> None:
    """Human-in-the-loop annotation pipeline."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("tsv_in", type=click.Path(exists=True))
@click.argument("jsonl_out", type=click.Path())
def convert(tsv_in: str, jsonl_out: str) -> None:
    """Convert a tab-separated corpus dump to the canonical JSONL format."""
    try:
        corpus = convert_tsv(tsv_in, jsonl_out)
    except CorpusError as exc:
        click.echo(f"conversion failed: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(f"wrote {len(corpus)} units to {jsonl_out}")


@main.command()
@click.option("-c", "--config", "config_path", required=True, type=click.Path(exists=True))
def calibrate(config_path: str) -> None:
    """Select accept/flag thresholds on the gold subset."""
    config = _load(config_path)
    try:
        outcomes = orchestrator.run_calibration(config)
    except AnnotatorTransportError as exc:
        click.echo(f"annotator failure: {exc}", err=True)
        sys.exit(EXIT_ANNOTATOR)
    except (ConfigError, CorpusError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    for task, outcome in outcomes.items():
        flag = "" if outcome.meets_constraint else "  [below agreement constraint]"
        click.echo(
            f"{task.value}: selected confidence>={outcome.selected.confidence_threshold:g} "
            f"sd<={outcome.selected.sd_threshold:g}{flag}"
        )


@main.command()
@click.option("-c", "--config", "config_path", required=True, type=click.Path(exists=True))
@click.option(
    "--thresholds",
    multiple=True,
    help="override selected thresholds, e.g. --thresholds quality=90,14",
)
def apply(config_path: str, thresholds: tuple[str, ...]) -> None:
    """Run the accept/flag workflow on the remainder of the corpus."""
    config = _load(config_path)
    selected = None
    if thresholds:
        from .corpus import TaskKind
        from .ensemble import ThresholdPair

        selected = {}
        try:
            for spec in thresholds:
                task, pair = spec.split("=", 1)
                conf, sd = pair.split(",")
                selected[TaskKind(task)] = ThresholdPair(float(conf), float(sd))
        except ValueError as exc:
            click.echo(f"bad --thresholds value: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
    try:
        report = orchestrator.run_apply(config, selected)
    except AnnotatorTransportError as exc:
        click.echo(f"annotator failure: {exc}", err=True)
        sys.exit(EXIT_ANNOTATOR)
    except (ConfigError, CorpusError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    if report.overall_her is not None:
        click.echo(f"overall effort reduction: {report.overall_her:.1f}%")
    if report.pending:
        click.echo(f"{report.pending} flagged units queued for human review")
        sys.exit(EXIT_PENDING)


@main.command()
@click.option("-c", "--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--temperatures", default=None, help="comma-separated sweep, e.g. 0,0.5,1")
@click.option("--variants", default=None, help="comma-separated variant ids to sweep")
def sensitivity(config_path: str, temperatures: str | None, variants: str | None) -> None:
    """Repeat annotation across temperatures or prompt variants and report
    per-unit label entropy and SD."""
    config = _load(config_path)
    kwargs = {}
    try:
        if temperatures:
            kwargs["temperatures"] = [float(t) for t in temperatures.split(",")]
        if variants:
            kwargs["variants"] = [orchestrator._parse_variant(v) for v in variants.split(",")]
        stats = orchestrator.run_sensitivity(config, **kwargs)
    except (ConfigError, ValueError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    for (annotator, task), (ent, sd) in sorted(stats.groups.items()):
        click.echo(f"{annotator:<12} {task:<14} entropy {ent:.4f}  label_sd {sd:.4f}")


@main.command()
@click.option("-c", "--config", "config_path", required=True, type=click.Path(exists=True))
def report(config_path: str) -> None:
    """Fold reviewed human labels into the final label files and rescore."""
    config = _load(config_path)
    try:
        run_report = orchestrator.complete_report(config)
    except PendingReviewsError as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_PENDING)
    except (ConfigError, CorpusError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    if run_report.overall_her is not None:
        click.echo(f"overall effort reduction: {run_report.overall_her:.1f}%")
    for task, metrics in run_report.metrics.items():
        if metrics is not None:
            click.echo(f"== {task.value} ==")
            click.echo(metrics.format_table())


@main.command(name="review-serve")
@click.option("--log", "log_path", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8731, type=int)
@click.option("--static", "static_dir", default=None, type=click.Path(exists=True))
@click.option("--token", default=None, help="shared bearer token")
def review_serve(log_path: str, host: str, port: int, static_dir: str | None, token: str | None) -> None:
    """Serve the review queue API (and the UI bundle, if built)."""
    import uvicorn

    store = ReviewStore(log_path)
    app = create_app(store, static_dir=Path(static_dir) if static_dir else None, token=token)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
