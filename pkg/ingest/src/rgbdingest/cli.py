"""Command line entry point: a single export command.

    rgbd-export DATASET -o stream.dmos [--config export.yaml]

Exit codes: 0 success, 1 usage errors, 2 unreadable or invalid input data.
Output is deterministic; two runs over the same dataset write identical
bytes and print identical text.
"""

from __future__ import annotations

from typing import Optional, Sequence

import click

from .errors import ConfigError, DatasetError, IngestError
from .export import ExportConfig, export_dataset


@click.command()
@click.argument("dataset", type=click.Path(exists=True, file_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False),
              help="Path of the .dmos stream to write.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="YAML file overriding export thresholds.")
def export(dataset: str, output: str, config_path: Optional[str]) -> None:
    """Convert a posed RGBD dataset into an observation stream."""
    config = ExportConfig.from_yaml(config_path) if config_path else ExportConfig()
    report = export_dataset(dataset, output, config)
    click.echo(f"frames: {report.frames}")
    click.echo(f"observations: {report.observations}")
    click.echo(f"merged detections: {report.merged_detections}")
    click.echo(f"dropped open segments: {report.dropped_open_segments}")
    click.echo(f"dropped small observations: {report.dropped_small_observations}")
    click.echo(f"keyframes: {report.keyframes}")
    click.echo(f"wrote {report.records} records to {output}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        rv = export.main(args=argv, prog_name="rgbd-export", standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 2 if isinstance(exc, click.FileError) else 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except (DatasetError, ConfigError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except IngestError as exc:
        click.echo(f"internal error: {exc}", err=True)
        return 3
    return 0 if rv is None else int(rv)


if __name__ == "__main__":
    raise SystemExit(main())
