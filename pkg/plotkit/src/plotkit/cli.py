"""Command-line entry point: render figures from a JSON figure spec."""
from __future__ import annotations

import sys

import click

from .figure import FigureSpec, SchemaError, render_comparison, render_veff


@click.group()
def cli() -> None:
    """Figure generation from exported simulation artifacts."""


@cli.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="JSON figure specification.")
def figure(spec_path) -> None:
    """Render the multi-panel comparison figure described by --spec."""
    out = render_comparison(FigureSpec.from_json(spec_path))
    click.echo(str(out))


@cli.command()
@click.option("--summary", "summary_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="GHD summary JSON with veff samples.")
@click.option("--out", "out_path", type=click.Path(), required=True,
              help="Output image path (.png or .svg).")
def veff(summary_path, out_path) -> None:
    """Render the effective-velocity figure."""
    out = render_veff(summary_path, out_path)
    click.echo(str(out))


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except (SchemaError, click.UsageError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)


if __name__ == "__main__":
    main()
